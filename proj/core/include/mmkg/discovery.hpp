#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmkg/encoder.hpp"
#include "mmkg/graph.hpp"
#include "mmkg/scorer.hpp"
#include "mmkg/synthetic.hpp"

namespace mmkg {

enum class LinkStrategy { AT, LA, BL };

const char* link_strategy_name(LinkStrategy s);
LinkStrategy link_strategy_from_name(const std::string& name);

struct LinkPolicy {
    LinkStrategy strategy = LinkStrategy::BL;
    double absolute_threshold = 0.7;  // AT only
    double mu_image = 0.96;           // threshold power, image as label
    double mu_text = 1.0;
    uint32_t k_image = 10;  // top-K candidates entering the popularity estimate
    uint32_t k_text = 2;
    double local_threshold = 0.35;
    uint32_t prefilter_width = 40;
    bool refresh_candidates = false;  // off: one-shot prefilter at t=0

    void validate() const;
};

// Top-W counterparts per node under the initial scorer, descending score,
// ties broken by ascending index. Lists stay empty for held-out nodes.
struct CandidateSet {
    std::vector<std::vector<uint32_t>> per_image;
    std::vector<std::vector<uint32_t>> per_sentence;
};

CandidateSet build_candidates(const PairScorer& scorer, const std::vector<uint32_t>& images,
                              const std::vector<uint32_t>& sentences, uint32_t width, uint32_t total_images,
                              uint32_t total_sentences);

/// Popularity E(node): mean model confidence over the node's top-K
/// highest-confidence candidates.
double estimate_popularity(const std::vector<double>& candidate_confidences, uint32_t k);

/// Label-aware threshold lambda(node) = E^mu.
double label_threshold(double popularity, double mu);

/// Strength of one global link given the pair score and the per-node
/// thresholds. AT compares against the policy's absolute threshold; LA links
/// when either label-aware threshold is cleared; BL averages the two
/// indicators, yielding the weak strength 0.5 when only one clears.
double assign_global(double score, const LinkPolicy& policy, double thr_image, double thr_sentence);

/// Local links gated by the pair's assigned global strength: every
/// (object position, phrase position) whose softmax probability clears
/// local_threshold. Empty when the gate is 0.
std::vector<std::pair<uint32_t, uint32_t>> assign_local(const std::vector<std::vector<double>>& local_probs,
                                                        double global_strength, double local_threshold);

/// One full knowledge-discovery pass: rewrites all global strengths over the
/// candidate pairs with the supplied (previous-iteration) scorer, then the
/// local links for all non-zero global pairs, and bumps the iteration stamp.
/// Strength-0 candidate records are kept so training can read the
/// previous-iteration confidences.
void discovery_pass(const PairScorer& scorer, MultiModalGraph& graph, const SyntheticCorpus& corpus,
                    const CandidateSet& candidates, const LinkPolicy& policy, uint32_t iteration);

/// Scores pairs with the current encoder; node vectors are precomputed once.
/// Context-augmented image encodings (two-hop phrases from the graph) are
/// used when a graph is supplied.
class EncoderScorer : public PairScorer {
public:
    EncoderScorer(const EncoderParams& params, const SyntheticCorpus& corpus,
                  const MultiModalGraph* context_graph = nullptr);

    double global_score(uint32_t image, uint32_t sentence) const override;
    std::vector<std::vector<double>> local_scores(uint32_t image, uint32_t sentence) const override;

private:
    const EncoderParams* params_;
    const SyntheticCorpus* corpus_;
    std::vector<Vec> image_vecs_;
    std::vector<double> image_norms_;
    std::vector<Vec> sentence_vecs_;
    std::vector<double> sentence_norms_;
    std::vector<Vec> phrase_vecs_;
    std::vector<double> phrase_norms_;
    std::vector<double> object_row_norms_;  // per object vocab id
};

}  // namespace mmkg
