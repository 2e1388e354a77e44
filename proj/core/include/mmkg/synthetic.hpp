#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "mmkg/scorer.hpp"
#include "mmkg/tensor.hpp"

namespace mmkg {

// Generation recipe for one latent-concept world. Everything downstream is a
// pure function of (spec, seed).
struct WorldSpec {
    uint32_t n_images = 200;
    uint32_t captions_per_image = 5;
    uint32_t n_heldout_images = 50;  // extra images generated for inductive evaluation
    uint32_t concept_vocab = 150;
    uint32_t concept_base = 0;  // first concept id; lets two worlds use disjoint vocabularies
    uint32_t min_objects_per_image = 4;
    uint32_t max_objects_per_image = 7;
    uint32_t min_phrases_per_caption = 3;
    uint32_t max_phrases_per_caption = 5;
    uint32_t phrase_tokens_per_concept = 2;
    uint32_t distractor_tokens = 40;  // size of the filler-token band
    double distractor_rate = 0.2;     // chance of a filler token after each phrase
    double observation_noise = 0.0;   // sigma on the latent concept-indicator vectors
    double zipf_skew = 1.0;           // concept frequency skew; > 0 manufactures popular nodes
    uint64_t seed = 1;

    uint32_t concept_end() const { return concept_base + concept_vocab; }
    uint32_t distractor_token_base() const { return concept_end() * phrase_tokens_per_concept; }
    uint32_t token_vocab_size() const { return distractor_token_base() + distractor_tokens; }

    void validate() const;
};

struct ObjectInst {
    uint32_t image;
    uint32_t concept_id;
};

struct PhraseInst {
    uint32_t sentence;
    uint32_t first_token;
    uint32_t token_count;
    uint32_t concept_id;
};

// Generated corpora with exact ground truth at both semantic levels.
// Object/phrase node ids are assigned in (owner index, position) order, which
// the JSONL round trip relies on.
struct SyntheticCorpus {
    WorldSpec spec;
    uint32_t object_vocab = 0;
    uint32_t token_vocab = 0;

    std::vector<std::vector<uint32_t>> image_concepts;  // per image: distinct concept ids, ascending
    std::vector<ObjectInst> objects;
    std::vector<std::vector<uint32_t>> image_object_nodes;
    std::vector<std::vector<uint32_t>> sentence_tokens;
    std::vector<PhraseInst> phrases;
    std::vector<std::vector<uint32_t>> sentence_phrase_nodes;
    std::vector<std::pair<uint32_t, uint32_t>> gt_global;  // (image, sentence)
    std::vector<std::pair<uint32_t, uint32_t>> gt_local;   // (object node, phrase node)
    std::vector<Vec> image_latent;     // oracle-only concept indicators (+ observation noise)
    std::vector<Vec> sentence_latent;
    std::vector<uint8_t> image_heldout, sentence_heldout;
    std::vector<uint8_t> image_noise, sentence_noise;

    uint32_t image_count() const { return static_cast<uint32_t>(image_concepts.size()); }
    uint32_t sentence_count() const { return static_cast<uint32_t>(sentence_tokens.size()); }

    std::vector<uint32_t> train_images() const;
    std::vector<uint32_t> train_sentences() const;
    std::vector<uint32_t> heldout_images() const;
    std::vector<uint32_t> heldout_sentences() const;

    std::vector<uint32_t> phrase_token_list(uint32_t phrase_node) const;
};

SyntheticCorpus generate_world(const WorldSpec& spec);

enum class NoiseMode { Noise1, Noise2, Noise3 };

/// Appends counterpart-free sentences (Noise1), images (Noise2) or both
/// (Noise3) drawn from the training part of an independently generated pool
/// world. Appended items are marked noise and carry no ground-truth links.
SyntheticCorpus inject_noise(const SyntheticCorpus& base, NoiseMode mode, uint32_t n_sentences,
                             uint32_t n_images, const SyntheticCorpus& pool);

/// Images from one world, sentences from another with a disjoint concept
/// vocabulary (token ranges must not overlap either); zero ground-truth links.
SyntheticCorpus random_environment(const SyntheticCorpus& image_world, const SyntheticCorpus& text_world);

void export_corpus_jsonl(const SyntheticCorpus& corpus, std::ostream& out);
SyntheticCorpus import_corpus_jsonl(std::istream& in);

/// Ground-truth-similarity probe: cosine of the latent concept indicators,
/// optionally corrupted with deterministic per-pair Gaussian noise. Stands in
/// for the pre-trained retrieval model that seeds the graph.
class OracleScorer : public PairScorer {
public:
    OracleScorer(const SyntheticCorpus& corpus, double sigma, uint64_t seed)
        : corpus_(&corpus), sigma_(sigma), seed_(seed) {}

    double global_score(uint32_t image, uint32_t sentence) const override;
    std::vector<std::vector<double>> local_scores(uint32_t image, uint32_t sentence) const override;

private:
    const SyntheticCorpus* corpus_;
    double sigma_;
    uint64_t seed_;
};

}  // namespace mmkg
