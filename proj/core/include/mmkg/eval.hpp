#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mmkg/encoder.hpp"
#include "mmkg/graph.hpp"
#include "mmkg/synthetic.hpp"

namespace mmkg {

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Precision/recall/F1 of predicted strength-1 links against ground truth.
Prf global_prf(const std::vector<std::pair<uint32_t, uint32_t>>& predicted,
               const std::vector<std::pair<uint32_t, uint32_t>>& truth);

/// Fraction of queries whose top-k gallery items (score descending, ties by
/// ascending index) contain at least one ground-truth counterpart; exhaustive
/// scoring, k clamped to the gallery size.
std::map<uint32_t, double> retrieval_recall_at_k(
    const std::function<double(uint32_t, uint32_t)>& score, const std::vector<uint32_t>& queries,
    const std::vector<uint32_t>& gallery, const std::function<bool(uint32_t, uint32_t)>& is_truth,
    const std::vector<uint32_t>& ks);

/// Fraction of ground-truth-linked phrases whose predicted object set
/// contains a true object. Pairs are (object, phrase).
double local_accuracy(const std::vector<std::pair<uint32_t, uint32_t>>& predicted,
                      const std::vector<std::pair<uint32_t, uint32_t>>& truth);

struct RetrievalReport {
    double r1_i2s = 0.0, r5_i2s = 0.0, r10_i2s = 0.0;
    double r1_s2i = 0.0, r5_s2i = 0.0, r10_s2i = 0.0;
};

/// Retrieval over the held-out split with no graph augmentation (empty
/// context) in either direction.
RetrievalReport evaluate_inductive(const EncoderParams& params, const SyntheticCorpus& corpus);

/// Retrieval over a caller-supplied split. Context-augmented image encodings
/// are used when a graph is supplied.
RetrievalReport evaluate_retrieval(const EncoderParams& params, const SyntheticCorpus& corpus,
                                   const std::vector<uint32_t>& images, const std::vector<uint32_t>& sentences,
                                   const MultiModalGraph* context_graph);

struct IterationReport {
    uint32_t iteration = 0;
    double global_precision = 0.0;
    double global_recall = 0.0;
    double global_f1 = 0.0;
    double local_acc = 0.0;
    RetrievalReport retrieval;
    double pp_fraction = 0.0;
    size_t strong_links = 0;
    size_t weak_links = 0;
    double mean_loss_global = 0.0;
    double mean_loss_local = 0.0;
    double mean_loss_uncertainty = 0.0;
    double mean_uncertainty = 0.0;
    double wall_seconds = 0.0;  // written to summary.json only; never to csv/jsonl
    std::string config_hash;
};

/// Discovery + retrieval metrics for the current model and graph. Loss
/// fields, wall clock and the config hash are filled by the caller.
IterationReport compute_iteration_report(const EncoderParams& params, const MultiModalGraph& graph,
                                         const SyntheticCorpus& corpus, bool use_context, uint32_t pp_cutoff,
                                         uint64_t master_seed, double dropout_rate, uint32_t iteration);

// report.csv / report.jsonl carry exact fractions (%.17g) so identical runs
// are byte-identical; the CLI prints percentages for humans.
void write_report_csv_header(std::ostream& out);
void write_report_csv_row(std::ostream& out, const IterationReport& r);
std::string report_to_jsonl(const IterationReport& r);

}  // namespace mmkg
