#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mmkg/discovery.hpp"
#include "mmkg/encoder.hpp"
#include "mmkg/synthetic.hpp"
#include "mmkg/training.hpp"

namespace mmkg {

enum class ExperimentMode { Standard, AblationLadder, NoiseSuite, RandomEnv, Inductive };

const char* experiment_mode_name(ExperimentMode m);
ExperimentMode experiment_mode_from_name(const std::string& name);

// Either the freshly initialized encoder (cold) or a ground-truth-similarity
// oracle corrupted with Gaussian noise (warm), standing in for the
// pre-trained retrieval model that seeds the graph.
struct InitialScorerConfig {
    bool warm = true;
    double sigma = 0.3;
};

struct RunConfig {
    WorldSpec world;
    std::string corpus_path;  // when set, replay a frozen corpus instead of generating
    LinkPolicy policy;
    TrainConfig train;
    EncoderConfig model;
    InitialScorerConfig init_scorer;
    bool iterative_discovery = true;  // off: graph frozen after the initial assignment
    // epochs of training on the initial-scorer graph before the loop; stands
    // in for the pre-trained model the loop starts from
    uint32_t model_warmup_epochs = 7;
    uint32_t t_max = 15;
    std::vector<uint64_t> seeds = {1, 2, 3};
    ExperimentMode mode = ExperimentMode::Standard;
    std::string out_dir = "out";
    uint32_t pp_degree_cutoff = 10;
    bool loss_trace = false;
    uint32_t graph_snapshot_every = 0;  // 0: final iteration only
    uint32_t checkpoint_every = 1;      // 0: final iteration only
    // noise-suite amounts as fractions of the clean pools
    double noise_sentence_fraction = 1.0;
    double noise_image_fraction = 1.0;
    // supervised warm-up used by the random-environment experiment
    uint32_t pretrain_epochs = 30;
    double pretrain_lr = 5e-3;

    void validate() const;
};

RunConfig config_from_json_text(const std::string& text);
RunConfig load_config(const std::string& path);

/// Canonical serialization; parsing it back yields an identical config.
std::string config_to_json_text(const RunConfig& cfg);

/// FNV-1a hash of the canonical serialization, echoed into every report row.
std::string config_hash(const RunConfig& cfg);

}  // namespace mmkg
