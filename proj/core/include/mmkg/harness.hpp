#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "mmkg/config.hpp"
#include "mmkg/eval.hpp"
#include "mmkg/training.hpp"

namespace mmkg {

// Everything needed to reproduce iterations k+1..t_max bit-exactly: the
// corpus, candidates and graph are deterministic functions of (config, seed)
// and the model, so only optimizer state and counters are persisted.
struct Checkpoint {
    uint32_t iteration = 0;
    uint64_t master_seed = 0;
    std::string cfg_hash;
    EncoderParams model;
    Vec adam_m, adam_v;
    uint64_t adam_steps = 0;
    uint64_t global_step = 0;
    uint64_t total_steps = 0;
};

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& file);

struct SeedRunResult {
    std::vector<IterationReport> reports;
    EncoderParams initial_model;
    EncoderParams final_model;
    std::shared_ptr<SyntheticCorpus> corpus;
};

/// One full continuous-learning run for a single seed: generate or load the
/// corpus, build candidates with the initial scorer, then alternate
/// discovery and training for t_max iterations, writing report.csv,
/// report.jsonl, graph/checkpoint snapshots and summary.json under out_dir
/// (pass an empty path to skip all file output).
SeedRunResult run_loop(const RunConfig& cfg, uint64_t seed, const std::filesystem::path& out_dir = {},
                       const SyntheticCorpus* corpus_override = nullptr,
                       const EncoderParams* warm_start = nullptr);

/// Continue a run from a checkpoint; reproduces the remaining iterations
/// bit-exactly under the same config.
SeedRunResult resume_loop(const RunConfig& cfg, const std::filesystem::path& checkpoint_file,
                          const std::filesystem::path& out_dir = {},
                          const SyntheticCorpus* corpus_override = nullptr);

struct NamedRun {
    std::string name;
    SeedRunResult result;
};

// Ablation ladder: baseline (AT assignment, hard labels, no context, no
// uncertainty, graph frozen after the initial assignment), then +KD, +CAL,
// +GL, +UR — one switch per rung.
inline constexpr uint32_t kLadderRungs = 5;
const char* ladder_rung_name(uint32_t rung);
RunConfig ladder_rung_config(const RunConfig& base, uint32_t rung);
std::vector<NamedRun> run_ablation_ladder(const RunConfig& cfg, uint64_t seed,
                                          const std::filesystem::path& out_dir = {});

/// AT / LA / BL on the same world and seed (identical t=0 candidates).
std::vector<NamedRun> run_strategy_comparison(const RunConfig& cfg, uint64_t seed,
                                              const std::filesystem::path& out_dir = {});

/// Clean plus the three noise recipes: extra counterpart-free sentences,
/// images, or both, drawn from an independently generated pool world.
std::vector<NamedRun> run_noise_suite(const RunConfig& cfg, uint64_t seed,
                                      const std::filesystem::path& out_dir = {});

struct RandomEnvOutcome {
    // mean of the two R@1 directions on the linked evaluation world
    double ours_clean_r1 = 0.0;
    double ours_random_r1 = 0.0;
    double baseline_clean_r1 = 0.0;
    double baseline_random_r1 = 0.0;
};

/// Random environment: a supervised-pretrained encoder is continued either
/// on its own world or on images paired with sentences from a
/// disjoint-vocabulary world; compared against a no-discovery baseline.
RandomEnvOutcome run_random_env(const RunConfig& cfg, uint64_t seed,
                                const std::filesystem::path& out_dir = {});

struct InductiveOutcome {
    RetrievalReport untrained;
    RetrievalReport trained;
};

/// Held-out-world retrieval with no graph context, before and after the run.
InductiveOutcome run_inductive(const RunConfig& cfg, uint64_t seed, const std::filesystem::path& out_dir = {});

}  // namespace mmkg
