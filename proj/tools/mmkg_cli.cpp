// mmkg - continuous multi-modal knowledge discovery / pre-training loop.
//
// Subcommands: run, ablation, strategies, noise, random-env, inductive,
// gen-world. All experiments are deterministic given (--config, --seed);
// per-seed outputs land under <out>/seed<k>/.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmkg/config.hpp"
#include "mmkg/harness.hpp"

namespace fs = std::filesystem;
using namespace mmkg;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<uint64_t> seeds;
    std::string out_dir;
    std::string resume_path;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_resume = false) {
    cmd->add_option("--config", args.config_path, "run config JSON file");
    cmd->add_option("--seed", args.seeds, "seed(s), overrides the config's seed list");
    cmd->add_option("--out", args.out_dir, "output directory");
    if (with_resume) cmd->add_option("--resume", args.resume_path, "checkpoint file to resume from");
}

RunConfig make_config(const CommonArgs& args) {
    RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_config(args.config_path);
    if (!args.seeds.empty()) cfg.seeds = args.seeds;
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    cfg.validate();
    return cfg;
}

double pct(double v) { return 100.0 * v; }

void print_report_line(const std::string& tag, const IterationReport& r) {
    std::printf("%-14s t=%-3u P=%5.1f R=%5.1f F1=%5.1f loc=%5.1f R@1 %5.1f/%5.1f %%PP=%5.1f links=%zu\n",
                tag.c_str(), r.iteration, pct(r.global_precision), pct(r.global_recall), pct(r.global_f1),
                pct(r.local_acc), pct(r.retrieval.r1_i2s), pct(r.retrieval.r1_s2i), pct(r.pp_fraction),
                r.strong_links);
}

fs::path seed_dir(const RunConfig& cfg, uint64_t seed) {
    return fs::path(cfg.out_dir) / ("seed" + std::to_string(seed));
}

int cmd_ablation(const CommonArgs& args);
int cmd_strategies(const CommonArgs& args);
int cmd_noise(const CommonArgs& args);
int cmd_random_env(const CommonArgs& args);
int cmd_inductive(const CommonArgs& args);

int cmd_run(const CommonArgs& args) {
    RunConfig cfg = make_config(args);
    if (!args.resume_path.empty()) {
        if (cfg.seeds.size() != 1)
            std::fprintf(stderr, "note: --resume uses the checkpoint's seed; --seed is ignored\n");
        const auto result = resume_loop(cfg, args.resume_path, fs::path(cfg.out_dir) / "resumed");
        for (const auto& r : result.reports) print_report_line("resumed", r);
        return 0;
    }
    // configs may pin an experiment mode; `run` honors it
    switch (cfg.mode) {
        case ExperimentMode::AblationLadder: return cmd_ablation(args);
        case ExperimentMode::NoiseSuite: return cmd_noise(args);
        case ExperimentMode::RandomEnv: return cmd_random_env(args);
        case ExperimentMode::Inductive: return cmd_inductive(args);
        case ExperimentMode::Standard: break;
    }
    for (uint64_t seed : cfg.seeds) {
        const auto result = run_loop(cfg, seed, seed_dir(cfg, seed));
        for (const auto& r : result.reports) print_report_line("seed " + std::to_string(seed), r);
    }
    return 0;
}

int cmd_ablation(const CommonArgs& args) {
    RunConfig cfg = make_config(args);
    for (uint64_t seed : cfg.seeds) {
        const auto rows = run_ablation_ladder(cfg, seed, seed_dir(cfg, seed));
        std::printf("-- ablation ladder, seed %llu --\n", static_cast<unsigned long long>(seed));
        for (const auto& row : rows) print_report_line(row.name, row.result.reports.back());
    }
    return 0;
}

int cmd_strategies(const CommonArgs& args) {
    RunConfig cfg = make_config(args);
    for (uint64_t seed : cfg.seeds) {
        const auto rows = run_strategy_comparison(cfg, seed, seed_dir(cfg, seed));
        std::printf("-- link assignment strategies, seed %llu --\n", static_cast<unsigned long long>(seed));
        for (const auto& row : rows) print_report_line(row.name, row.result.reports.back());
    }
    return 0;
}

int cmd_noise(const CommonArgs& args) {
    RunConfig cfg = make_config(args);
    for (uint64_t seed : cfg.seeds) {
        const auto rows = run_noise_suite(cfg, seed, seed_dir(cfg, seed));
        std::printf("-- noisy environment, seed %llu --\n", static_cast<unsigned long long>(seed));
        for (const auto& row : rows) print_report_line(row.name, row.result.reports.back());
    }
    return 0;
}

int cmd_random_env(const CommonArgs& args) {
    RunConfig cfg = make_config(args);
    for (uint64_t seed : cfg.seeds) {
        const auto o = run_random_env(cfg, seed, seed_dir(cfg, seed));
        std::printf("-- random environment, seed %llu --\n", static_cast<unsigned long long>(seed));
        std::printf("ours:     clean R@1 %5.1f  random R@1 %5.1f  (drop %5.1f)\n", pct(o.ours_clean_r1),
                    pct(o.ours_random_r1), pct(o.ours_clean_r1 - o.ours_random_r1));
        std::printf("baseline: clean R@1 %5.1f  random R@1 %5.1f  (drop %5.1f)\n", pct(o.baseline_clean_r1),
                    pct(o.baseline_random_r1), pct(o.baseline_clean_r1 - o.baseline_random_r1));
    }
    return 0;
}

int cmd_inductive(const CommonArgs& args) {
    RunConfig cfg = make_config(args);
    for (uint64_t seed : cfg.seeds) {
        const auto o = run_inductive(cfg, seed, seed_dir(cfg, seed));
        std::printf("-- inductive evaluation, seed %llu --\n", static_cast<unsigned long long>(seed));
        std::printf("untrained: R@1 %5.1f / %5.1f\n", pct(o.untrained.r1_i2s), pct(o.untrained.r1_s2i));
        std::printf("trained:   R@1 %5.1f / %5.1f\n", pct(o.trained.r1_i2s), pct(o.trained.r1_s2i));
    }
    return 0;
}

int cmd_gen_world(const CommonArgs& args, const std::string& out_file) {
    RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_config(args.config_path);
    WorldSpec ws = cfg.world;
    if (!args.seeds.empty()) ws.seed = mix64(cfg.world.seed, args.seeds.front());
    const SyntheticCorpus corpus = generate_world(ws);
    std::ofstream out(out_file);
    if (!out) throw std::runtime_error("cannot write corpus file " + out_file);
    export_corpus_jsonl(corpus, out);
    std::printf("wrote %u images / %u sentences (%zu ground-truth links) to %s\n", corpus.image_count(),
                corpus.sentence_count(), corpus.gt_global.size(), out_file.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"continuous multi-modal knowledge discovery and pre-training"};
    app.require_subcommand(1);

    CommonArgs run_args, abl_args, strat_args, noise_args, rand_args, ind_args, gen_args;
    std::string gen_out = "world.jsonl";

    auto* run = app.add_subcommand("run", "standard continuous-learning run");
    add_common(run, run_args, /*with_resume=*/true);
    auto* abl = app.add_subcommand("ablation", "component ablation ladder");
    add_common(abl, abl_args);
    auto* strat = app.add_subcommand("strategies", "link assignment strategy comparison");
    add_common(strat, strat_args);
    auto* noise = app.add_subcommand("noise", "noisy-environment suite");
    add_common(noise, noise_args);
    auto* rand = app.add_subcommand("random-env", "random uni-modal datasets experiment");
    add_common(rand, rand_args);
    auto* ind = app.add_subcommand("inductive", "held-out-world evaluation");
    add_common(ind, ind_args);
    auto* gen = app.add_subcommand("gen-world", "generate and export a synthetic corpus");
    add_common(gen, gen_args);
    gen->add_option("--file", gen_out, "output corpus JSONL path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) return cmd_run(run_args);
        if (abl->parsed()) return cmd_ablation(abl_args);
        if (strat->parsed()) return cmd_strategies(strat_args);
        if (noise->parsed()) return cmd_noise(noise_args);
        if (rand->parsed()) return cmd_random_env(rand_args);
        if (ind->parsed()) return cmd_inductive(ind_args);
        if (gen->parsed()) return cmd_gen_world(gen_args, gen_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
