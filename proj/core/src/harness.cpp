#include "mmkg/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "mmkg/discovery.hpp"

namespace mmkg {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json matrix_to_json(const Matrix& m) { return json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}}; }

Matrix matrix_from_json(const json& j) {
    Matrix m(j.at("rows").get<size_t>(), j.at("cols").get<size_t>());
    m.data = j.at("data").get<Vec>();
    if (m.data.size() != m.rows * m.cols) throw std::runtime_error("checkpoint: tensor shape mismatch");
    return m;
}

json params_to_json(const EncoderParams& p) {
    return json{{"object_embedding", matrix_to_json(p.object_embedding)},
                {"token_embedding", matrix_to_json(p.token_embedding)},
                {"image_projection", matrix_to_json(p.image_projection)},
                {"text_projection", matrix_to_json(p.text_projection)},
                {"segment_offset", p.segment_offset},
                {"temperature", p.temperature},
                {"context_weight", p.context_weight}};
}

EncoderParams params_from_json(const json& j) {
    EncoderParams p;
    p.object_embedding = matrix_from_json(j.at("object_embedding"));
    p.token_embedding = matrix_from_json(j.at("token_embedding"));
    p.image_projection = matrix_from_json(j.at("image_projection"));
    p.text_projection = matrix_from_json(j.at("text_projection"));
    p.segment_offset = j.at("segment_offset").get<Vec>();
    p.temperature = j.at("temperature").get<double>();
    p.context_weight = j.at("context_weight").get<double>();
    return p;
}

std::shared_ptr<SyntheticCorpus> build_corpus(const RunConfig& cfg, uint64_t seed,
                                              const SyntheticCorpus* corpus_override) {
    auto corpus = std::make_shared<SyntheticCorpus>();
    if (corpus_override) {
        *corpus = *corpus_override;
    } else if (!cfg.corpus_path.empty()) {
        std::ifstream in(cfg.corpus_path);
        if (!in) throw std::runtime_error("cannot open corpus file: " + cfg.corpus_path);
        *corpus = import_corpus_jsonl(in);
    } else {
        WorldSpec ws = cfg.world;
        ws.seed = mix64(cfg.world.seed, seed);  // each seed gets its own world instance
        *corpus = generate_world(ws);
    }
    return corpus;
}

uint64_t compute_total_steps(const RunConfig& cfg, const SyntheticCorpus& corpus) {
    const uint64_t b = cfg.train.batch_size;
    const uint64_t img_batches = (corpus.train_images().size() + b - 1) / b;
    const uint64_t sent_batches = (corpus.train_sentences().size() + b - 1) / b;
    const uint64_t epochs =
        cfg.model_warmup_epochs + static_cast<uint64_t>(cfg.t_max) * cfg.train.epochs_per_iteration;
    return epochs * (img_batches + sent_batches);
}

struct LoopFiles {
    std::ofstream csv;
    std::ofstream jsonl;
    std::ofstream trace;
    fs::path dir;
    bool active = false;
};

LoopFiles open_files(const fs::path& out_dir, bool loss_trace) {
    LoopFiles f;
    if (out_dir.empty()) return f;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    f.dir = out_dir;
    f.csv.open(out_dir / "report.csv");
    f.jsonl.open(out_dir / "report.jsonl");
    if (!f.csv || !f.jsonl) throw std::runtime_error("cannot write into output directory " + out_dir.string());
    write_report_csv_header(f.csv);
    if (loss_trace) {
        f.trace.open(out_dir / "loss_trace.csv");
        f.trace << "step,loss_global,loss_local,loss_uncertainty,lr\n";
    }
    f.active = true;
    return f;
}

std::string fmt17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// Builds the initial graph (iteration stamp 0) and warms the model on it; the
// warmed encoder then stands in for the pre-trained model the loop expects as
// input. The initial assignment is always absolute-threshold: the label-aware
// strategies configure the iterative discovery, not the graph initialization.
void initialize_graph_and_model(const RunConfig& cfg, uint64_t seed, const SyntheticCorpus& corpus,
                                const PairScorer& initial_scorer, const CandidateSet& candidates,
                                MultiModalGraph& graph, EncoderParams& model, TrainState& ts,
                                bool warm_up_model) {
    LinkPolicy init_policy = cfg.policy;
    init_policy.strategy = LinkStrategy::AT;
    discovery_pass(initial_scorer, graph, corpus, candidates, init_policy, 0);
    if (warm_up_model && cfg.model_warmup_epochs > 0) {
        TrainConfig warm_cfg = cfg.train;
        warm_cfg.epochs_per_iteration = cfg.model_warmup_epochs;
        train_iteration(model, ts, graph, corpus, warm_cfg, seed, 0);
    }
}

// The loop body shared by fresh runs and resumed runs; bit-exact resumes
// depend on both paths going through this exact code.
std::vector<IterationReport> execute_iterations(const RunConfig& cfg, uint64_t seed,
                                                const std::string& cfg_hash, SyntheticCorpus& corpus,
                                                CandidateSet& candidates, MultiModalGraph& graph,
                                                EncoderParams& model, TrainState& ts, uint32_t t_begin,
                                                LoopFiles& files, std::vector<double>* wall_out) {
    std::vector<IterationReport> reports;
    for (uint32_t t = t_begin; t <= cfg.t_max; ++t) {
        const auto started = std::chrono::steady_clock::now();

        if (cfg.iterative_discovery) {
            const EncoderScorer scorer(model, corpus);
            if (cfg.policy.refresh_candidates)
                candidates = build_candidates(scorer, corpus.train_images(), corpus.train_sentences(),
                                              cfg.policy.prefilter_width, corpus.image_count(),
                                              corpus.sentence_count());
            discovery_pass(scorer, graph, corpus, candidates, cfg.policy, t);
        }

        std::vector<LossTraceRow> trace_rows;
        const IterationLossStats stats =
            train_iteration(model, ts, graph, corpus, cfg.train, seed, t,
                            cfg.loss_trace && files.active ? &trace_rows : nullptr);

        IterationReport rep =
            compute_iteration_report(model, graph, corpus, cfg.train.graph_context, cfg.pp_degree_cutoff,
                                     seed, cfg.train.dropout_rate, t);
        rep.mean_loss_global = stats.mean_global;
        rep.mean_loss_local = stats.mean_local;
        rep.mean_loss_uncertainty = stats.mean_uncertainty;
        rep.config_hash = cfg_hash;
        rep.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (wall_out) wall_out->push_back(rep.wall_seconds);
        reports.push_back(rep);

        if (files.active) {
            write_report_csv_row(files.csv, rep);
            files.jsonl << report_to_jsonl(rep) << "\n";
            for (const auto& row : trace_rows)
                files.trace << row.step << ',' << fmt17(row.l_it) << ',' << fmt17(row.l_c) << ','
                            << fmt17(row.l_u) << ',' << fmt17(row.lr) << '\n';

            const bool snap = (cfg.graph_snapshot_every > 0 && t % cfg.graph_snapshot_every == 0) || t == cfg.t_max;
            if (snap) {
                std::ofstream g(files.dir / ("graph_t" + std::to_string(t) + ".jsonl"));
                graph.export_jsonl(g);
            }
            const bool ck = (cfg.checkpoint_every > 0 && t % cfg.checkpoint_every == 0) || t == cfg.t_max;
            if (ck) {
                Checkpoint c;
                c.iteration = t;
                c.master_seed = seed;
                c.cfg_hash = cfg_hash;
                c.model = model;
                c.adam_m = ts.adam.m();
                c.adam_v = ts.adam.v();
                c.adam_steps = ts.adam.steps;
                c.global_step = ts.global_step;
                c.total_steps = ts.total_steps;
                save_checkpoint(files.dir / ("checkpoint_t" + std::to_string(t) + ".json"), c);
            }
        }
    }
    return reports;
}

void write_summary(const LoopFiles& files, const RunConfig& cfg, uint64_t seed, const std::string& cfg_hash,
                   const std::vector<IterationReport>& reports, const std::vector<double>& wall) {
    if (!files.active) return;
    json j;
    j["config"] = json::parse(config_to_json_text(cfg));
    j["config_hash"] = cfg_hash;
    j["seed"] = seed;
    j["run_id"] = cfg_hash + "-s" + std::to_string(seed);
    j["iterations"] = reports.size();
    j["wall_seconds_per_iteration"] = wall;  // timing only; not part of the deterministic outputs
    if (!reports.empty()) j["final"] = json::parse(report_to_jsonl(reports.back()));
    std::ofstream out(files.dir / "summary.json");
    out << j.dump(2) << "\n";
}

// initial scorer selection; the oracle (warm) or the untouched encoder (cold)
struct InitialScorerHolder {
    std::unique_ptr<OracleScorer> oracle;
    std::unique_ptr<EncoderScorer> cold;
    const PairScorer& get() const { return oracle ? static_cast<const PairScorer&>(*oracle) : *cold; }
};

InitialScorerHolder make_initial_scorer(const RunConfig& cfg, uint64_t seed, const SyntheticCorpus& corpus,
                                        const EncoderParams& initial_model) {
    InitialScorerHolder h;
    if (cfg.init_scorer.warm) {
        h.oracle = std::make_unique<OracleScorer>(corpus, cfg.init_scorer.sigma,
                                                  stream_seed(seed, Stream::InitialScorer));
    } else {
        h.cold = std::make_unique<EncoderScorer>(initial_model, corpus);
    }
    return h;
}

}  // namespace

void save_checkpoint(const fs::path& file, const Checkpoint& ck) {
    json j{{"format", "mmkg-checkpoint-v1"},
           {"iteration", ck.iteration},
           {"master_seed", ck.master_seed},
           {"config_hash", ck.cfg_hash},
           {"model", params_to_json(ck.model)},
           {"adam_m", ck.adam_m},
           {"adam_v", ck.adam_v},
           {"adam_steps", ck.adam_steps},
           {"global_step", ck.global_step},
           {"total_steps", ck.total_steps}};
    std::ofstream out(file);
    if (!out) throw std::runtime_error("cannot write checkpoint " + file.string());
    out << j.dump() << "\n";
}

Checkpoint load_checkpoint(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open checkpoint " + file.string());
    json j = json::parse(in);
    if (j.at("format").get<std::string>() != "mmkg-checkpoint-v1")
        throw std::runtime_error("unsupported checkpoint format");
    Checkpoint ck;
    ck.iteration = j.at("iteration").get<uint32_t>();
    ck.master_seed = j.at("master_seed").get<uint64_t>();
    ck.cfg_hash = j.at("config_hash").get<std::string>();
    ck.model = params_from_json(j.at("model"));
    ck.adam_m = j.at("adam_m").get<Vec>();
    ck.adam_v = j.at("adam_v").get<Vec>();
    ck.adam_steps = j.at("adam_steps").get<uint64_t>();
    ck.global_step = j.at("global_step").get<uint64_t>();
    ck.total_steps = j.at("total_steps").get<uint64_t>();
    return ck;
}

SeedRunResult run_loop(const RunConfig& cfg, uint64_t seed, const fs::path& out_dir,
                       const SyntheticCorpus* corpus_override, const EncoderParams* warm_start) {
    cfg.validate();
    const std::string cfg_hash = config_hash(cfg);

    SeedRunResult result;
    result.corpus = build_corpus(cfg, seed, corpus_override);
    SyntheticCorpus& corpus = *result.corpus;

    result.initial_model =
        warm_start ? *warm_start
                   : EncoderParams::init(cfg.model, corpus.object_vocab, corpus.token_vocab,
                                         stream_seed(seed, Stream::EncoderInit));
    EncoderParams model = result.initial_model;

    const InitialScorerHolder init_scorer = make_initial_scorer(cfg, seed, corpus, result.initial_model);
    CandidateSet candidates =
        build_candidates(init_scorer.get(), corpus.train_images(), corpus.train_sentences(),
                         cfg.policy.prefilter_width, corpus.image_count(), corpus.sentence_count());
    MultiModalGraph graph(corpus.image_object_nodes, corpus.sentence_phrase_nodes);

    TrainState ts{AdamState(model.trainable_count()), 0, compute_total_steps(cfg, corpus)};
    initialize_graph_and_model(cfg, seed, corpus, init_scorer.get(), candidates, graph, model, ts,
                               /*warm_up_model=*/true);

    LoopFiles files = open_files(out_dir, cfg.loss_trace);
    std::vector<double> wall;
    result.reports =
        execute_iterations(cfg, seed, cfg_hash, corpus, candidates, graph, model, ts, 1, files, &wall);
    write_summary(files, cfg, seed, cfg_hash, result.reports, wall);
    result.final_model = std::move(model);
    return result;
}

SeedRunResult resume_loop(const RunConfig& cfg, const fs::path& checkpoint_file, const fs::path& out_dir,
                          const SyntheticCorpus* corpus_override) {
    cfg.validate();
    const std::string cfg_hash = config_hash(cfg);
    const Checkpoint ck = load_checkpoint(checkpoint_file);
    if (ck.cfg_hash != cfg_hash)
        throw std::runtime_error("resume: checkpoint was produced by a different config (hash mismatch)");
    if (ck.iteration >= cfg.t_max)
        throw std::runtime_error("resume: checkpoint already covers all t_max iterations");

    const uint64_t seed = ck.master_seed;
    SeedRunResult result;
    result.corpus = build_corpus(cfg, seed, corpus_override);
    SyntheticCorpus& corpus = *result.corpus;

    result.initial_model = EncoderParams::init(cfg.model, corpus.object_vocab, corpus.token_vocab,
                                               stream_seed(seed, Stream::EncoderInit));
    EncoderParams model = ck.model;

    const InitialScorerHolder init_scorer = make_initial_scorer(cfg, seed, corpus, result.initial_model);
    CandidateSet candidates =
        build_candidates(init_scorer.get(), corpus.train_images(), corpus.train_sentences(),
                         cfg.policy.prefilter_width, corpus.image_count(), corpus.sentence_count());
    MultiModalGraph graph(corpus.image_object_nodes, corpus.sentence_phrase_nodes);

    TrainState ts{AdamState(model.trainable_count()), ck.global_step, ck.total_steps};
    ts.adam.m() = ck.adam_m;
    ts.adam.v() = ck.adam_v;
    ts.adam.steps = ck.adam_steps;

    // the model state comes from the checkpoint; only the frozen graph
    // (discovery disabled) must be re-established before continuing
    if (!cfg.iterative_discovery)
        initialize_graph_and_model(cfg, seed, corpus, init_scorer.get(), candidates, graph, model, ts,
                                   /*warm_up_model=*/false);

    LoopFiles files = open_files(out_dir, cfg.loss_trace);
    std::vector<double> wall;
    result.reports = execute_iterations(cfg, seed, cfg_hash, corpus, candidates, graph, model, ts,
                                        ck.iteration + 1, files, &wall);
    write_summary(files, cfg, seed, cfg_hash, result.reports, wall);
    result.final_model = std::move(model);
    return result;
}

const char* ladder_rung_name(uint32_t rung) {
    static const char* names[kLadderRungs] = {"baseline", "+KD", "+CAL", "+GL", "+UR"};
    return rung < kLadderRungs ? names[rung] : "?";
}

RunConfig ladder_rung_config(const RunConfig& base, uint32_t rung) {
    if (rung >= kLadderRungs) throw std::invalid_argument("ladder rung out of range");
    RunConfig cfg = base;
    cfg.iterative_discovery = rung >= 1;
    cfg.train.soft_labels = rung >= 2;
    cfg.train.graph_context = rung >= 3;
    cfg.train.uncertainty = rung >= 4;
    return cfg;
}

std::vector<NamedRun> run_ablation_ladder(const RunConfig& cfg, uint64_t seed, const fs::path& out_dir) {
    std::vector<NamedRun> out;
    for (uint32_t rung = 0; rung < kLadderRungs; ++rung) {
        const RunConfig rcfg = ladder_rung_config(cfg, rung);
        const fs::path dir = out_dir.empty() ? fs::path{} : out_dir / ("rung" + std::to_string(rung));
        out.push_back(NamedRun{ladder_rung_name(rung), run_loop(rcfg, seed, dir)});
    }
    return out;
}

std::vector<NamedRun> run_strategy_comparison(const RunConfig& cfg, uint64_t seed, const fs::path& out_dir) {
    std::vector<NamedRun> out;
    for (LinkStrategy s : {LinkStrategy::AT, LinkStrategy::LA, LinkStrategy::BL}) {
        RunConfig scfg = cfg;
        scfg.policy.strategy = s;
        const fs::path dir = out_dir.empty() ? fs::path{} : out_dir / link_strategy_name(s);
        out.push_back(NamedRun{link_strategy_name(s), run_loop(scfg, seed, dir)});
    }
    return out;
}

std::vector<NamedRun> run_noise_suite(const RunConfig& cfg, uint64_t seed, const fs::path& out_dir) {
    WorldSpec ws = cfg.world;
    ws.seed = mix64(cfg.world.seed, seed);
    const SyntheticCorpus base = generate_world(ws);

    const uint32_t n_sent =
        static_cast<uint32_t>(std::llround(cfg.noise_sentence_fraction * base.train_sentences().size()));
    const uint32_t n_img =
        static_cast<uint32_t>(std::llround(cfg.noise_image_fraction * base.train_images().size()));

    WorldSpec pool_spec = cfg.world;
    pool_spec.seed = mix64(ws.seed, 0x6e6f697365ULL);  // independent pool world
    pool_spec.n_heldout_images = 0;
    const uint32_t need_for_sentences = (n_sent + ws.captions_per_image - 1) / ws.captions_per_image;
    pool_spec.n_images = std::max(n_img, need_for_sentences) + 1;
    const SyntheticCorpus pool = generate_world(pool_spec);

    std::vector<NamedRun> out;
    const auto run_variant = [&](const std::string& name, const SyntheticCorpus& corpus) {
        const fs::path dir = out_dir.empty() ? fs::path{} : out_dir / name;
        out.push_back(NamedRun{name, run_loop(cfg, seed, dir, &corpus)});
    };
    run_variant("clean", base);
    run_variant("noise1", inject_noise(base, NoiseMode::Noise1, n_sent, 0, pool));
    run_variant("noise2", inject_noise(base, NoiseMode::Noise2, 0, n_img, pool));
    run_variant("noise3", inject_noise(base, NoiseMode::Noise3, n_sent, n_img, pool));
    return out;
}

RandomEnvOutcome run_random_env(const RunConfig& cfg, uint64_t seed, const fs::path& out_dir) {
    WorldSpec spec_a = cfg.world;
    spec_a.seed = mix64(cfg.world.seed, seed);
    const SyntheticCorpus world_a = generate_world(spec_a);

    WorldSpec spec_b = spec_a;
    spec_b.concept_base = spec_a.concept_end() +
                          (spec_a.distractor_tokens + spec_a.phrase_tokens_per_concept - 1) /
                              spec_a.phrase_tokens_per_concept +
                          1;
    spec_b.n_heldout_images = 0;
    spec_b.seed = mix64(spec_a.seed, 0x72616e64ULL);
    const SyntheticCorpus world_b = generate_world(spec_b);

    const SyntheticCorpus mixed = random_environment(world_a, world_b);

    // desk-scale stand-in for the pre-trained backbone: supervised warm-up on
    // the clean world, shared by all four runs (tables sized for both vocabularies)
    EncoderParams warm = EncoderParams::init(cfg.model, mixed.object_vocab, mixed.token_vocab,
                                             stream_seed(seed, Stream::EncoderInit));
    pretrain_supervised(warm, world_a, cfg.pretrain_epochs, cfg.pretrain_lr,
                        mix64(spec_a.seed, 0x7072655fULL));

    // both arms continue from the pretrained model under identical schedules;
    // they differ only in the loop machinery (iterative discovery, soft
    // labels, context, uncertainty vs none of those)
    const RunConfig& ours = cfg;
    RunConfig baseline = ladder_rung_config(cfg, 0);

    const auto dir = [&](const char* name) { return out_dir.empty() ? fs::path{} : out_dir / name; };
    const SeedRunResult ours_clean = run_loop(ours, seed, dir("ours_clean"), &world_a, &warm);
    const SeedRunResult ours_random = run_loop(ours, seed, dir("ours_random"), &mixed, &warm);
    const SeedRunResult base_clean = run_loop(baseline, seed, dir("baseline_clean"), &world_a, &warm);
    const SeedRunResult base_random = run_loop(baseline, seed, dir("baseline_random"), &mixed, &warm);

    // uniform evaluation: linked world, no graph context
    const auto eval_r1 = [&](const EncoderParams& model) {
        const RetrievalReport r =
            evaluate_retrieval(model, world_a, world_a.train_images(), world_a.train_sentences(), nullptr);
        return 0.5 * (r.r1_i2s + r.r1_s2i);
    };
    RandomEnvOutcome outcome;
    outcome.ours_clean_r1 = eval_r1(ours_clean.final_model);
    outcome.ours_random_r1 = eval_r1(ours_random.final_model);
    outcome.baseline_clean_r1 = eval_r1(base_clean.final_model);
    outcome.baseline_random_r1 = eval_r1(base_random.final_model);

    if (!out_dir.empty()) {
        json j{{"ours_clean_r1", outcome.ours_clean_r1},
               {"ours_random_r1", outcome.ours_random_r1},
               {"baseline_clean_r1", outcome.baseline_clean_r1},
               {"baseline_random_r1", outcome.baseline_random_r1}};
        std::ofstream f(out_dir / "random_env.json");
        f << j.dump(2) << "\n";
    }
    return outcome;
}

InductiveOutcome run_inductive(const RunConfig& cfg, uint64_t seed, const fs::path& out_dir) {
    if (cfg.world.n_heldout_images == 0 && cfg.corpus_path.empty())
        throw std::invalid_argument("inductive experiment needs a held-out split (n_heldout_images > 0)");
    const SeedRunResult run = run_loop(cfg, seed, out_dir.empty() ? fs::path{} : out_dir / "run");

    InductiveOutcome outcome;
    outcome.untrained = evaluate_inductive(run.initial_model, *run.corpus);
    outcome.trained = evaluate_inductive(run.final_model, *run.corpus);

    if (!out_dir.empty()) {
        json j{{"untrained",
                {{"r1_i2s", outcome.untrained.r1_i2s}, {"r1_s2i", outcome.untrained.r1_s2i}}},
               {"trained", {{"r1_i2s", outcome.trained.r1_i2s}, {"r1_s2i", outcome.trained.r1_s2i}}}};
        std::ofstream f(out_dir / "inductive.json");
        f << j.dump(2) << "\n";
    }
    return outcome;
}

}  // namespace mmkg
