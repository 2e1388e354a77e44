// Acceptance suite: ten end-to-end criteria covering the formula layer, the
// gradient machinery, discovery equivalence, and the directional reproduction
// of every experiment. Prints one PASS/FAIL line per criterion; exits
// non-zero if any selected criterion fails.
//
//   mmkg_acceptance                 run everything
//   mmkg_acceptance --criterion N   run a single criterion

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mmkg/discovery.hpp"
#include "mmkg/eval.hpp"
#include "mmkg/harness.hpp"
#include "mmkg/training.hpp"
#include "test_support.hpp"

using namespace mmkg;
using namespace mmkg::test;
namespace fs = std::filesystem;

namespace {

struct Check {
    bool pass = true;
    std::string detail;

    void expect(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
    void expect_close(double got, double want, double tol, const std::string& what) {
        if (!(std::fabs(got - want) <= tol)) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s: got %.17g want %.17g", what.c_str(), got, want);
            expect(false, buf);
        }
    }
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------- criterion 1

Check c1_formula_suite() {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    constexpr double kTol = 1e-12;

    {  // absolute-threshold assignment
        LinkPolicy at;
        at.strategy = LinkStrategy::AT;
        at.absolute_threshold = 0.5;
        c.expect_close(assign_global(0.7, at, 0, 0), 1.0, 0, "AT above");
        c.expect_close(assign_global(0.4, at, 0, 0), 0.0, 0, "AT below");
        c.expect_close(assign_global(0.5, at, 0, 0), 1.0, 0, "AT boundary uses >=");
    }
    {  // popularity estimate
        c.expect_close(estimate_popularity({0.2, 0.4, 0.6}, 3), 0.4, kTol, "popularity mean");
        c.expect_close(estimate_popularity({0.2, 0.4, 0.6}, 1), 0.6, kTol, "popularity top-1");
        c.expect_close(estimate_popularity({0.9, 0.1}, 5), 0.5, kTol, "popularity K clamp");
    }
    {  // label-aware threshold
        c.expect_close(label_threshold(0.25, 1.0), 0.25, kTol, "power identity");
        c.expect_close(label_threshold(1.0, 0.37), 1.0, kTol, "unit popularity");
        c.expect_close(label_threshold(0.5, 0.98), std::pow(0.5, 0.98), kTol, "0.5^0.98");
    }
    {  // bi-label assignment
        LinkPolicy bl;
        bl.strategy = LinkStrategy::BL;
        c.expect_close(assign_global(0.9, bl, 0.8, 0.95), 0.5, 0, "BL weak");
        c.expect_close(assign_global(0.9, bl, 0.8, 0.8), 1.0, 0, "BL strong");
        c.expect_close(assign_global(0.7, bl, 0.8, 0.95), 0.0, 0, "BL none");
        c.expect_close(assign_global(0.8, bl, 0.8, 0.9), 0.5, 0, "BL boundary uses >=");
    }
    {  // gated local assignment
        c.expect(assign_local({{0.9, 0.8}}, 0.0, 0.3).empty(), "local gate closed");
        const auto one = assign_local({{1.0}}, 1.0, 0.999);
        c.expect(one.size() == 1 && one[0] == std::pair<uint32_t, uint32_t>{0, 0}, "single object links");
        const double z = std::exp(0.9) + std::exp(0.1) + std::exp(0.1);
        const std::vector<double> probs{std::exp(0.9) / z, std::exp(0.1) / z, std::exp(0.1) / z};
        const auto got = assign_local({probs}, 1.0, 0.5);
        c.expect(got.size() == 1 && got[0].first == 0, "3-object softmax thresholding");
    }
    {  // soft labels
        c.expect_close(soft_label(1.0, 1.0, 0.25, 0.6).value, 1.0, kTol, "strong at 1");
        c.expect_close(soft_label(0.0, 0.0, 0.25, 0.6).value, 0.0, kTol, "negative at 0");
        c.expect_close(soft_label(0.5, 1.0, 0.25, 0.6).value, std::pow(0.5, 0.25), kTol, "strong sharpen");
        c.expect_close(soft_label(0.5, 0.5, 0.25, 0.6).value, 0.6 * std::pow(0.5, 0.25), kTol, "weak damp");
    }
    {  // global loss
        c.expect(loss_global(1.0, 1.0 - 1e-6) < 1.1e-6, "perfect prediction ~0");
        c.expect_close(loss_global(0.0, 0.123), 0.0, 0, "zero label");
        const double y = std::pow(0.5, 0.25);
        c.expect_close(loss_global(y, 0.5), y * std::log(2.0), kTol, "-y log f");
    }
    {  // local loss
        c.expect_close(loss_local({}, 1.0), 0.0, 0, "no linked pairs");
        c.expect(loss_local({1.0}, 1.0) < 1.1e-6, "degenerate softmax");
        c.expect_close(loss_local({0.5}, 1.0), std::log(2.0), kTol, "two-object ln 2");
    }
    {  // uncertainty loss
        c.expect_close(loss_uncertainty(0.42, 0.42), 0.0, 0, "identity at equality");
        c.expect_close(loss_uncertainty(0.9, 0.6), loss_uncertainty(0.6, 0.9), kTol, "symmetry");
        const double p1 = 0.9, p2 = 0.6;
        const double want = 0.5 * (p1 * std::log(p1 / p2) + (1 - p1) * std::log((1 - p1) / (1 - p2))) +
                            0.5 * (p2 * std::log(p2 / p1) + (1 - p2) * std::log((1 - p2) / (1 - p1)));
        c.expect_close(loss_uncertainty(0.9, 0.6), want, kTol, "symmetrized KL value");
    }
    {  // combined objective
        TrainConfig cfg;
        c.expect_close(total_loss(1.0, 1.0, 1.0, cfg), 1.55, kTol, "paper weights");
        TrainConfig zeros = cfg;
        zeros.lambda_global = zeros.lambda_local = zeros.lambda_uncertainty = 0.0;
        c.expect_close(total_loss(5.0, 6.0, 7.0, zeros), 0.0, 0, "all-zero weights");
        TrainConfig no_local = cfg;
        no_local.lambda_local = 0.0;
        c.expect_close(total_loss(2.0, 99.0, 4.0, no_local), 2.0 + 0.5 * 4.0, kTol, "local ablation");
    }

    const double elapsed = seconds_since(t0);
    c.expect(elapsed < 1.0, "runtime budget exceeded");
    char buf[64];
    std::snprintf(buf, sizeof(buf), " (%.3f s)", elapsed);
    c.detail += buf;
    return c;
}

// ---------------------------------------------------------------- criterion 2

Check c2_gradient_check() {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;

    for (int inst = 0; inst < 20; ++inst) {
        Rng rng(mix64(0xfdc0, inst));
        const uint32_t d = 5;
        EncoderParams params = random_params(6, 9, d, mix64(7, inst));
        std::vector<uint32_t> objects;
        for (int k = 0; k < 3; ++k) objects.push_back(rng.uniform_u32(6));
        std::vector<std::vector<uint32_t>> ctx;
        if (inst % 2 == 0) ctx = {{rng.uniform_u32(9), rng.uniform_u32(9)}, {rng.uniform_u32(9)}};
        std::vector<uint32_t> tokens;
        for (int k = 0; k < 4; ++k) tokens.push_back(rng.uniform_u32(9));
        const DropoutMask im{mix64(11, inst), 0.2}, tm{mix64(12, inst), 0.2};
        const DropoutMask im2{mix64(13, inst), 0.2}, tm2{mix64(14, inst), 0.2};
        const double y = 0.1 + 0.8 * rng.uniform();
        const bool symmetric_negative = inst % 3 == 0;

        // L_IT on one sampled pair (literal or symmetric-negative form)
        {
            const auto f = [&](const EncoderParams& q) {
                const double s = score_global(q, encode_image(q, objects, ctx, im).out,
                                              encode_sentence(q, tokens, tm).out)
                                     .value;
                return symmetric_negative ? loss_global_negative_symmetric(y, s) : loss_global(y, s);
            };
            EncoderGrad grad = EncoderGrad::zeros_like(params);
            const auto iv = encode_image(params, objects, ctx, im);
            const auto tv = encode_sentence(params, tokens, tm);
            const auto s = score_global(params, iv.out, tv.out);
            const double d_s = symmetric_negative ? (1.0 - y) / (1.0 - s.value) : -y / s.value;
            Vec du(d, 0.0), dv(d, 0.0);
            score_global_backward(params, s, d_s, du, dv, grad.temperature);
            encode_backward(params, iv, du, grad);
            encode_backward(params, tv, dv, grad);
            worst = std::max(worst, max_rel_err(flatten_grad(grad), finite_difference_grad(params, f)));
        }
        // L_C via the phrase-anchored softmax
        {
            const size_t target = rng.uniform_u32(3);
            const auto f = [&](const EncoderParams& q) {
                return y * -std::log(clamp_prob(score_local(q, tokens, objects, target).value));
            };
            EncoderGrad grad = EncoderGrad::zeros_like(params);
            const auto ls = score_local(params, tokens, objects, target);
            score_local_backward(params, ls, y * (-1.0 / ls.value), grad);
            worst = std::max(worst, max_rel_err(flatten_grad(grad), finite_difference_grad(params, f)));
        }
        // L_U between two dropout passes
        {
            const auto f = [&](const EncoderParams& q) {
                const double s1 = score_global(q, encode_image(q, objects, ctx, im).out,
                                               encode_sentence(q, tokens, tm).out)
                                      .value;
                const double s2 = score_global(q, encode_image(q, objects, ctx, im2).out,
                                               encode_sentence(q, tokens, tm2).out)
                                      .value;
                return loss_uncertainty(s1, s2);
            };
            EncoderGrad grad = EncoderGrad::zeros_like(params);
            const auto iv1 = encode_image(params, objects, ctx, im);
            const auto tv1 = encode_sentence(params, tokens, tm);
            const auto s1 = score_global(params, iv1.out, tv1.out);
            const auto iv2 = encode_image(params, objects, ctx, im2);
            const auto tv2 = encode_sentence(params, tokens, tm2);
            const auto s2 = score_global(params, iv2.out, tv2.out);
            double dp1 = 0.0, dp2 = 0.0;
            loss_uncertainty_backward(s1.value, s2.value, 1.0, dp1, dp2);
            Vec du1(d, 0.0), dv1(d, 0.0), du2(d, 0.0), dv2(d, 0.0);
            score_global_backward(params, s1, dp1, du1, dv1, grad.temperature);
            score_global_backward(params, s2, dp2, du2, dv2, grad.temperature);
            encode_backward(params, iv1, du1, grad);
            encode_backward(params, tv1, dv1, grad);
            encode_backward(params, iv2, du2, grad);
            encode_backward(params, tv2, dv2, grad);
            worst = std::max(worst, max_rel_err(flatten_grad(grad), finite_difference_grad(params, f)));
        }
    }

    const double elapsed = seconds_since(t0);
    c.expect(worst <= 1e-4, "max relative error " + std::to_string(worst));
    c.expect(elapsed < 5.0, "runtime budget exceeded");
    char buf[96];
    std::snprintf(buf, sizeof(buf), " (max rel err %.2e, %.2f s)", worst, elapsed);
    c.detail += buf;
    return c;
}

// ---------------------------------------------------------------- criterion 3

Check c3_discovery_equivalence() {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();

    for (int w = 0; w < 10; ++w) {
        WorldSpec spec;
        spec.n_images = 20;
        spec.captions_per_image = 5;  // 100 sentences
        spec.n_heldout_images = 0;
        spec.concept_vocab = 60;
        spec.seed = mix64(500, w);
        const SyntheticCorpus corpus = generate_world(spec);
        const HashScorer scorer(mix64(900, w), &corpus.image_object_nodes, &corpus.sentence_phrase_nodes);

        Rng prng(mix64(1300, w));
        LinkPolicy policy;
        policy.strategy = static_cast<LinkStrategy>(w % 3);
        policy.absolute_threshold = 0.3 + 0.4 * prng.uniform();
        policy.mu_image = 0.9 + 0.1 * prng.uniform();
        policy.mu_text = 0.9 + 0.1 * prng.uniform();
        policy.k_image = 1 + prng.uniform_u32(10);
        policy.k_text = 1 + prng.uniform_u32(4);
        policy.local_threshold = 0.2 + 0.4 * prng.uniform();

        const auto cands =
            build_candidates(scorer, corpus.train_images(), corpus.train_sentences(), policy.prefilter_width,
                             corpus.image_count(), corpus.sentence_count());
        MultiModalGraph graph(corpus.image_object_nodes, corpus.sentence_phrase_nodes);
        discovery_pass(scorer, graph, corpus, cands, policy, 1);

        const ReferenceLinks ref = reference_discovery(scorer, corpus, cands, policy);
        size_t stored = 0;
        bool world_ok = true;
        for (uint32_t i = 0; i < graph.image_count() && world_ok; ++i) {
            for (const auto& rec : graph.links_of_image(i)) {
                ++stored;
                const auto it = ref.global.find({i, rec.counterpart});
                if (it == ref.global.end() || it->second != rec.strength) world_ok = false;
            }
        }
        if (stored != ref.global.size()) world_ok = false;
        std::set<std::pair<uint32_t, uint32_t>> got_local;
        for (uint32_t o = 0; o < graph.object_count(); ++o)
            for (const auto& rec : graph.links_of_object(o))
                if (rec.strength == 1.0) got_local.insert({o, rec.counterpart});
        if (got_local != ref.local) world_ok = false;
        c.expect(world_ok, "world " + std::to_string(w) + " mismatch");
    }

    const double elapsed = seconds_since(t0);
    c.expect(elapsed < 5.0, "runtime budget exceeded");
    char buf[64];
    std::snprintf(buf, sizeof(buf), " (10 worlds, %.2f s)", elapsed);
    c.detail += buf;
    return c;
}

// ---------------------------------------------------------------- criterion 4

Check c4_iterative_improvement() {
    Check c;
    RunConfig cfg;  // default 200x1000 world, warm start sigma 0.3
    cfg.t_max = 5;
    cfg.checkpoint_every = 0;

    for (uint64_t seed : {1, 2, 3}) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto run = run_loop(cfg, seed);
        const double wall = seconds_since(t0);
        const auto& first = run.reports.front();
        const auto& fifth = run.reports.back();
        const std::string tag = "seed " + std::to_string(seed);
        c.expect(fifth.global_f1 > first.global_f1, tag + ": F1(t5) <= F1(t1)");
        c.expect(fifth.retrieval.r1_i2s >= first.retrieval.r1_i2s, tag + ": R@1 i2s dropped");
        c.expect(fifth.retrieval.r1_s2i >= first.retrieval.r1_s2i, tag + ": R@1 s2i dropped");
        c.expect(wall <= 120.0, tag + ": run exceeded 2 minutes");
        char buf[128];
        std::snprintf(buf, sizeof(buf), " [s%llu F1 %.3f->%.3f %.1fs]",
                      static_cast<unsigned long long>(seed), first.global_f1, fifth.global_f1, wall);
        c.detail += buf;
    }
    return c;
}

// ---------------------------------------------------------------- criterion 5

Check c5_strategy_ablation() {
    Check c;
    RunConfig cfg;
    cfg.world.zipf_skew = 1.2;  // popularity-skewed world
    cfg.t_max = 5;
    cfg.checkpoint_every = 0;

    int passes = 0;
    for (uint64_t seed : {1, 2, 3}) {
        const auto rows = run_strategy_comparison(cfg, seed);
        const IterationReport* at = nullptr;
        const IterationReport* bl = nullptr;
        for (const auto& row : rows) {
            if (row.name == "AT") at = &row.result.reports.back();
            if (row.name == "BL") bl = &row.result.reports.back();
        }
        bool ok = at && bl;
        if (ok) {
            ok = bl->pp_fraction <= at->pp_fraction;
            if (at->pp_fraction > 0.0) ok = ok && bl->pp_fraction < at->pp_fraction;
            ok = ok && bl->global_f1 >= at->global_f1;
            char buf[128];
            std::snprintf(buf, sizeof(buf), " [s%llu %%PP %.3f vs %.3f, F1 %.3f vs %.3f]",
                          static_cast<unsigned long long>(seed), bl->pp_fraction, at->pp_fraction,
                          bl->global_f1, at->global_f1);
            c.detail += buf;
        }
        if (ok) ++passes;
    }
    c.expect(passes >= 2, "only " + std::to_string(passes) + "/3 seeds satisfied the direction");
    return c;
}

// ---------------------------------------------------------------- criterion 6

Check c6_ablation_ladder() {
    Check c;
    RunConfig cfg;
    cfg.t_max = 5;
    cfg.checkpoint_every = 0;

    int passes = 0;
    for (uint64_t seed : {1, 2, 3}) {
        const auto rows = run_ablation_ladder(cfg, seed);
        const double baseline = rows.front().result.reports.back().global_f1;
        const double full = rows.back().result.reports.back().global_f1;
        if (full >= baseline) ++passes;
        char buf[96];
        std::snprintf(buf, sizeof(buf), " [s%llu full %.3f vs baseline %.3f]",
                      static_cast<unsigned long long>(seed), full, baseline);
        c.detail += buf;
    }
    c.expect(passes >= 2, "only " + std::to_string(passes) + "/3 seeds improved on the baseline");
    return c;
}

// ---------------------------------------------------------------- criterion 7

Check c7_noise_robustness() {
    Check c;
    RunConfig cfg;
    cfg.t_max = 5;
    cfg.checkpoint_every = 0;

    int passes = 0;
    for (uint64_t seed : {1, 2, 3}) {
        const auto rows = run_noise_suite(cfg, seed);
        const IterationReport* clean = nullptr;
        const IterationReport* noise3 = nullptr;
        for (const auto& row : rows) {
            if (row.name == "clean") clean = &row.result.reports.back();
            if (row.name == "noise3") noise3 = &row.result.reports.back();
        }
        bool ok = clean && noise3;
        if (ok) {
            const double d_i2s = std::fabs(clean->retrieval.r1_i2s - noise3->retrieval.r1_i2s);
            const double d_s2i = std::fabs(clean->retrieval.r1_s2i - noise3->retrieval.r1_s2i);
            ok = d_i2s <= 0.10 && d_s2i <= 0.10;
            char buf[96];
            std::snprintf(buf, sizeof(buf), " [s%llu dR@1 %.3f/%.3f]",
                          static_cast<unsigned long long>(seed), d_i2s, d_s2i);
            c.detail += buf;
        }
        if (ok) ++passes;
    }
    c.expect(passes >= 2, "only " + std::to_string(passes) + "/3 seeds stayed within 10 points");
    return c;
}

// ---------------------------------------------------------------- criterion 8

Check c8_random_environment() {
    Check c;
    RunConfig cfg;
    cfg.t_max = 5;
    cfg.checkpoint_every = 0;

    int passes = 0;
    for (uint64_t seed : {1, 2, 3}) {
        const auto o = run_random_env(cfg, seed);
        const double ours_drop = o.ours_clean_r1 - o.ours_random_r1;
        const double base_drop = o.baseline_clean_r1 - o.baseline_random_r1;
        if (ours_drop < base_drop) ++passes;
        char buf[96];
        std::snprintf(buf, sizeof(buf), " [s%llu drop %.3f vs %.3f]",
                      static_cast<unsigned long long>(seed), ours_drop, base_drop);
        c.detail += buf;
    }
    c.expect(passes >= 2, "only " + std::to_string(passes) + "/3 seeds lost less than the baseline");
    return c;
}

// ---------------------------------------------------------------- criterion 9

Check c9_inductive_generalization() {
    Check c;
    RunConfig cfg;
    cfg.t_max = 5;
    cfg.checkpoint_every = 0;

    for (uint64_t seed : {1, 2, 3}) {
        const auto o = run_inductive(cfg, seed);
        const std::string tag = "seed " + std::to_string(seed);
        c.expect(o.trained.r1_i2s > o.untrained.r1_i2s, tag + ": i2s did not improve");
        c.expect(o.trained.r1_s2i > o.untrained.r1_s2i, tag + ": s2i did not improve");
        char buf[96];
        std::snprintf(buf, sizeof(buf), " [s%llu %.3f/%.3f -> %.3f/%.3f]",
                      static_cast<unsigned long long>(seed), o.untrained.r1_i2s, o.untrained.r1_s2i,
                      o.trained.r1_i2s, o.trained.r1_s2i);
        c.detail += buf;
    }
    return c;
}

// --------------------------------------------------------------- criterion 10

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Check c10_determinism_and_resume() {
    Check c;
    RunConfig cfg;
    cfg.world.n_images = 60;
    cfg.world.n_heldout_images = 10;
    cfg.t_max = 3;
    cfg.model_warmup_epochs = 3;

    const fs::path base = fs::temp_directory_path() / "mmkg_acceptance_c10";
    fs::remove_all(base);
    run_loop(cfg, 1, base / "a");
    run_loop(cfg, 1, base / "b");
    c.expect(!slurp(base / "a" / "report.csv").empty(), "report.csv missing");
    c.expect(slurp(base / "a" / "report.csv") == slurp(base / "b" / "report.csv"),
             "report.csv differs between identical runs");

    resume_loop(cfg, base / "a" / "checkpoint_t1.json", base / "resumed");
    std::istringstream full(slurp(base / "a" / "report.csv"));
    std::istringstream cont(slurp(base / "resumed" / "report.csv"));
    std::string line;
    std::vector<std::string> full_rows, cont_rows;
    std::getline(full, line);
    while (std::getline(full, line)) full_rows.push_back(line);
    std::getline(cont, line);
    while (std::getline(cont, line)) cont_rows.push_back(line);
    c.expect(full_rows.size() == 3 && cont_rows.size() == 2, "unexpected row counts");
    if (full_rows.size() == 3 && cont_rows.size() == 2) {
        c.expect(cont_rows[0] == full_rows[1] && cont_rows[1] == full_rows[2],
                 "resumed iterations differ from the original run");
    }
    c.expect(slurp(base / "a" / "checkpoint_t3.json") == slurp(base / "resumed" / "checkpoint_t3.json"),
             "final checkpoints differ after resume");
    fs::remove_all(base);
    return c;
}

struct Criterion {
    int id;
    const char* name;
    std::function<Check()> fn;
};

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> all = {
        {1, "formula unit suite", c1_formula_suite},
        {2, "gradient check vs finite differences", c2_gradient_check},
        {3, "discovery oracle equivalence", c3_discovery_equivalence},
        {4, "iterative improvement", c4_iterative_improvement},
        {5, "link assignment strategy ablation", c5_strategy_ablation},
        {6, "ablation ladder", c6_ablation_ladder},
        {7, "noise robustness", c7_noise_robustness},
        {8, "random environment", c8_random_environment},
        {9, "inductive generalization", c9_inductive_generalization},
        {10, "determinism and resume", c10_determinism_and_resume},
    };
    return all;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
    }

    int failures = 0;
    for (const auto& cr : criteria()) {
        if (only != 0 && cr.id != only) continue;
        Check result;
        try {
            result = cr.fn();
        } catch (const std::exception& e) {
            result.pass = false;
            result.detail = std::string("exception: ") + e.what();
        }
        std::printf("[%s] criterion %2d: %s%s%s\n", result.pass ? "PASS" : "FAIL", cr.id, cr.name,
                    result.detail.empty() ? "" : " --", result.detail.c_str());
        std::fflush(stdout);
        if (!result.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
