#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mmkg/eval.hpp"
#include "mmkg/harness.hpp"
#include "test_support.hpp"

using namespace mmkg;
using namespace mmkg::test;

TEST_CASE("global_prf computes precision, recall and F1") {
    using Pairs = std::vector<std::pair<uint32_t, uint32_t>>;
    const Pairs truth{{0, 0}, {1, 1}, {2, 2}, {3, 3}, {4, 4}, {5, 5}};

    SUBCASE("perfect prediction") {
        const auto prf = global_prf(truth, truth);
        CHECK(prf.precision == 1.0);
        CHECK(prf.recall == 1.0);
        CHECK(prf.f1 == 1.0);
    }
    SUBCASE("disjoint prediction") {
        const auto prf = global_prf({{9, 9}}, truth);
        CHECK(prf.precision == 0.0);
        CHECK(prf.recall == 0.0);
        CHECK(prf.f1 == 0.0);
    }
    SUBCASE("3 of 4 predictions correct, 3 of 6 truths found") {
        const auto prf = global_prf({{0, 0}, {1, 1}, {2, 2}, {7, 7}}, truth);
        CHECK(prf.precision == doctest::Approx(0.75).epsilon(1e-12));
        CHECK(prf.recall == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(prf.f1 == doctest::Approx(0.6).epsilon(1e-12));
    }
    SUBCASE("order of links does not matter") {
        Pairs shuffled{{2, 2}, {0, 0}, {1, 1}};
        Pairs ordered{{0, 0}, {1, 1}, {2, 2}};
        const auto a = global_prf(shuffled, truth);
        const auto b = global_prf(ordered, truth);
        CHECK(a.precision == b.precision);
        CHECK(a.recall == b.recall);
    }
    CHECK_THROWS_AS(global_prf({{0, 0}}, {}), std::invalid_argument);
}

namespace {

std::vector<uint32_t> iota_vec(uint32_t n) {
    std::vector<uint32_t> v(n);
    for (uint32_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

}  // namespace

TEST_CASE("retrieval_recall_at_k ranks exhaustively with index tie-breaks") {
    SUBCASE("an oracle scorer yields R@1 = 1") {
        const auto r = retrieval_recall_at_k([](uint32_t q, uint32_t g) { return q == g ? 1.0 : 0.0; },
                                             iota_vec(5), iota_vec(5),
                                             [](uint32_t q, uint32_t g) { return q == g; }, {1});
        CHECK(r.at(1) == 1.0);
    }
    SUBCASE("an adversarial scorer yields R@1 = 0") {
        const auto r = retrieval_recall_at_k([](uint32_t q, uint32_t g) { return q == g ? -1.0 : 0.0; },
                                             iota_vec(5), iota_vec(5),
                                             [](uint32_t q, uint32_t g) { return q == g; }, {1});
        CHECK(r.at(1) == 0.0);
    }
    SUBCASE("3x6 score matrix matches a brute-force ranking") {
        const std::vector<std::vector<double>> m{{0.9, 0.8, 0.1, 0.5, 0.5, 0.2},
                                                 {0.2, 0.2, 0.2, 0.2, 0.2, 0.2},
                                                 {0.1, 0.9, 0.3, 0.6, 0.0, 0.4}};
        const std::set<std::pair<uint32_t, uint32_t>> truth{{0, 3}, {1, 4}, {2, 2}};
        const auto score = [&](uint32_t q, uint32_t g) { return m[q][g]; };
        const auto is_truth = [&](uint32_t q, uint32_t g) { return truth.count({q, g}) > 0; };

        const auto got = retrieval_recall_at_k(score, iota_vec(3), iota_vec(6), is_truth, {1, 2, 3, 6, 10});
        for (uint32_t k : {1u, 2u, 3u, 6u, 10u}) {
            size_t hits = 0;
            for (uint32_t q = 0; q < 3; ++q) {
                std::vector<uint32_t> order = iota_vec(6);
                std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
                    if (m[q][a] != m[q][b]) return m[q][a] > m[q][b];
                    return a < b;
                });
                const size_t kk = std::min<size_t>(k, order.size());
                for (size_t pos = 0; pos < kk; ++pos)
                    if (is_truth(q, order[pos])) {
                        ++hits;
                        break;
                    }
            }
            CHECK(got.at(k) == doctest::Approx(hits / 3.0).epsilon(1e-12));
        }
        // R@k is non-decreasing in k, and k beyond the gallery clamps
        CHECK(got.at(1) <= got.at(2));
        CHECK(got.at(2) <= got.at(3));
        CHECK(got.at(10) == got.at(6));
    }
    SUBCASE("a query without ground truth in the gallery is a contract error") {
        CHECK_THROWS_AS(retrieval_recall_at_k([](uint32_t, uint32_t) { return 0.5; }, iota_vec(2), iota_vec(2),
                                              [](uint32_t, uint32_t) { return false; }, {1}),
                        std::invalid_argument);
    }
}

TEST_CASE("local_accuracy counts resolved phrases") {
    using Pairs = std::vector<std::pair<uint32_t, uint32_t>>;
    const Pairs truth{{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    CHECK(local_accuracy(truth, truth) == 1.0);
    CHECK(local_accuracy({}, truth) == 0.0);
    CHECK(local_accuracy({{0, 0}, {1, 1}, {9, 2}, {9, 3}}, truth) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK_THROWS_AS(local_accuracy(truth, {}), std::invalid_argument);
}

TEST_CASE("evaluate_inductive scores the held-out split near chance for an untrained model") {
    double total = 0.0;
    for (uint64_t seed : {1, 2, 3}) {
        WorldSpec spec;
        spec.n_images = 40;
        spec.n_heldout_images = 20;
        spec.seed = seed;
        const auto corpus = generate_world(spec);
        EncoderParams model = random_params(corpus.object_vocab, corpus.token_vocab, 16, seed);
        const auto rep = evaluate_inductive(model, corpus);
        total += rep.r1_i2s;
    }
    // chance level is 5/100 = 0.05 for 20 query images over a 100-sentence gallery
    CHECK(total / 3.0 < 0.18);

    WorldSpec no_heldout;
    no_heldout.n_heldout_images = 0;
    no_heldout.n_images = 10;
    const auto corpus = generate_world(no_heldout);
    EncoderParams model = random_params(corpus.object_vocab, corpus.token_vocab, 8, 1);
    CHECK_THROWS_AS(evaluate_inductive(model, corpus), std::invalid_argument);
}

TEST_CASE("graph context does not hurt transductive retrieval of a trained model") {
    RunConfig cfg;
    cfg.world.n_images = 60;
    cfg.world.n_heldout_images = 10;
    cfg.t_max = 4;
    const auto run = run_loop(cfg, 1);
    const auto& corpus = *run.corpus;
    std::vector<uint32_t> images = corpus.train_images(), sentences = corpus.train_sentences();

    // rebuild the final graph from the final model, as the loop does
    const EncoderScorer scorer(run.final_model, corpus);
    const auto cands = build_candidates(OracleScorer(corpus, cfg.init_scorer.sigma,
                                                     stream_seed(1, Stream::InitialScorer)),
                                        images, sentences, cfg.policy.prefilter_width, corpus.image_count(),
                                        corpus.sentence_count());
    MultiModalGraph graph(corpus.image_object_nodes, corpus.sentence_phrase_nodes);
    discovery_pass(scorer, graph, corpus, cands, cfg.policy, cfg.t_max);

    const auto with_ctx = evaluate_retrieval(run.final_model, corpus, images, sentences, &graph);
    const auto without = evaluate_retrieval(run.final_model, corpus, images, sentences, nullptr);
    CHECK(with_ctx.r1_i2s >= without.r1_i2s);
}

TEST_CASE("report serialization round-trips exactly") {
    IterationReport r;
    r.iteration = 7;
    r.global_precision = 1.0 / 3.0;
    r.global_recall = 0.7071067811865476;
    r.global_f1 = 0.123456789012345678;
    r.local_acc = 0.25;
    r.retrieval.r1_i2s = 0.1;
    r.retrieval.r5_i2s = 0.2;
    r.retrieval.r10_i2s = 0.3;
    r.retrieval.r1_s2i = 0.4;
    r.retrieval.r5_s2i = 0.5;
    r.retrieval.r10_s2i = 0.6;
    r.pp_fraction = 0.55;
    r.strong_links = 11;
    r.weak_links = 4;
    r.mean_loss_global = 1e-17;
    r.mean_loss_local = 3.0;
    r.mean_loss_uncertainty = 0.0;
    r.mean_uncertainty = 2.2250738585072014e-308;
    r.config_hash = "deadbeefdeadbeef";

    const auto j = nlohmann::json::parse(report_to_jsonl(r));
    CHECK(j.at("global_precision").get<double>() == r.global_precision);
    CHECK(j.at("global_recall").get<double>() == r.global_recall);
    CHECK(j.at("global_f1").get<double>() == r.global_f1);
    CHECK(j.at("mean_loss_global").get<double>() == r.mean_loss_global);
    CHECK(j.at("mean_uncertainty").get<double>() == r.mean_uncertainty);
    CHECK(j.at("strong_links").get<size_t>() == 11);
    CHECK(j.at("config_hash").get<std::string>() == r.config_hash);

    std::ostringstream csv;
    write_report_csv_row(csv, r);
    // the csv row carries the same exact doubles
    std::istringstream is(csv.str());
    std::string field;
    std::getline(is, field, ',');  // iteration
    std::getline(is, field, ',');
    CHECK(std::stod(field) == r.global_precision);
    std::getline(is, field, ',');
    CHECK(std::stod(field) == r.global_recall);
}
