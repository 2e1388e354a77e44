#include <doctest.h>

#include <cmath>

#include "mmkg/discovery.hpp"
#include "mmkg/training.hpp"
#include "test_support.hpp"

using namespace mmkg;
using namespace mmkg::test;

TEST_CASE("soft_label follows the piecewise sharpening rule") {
    CHECK(soft_label(1.0, 1.0, 0.25, 0.6).value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(soft_label(0.0, 0.0, 0.25, 0.6).value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(soft_label(0.5, 1.0, 0.25, 0.6).value == doctest::Approx(std::pow(0.5, 0.25)).epsilon(1e-12));
    CHECK(soft_label(0.5, 0.5, 0.25, 0.6).value ==
          doctest::Approx(0.6 * std::pow(0.5, 0.25)).epsilon(1e-12));
    CHECK(soft_label(0.3, 0.0, 0.25, 0.6).value ==
          doctest::Approx(1.0 - std::pow(0.7, 0.25)).epsilon(1e-12));
    CHECK(soft_label(0.5, 1.0, 0.25, 0.6).origin == LabelOrigin::Strong);
    CHECK(soft_label(0.5, 0.5, 0.25, 0.6).origin == LabelOrigin::Weak);
    CHECK(soft_label(0.5, 0.0, 0.25, 0.6).origin == LabelOrigin::Negative);
    CHECK_THROWS_AS(soft_label(1.5, 1.0, 0.25, 0.6), std::invalid_argument);
    CHECK_THROWS_AS(soft_label(0.5, 0.3, 0.25, 0.6), std::invalid_argument);
}

TEST_CASE("soft labels are monotone in the confidence and weak stays below strong") {
    for (double gamma : {0.25, 0.5, 1.0}) {
        double prev_strong = -1.0, prev_neg = -1.0;
        for (double f = 0.0; f <= 1.0; f += 0.05) {
            const double s = soft_label(f, 1.0, gamma, 0.6).value;
            const double w = soft_label(f, 0.5, gamma, 0.6).value;
            const double n = soft_label(f, 0.0, gamma, 0.6).value;
            CHECK(s >= prev_strong);
            CHECK(n >= prev_neg);
            CHECK(w <= s);
            if (f > 0.0) CHECK(w < s);
            CHECK(std::pow(f, gamma) >= f - 1e-12);  // gamma sharpening pushes positives up
            prev_strong = s;
            prev_neg = n;
        }
    }
}

TEST_CASE("loss_global is the label-weighted negative log score") {
    CHECK(loss_global(1.0, 1.0 - 1e-6) == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(loss_global(0.0, 0.123) == 0.0);
    const double y = std::pow(0.5, 0.25);
    CHECK(loss_global(y, 0.5) == doctest::Approx(y * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss_local accumulates the phrase-anchored cross entropy") {
    CHECK(loss_local({}, 1.0) == 0.0);
    CHECK(loss_local({1.0}, 1.0) == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(loss_local({0.5}, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(loss_local({0.5, 0.5}, 0.7) == doctest::Approx(0.7 * 2.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss_uncertainty is the symmetrized KL of the two passes") {
    CHECK(loss_uncertainty(0.37, 0.37) == 0.0);
    CHECK(loss_uncertainty(0.9, 0.6) == doctest::Approx(loss_uncertainty(0.6, 0.9)).epsilon(1e-12));
    // direct double-precision evaluation of the formula
    const double p1 = 0.9, p2 = 0.6;
    const double expect = 0.5 * (p1 * std::log(p1 / p2) + (1 - p1) * std::log((1 - p1) / (1 - p2))) +
                          0.5 * (p2 * std::log(p2 / p1) + (1 - p2) * std::log((1 - p2) / (1 - p1)));
    CHECK(loss_uncertainty(0.9, 0.6) == doctest::Approx(expect).epsilon(1e-12));

    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
        const double a = 0.01 + 0.98 * rng.uniform(), b = 0.01 + 0.98 * rng.uniform();
        CHECK(loss_uncertainty(a, b) >= 0.0);
        if (a != b) CHECK(loss_uncertainty(a, b) > 0.0);
    }
}

TEST_CASE("total_loss is the weighted sum of the three components") {
    TrainConfig cfg;
    cfg.lambda_global = 1.0;
    cfg.lambda_local = 0.05;
    cfg.lambda_uncertainty = 0.5;
    CHECK(total_loss(1.0, 1.0, 1.0, cfg) == doctest::Approx(1.55).epsilon(1e-12));
    cfg.lambda_global = cfg.lambda_local = cfg.lambda_uncertainty = 0.0;
    CHECK(total_loss(3.0, 4.0, 5.0, cfg) == 0.0);
    // zero local weight reproduces a no-local-loss ablation exactly
    TrainConfig no_local;
    no_local.lambda_local = 0.0;
    CHECK(total_loss(2.0, 123.0, 3.0, no_local) ==
          doctest::Approx(no_local.lambda_global * 2.0 + no_local.lambda_uncertainty * 3.0).epsilon(1e-12));
}

TEST_CASE("lr_schedule ramps then decays linearly") {
    CHECK(lr_schedule(0, 100, 0.01, 0.1) == 0.0);
    CHECK(lr_schedule(10, 100, 0.01, 0.1) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(lr_schedule(100, 100, 0.01, 0.1) == 0.0);
    CHECK(lr_schedule(55, 100, 0.01, 0.1) == doctest::Approx(0.01 * 45.0 / 90.0).epsilon(1e-12));
    CHECK(lr_schedule(5, 100, 0.01, 0.1) == doctest::Approx(0.005).epsilon(1e-12));
}

namespace {

MultiModalGraph triplet_graph() {
    // one image with one object; four sentences with one phrase each
    MultiModalGraph g({{0}}, {{0}, {1}, {2}, {3}});
    return g;
}

}  // namespace

TEST_CASE("sample_triplet draws strong positives, weak fallbacks and candidate negatives") {
    SUBCASE("a single strong neighbor is always chosen") {
        auto g = triplet_graph();
        g.set_global_link(0, 1, 1.0, 0.9);
        g.set_global_link(0, 2, 0.0, 0.2);
        for (uint64_t s = 0; s < 20; ++s) {
            Rng rng(s);
            const auto t = sample_triplet(g, {NodeKind::Image, 0}, rng);
            REQUIRE(t.positive.has_value());
            CHECK(*t.positive == 1);
            CHECK(t.positive_strength == 1.0);
            CHECK(t.positive_confidence == 0.9);
            REQUIRE(t.negative.has_value());
            CHECK(*t.negative == 2);
            CHECK(t.negative_confidence == 0.2);
        }
    }
    SUBCASE("weak links back up an empty strong pool") {
        auto g = triplet_graph();
        g.set_global_link(0, 2, 0.5, 0.6);
        Rng rng(5);
        const auto t = sample_triplet(g, {NodeKind::Image, 0}, rng);
        REQUIRE(t.positive.has_value());
        CHECK(*t.positive == 2);
        CHECK(t.positive_strength == 0.5);
        CHECK_FALSE(t.negative.has_value());
    }
    SUBCASE("no links at all yields no positive") {
        auto g = triplet_graph();
        Rng rng(5);
        const auto t = sample_triplet(g, {NodeKind::Image, 0}, rng);
        CHECK_FALSE(t.positive.has_value());
    }
    SUBCASE("two strong neighbors are drawn uniformly (3 sigma over 10k draws)") {
        auto g = triplet_graph();
        g.set_global_link(0, 1, 1.0, 0.9);
        g.set_global_link(0, 3, 1.0, 0.8);
        int count1 = 0;
        const int n = 10000;
        for (int k = 0; k < n; ++k) {
            Rng rng(mix64(1000, k));
            const auto t = sample_triplet(g, {NodeKind::Image, 0}, rng);
            if (*t.positive == 1) ++count1;
        }
        // binomial(10000, 0.5): sigma = 50
        CHECK(std::abs(count1 - n / 2) <= 150);
    }
}

TEST_CASE("Adam leaves parameters unchanged under a zero gradient") {
    EncoderParams p = random_params(5, 5, 4, 2);
    const Vec before = flatten_params(p);
    AdamState adam(p.trainable_count());
    const EncoderGrad zero = EncoderGrad::zeros_like(p);
    adam.apply(p, zero, 0.01, 0.9, 0.999);
    CHECK(flatten_params(p) == before);
}

namespace {

SyntheticCorpus tiny_corpus() {
    WorldSpec spec;
    spec.n_images = 4;
    spec.n_heldout_images = 0;
    spec.captions_per_image = 2;
    spec.concept_vocab = 20;
    spec.seed = 12;
    return generate_world(spec);
}

}  // namespace

TEST_CASE("train_iteration with zero learning rate leaves parameters bit-exact") {
    const auto corpus = tiny_corpus();
    MultiModalGraph graph(corpus.image_object_nodes, corpus.sentence_phrase_nodes);
    for (const auto& [i, s] : corpus.gt_global) graph.set_global_link(i, s, 1.0, 0.8);

    EncoderParams model = random_params(corpus.object_vocab, corpus.token_vocab, 8, 4);
    const Vec before = flatten_params(model);
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    TrainState ts{AdamState(model.trainable_count()), 0, 100};
    train_iteration(model, ts, graph, corpus, cfg, 7, 1);
    CHECK(flatten_params(model) == before);
}

TEST_CASE("train_iteration is bit-reproducible under a fixed seed") {
    const auto corpus = tiny_corpus();
    MultiModalGraph graph(corpus.image_object_nodes, corpus.sentence_phrase_nodes);
    for (const auto& [i, s] : corpus.gt_global) graph.set_global_link(i, s, 1.0, 0.8);
    for (uint32_t i = 0; i < corpus.image_count(); ++i)
        graph.set_global_link(i, (i + 3) % corpus.sentence_count(), 0.0, 0.2);

    const auto run = [&]() {
        EncoderParams model = random_params(corpus.object_vocab, corpus.token_vocab, 8, 4);
        TrainState ts{AdamState(model.trainable_count()), 0, 100};
        TrainConfig cfg;
        train_iteration(model, ts, graph, corpus, cfg, 7, 1);
        return flatten_params(model);
    };
    CHECK(run() == run());
}

TEST_CASE("fifty steps on a single pair grow its margin over the negative") {
    const auto corpus = tiny_corpus();
    MultiModalGraph graph(corpus.image_object_nodes, corpus.sentence_phrase_nodes);
    graph.set_global_link(0, 0, 1.0, 0.9);   // the single ground-truth pair
    graph.set_global_link(0, 1, 0.0, 0.3);   // candidate negative

    EncoderParams model = random_params(corpus.object_vocab, corpus.token_vocab, 8, 4);
    TrainConfig cfg;
    cfg.dropout_rate = 0.0;
    cfg.uncertainty = false;
    cfg.graph_context = false;

    const auto margin = [&]() {
        const EncoderScorer scorer(model, corpus);
        return scorer.global_score(0, 0) - scorer.global_score(0, 1);
    };
    const double before = margin();
    TrainState ts{AdamState(model.trainable_count()), 0, 1000};
    for (uint32_t t = 1; t <= 50; ++t) train_iteration(model, ts, graph, corpus, cfg, 7, t);
    const double after = margin();
    CHECK(after > before);
    const EncoderScorer scorer(model, corpus);
    CHECK(scorer.global_score(0, 0) > scorer.global_score(0, 1));
}

TEST_CASE("empty corpora are a contract error") {
    const auto corpus = tiny_corpus();
    SyntheticCorpus empty = corpus;
    for (auto& h : empty.image_heldout) h = 1;
    for (auto& h : empty.sentence_heldout) h = 1;
    MultiModalGraph graph(corpus.image_object_nodes, corpus.sentence_phrase_nodes);
    EncoderParams model = random_params(corpus.object_vocab, corpus.token_vocab, 8, 4);
    TrainState ts{AdamState(model.trainable_count()), 0, 100};
    TrainConfig cfg;
    CHECK_THROWS_AS(train_iteration(model, ts, graph, empty, cfg, 7, 1), std::invalid_argument);
}
