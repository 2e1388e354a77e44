#include <benchmark/benchmark.h>

#include "mmkg/discovery.hpp"
#include "mmkg/eval.hpp"
#include "mmkg/training.hpp"

using namespace mmkg;

namespace {

struct BenchWorld {
    SyntheticCorpus corpus;
    EncoderParams model;
    CandidateSet candidates;
    MultiModalGraph graph;

    BenchWorld()
        : corpus(make_corpus()),
          model(EncoderParams::init({}, corpus.object_vocab, corpus.token_vocab, 1)),
          candidates(make_candidates(corpus)),
          graph(corpus.image_object_nodes, corpus.sentence_phrase_nodes) {
        const EncoderScorer scorer(model, corpus);
        discovery_pass(scorer, graph, corpus, candidates, LinkPolicy{}, 1);
    }

    static SyntheticCorpus make_corpus() {
        WorldSpec spec;
        spec.n_images = 100;
        spec.n_heldout_images = 0;
        spec.seed = 7;
        return generate_world(spec);
    }

    static CandidateSet make_candidates(const SyntheticCorpus& corpus) {
        const OracleScorer oracle(corpus, 0.3, 11);
        return build_candidates(oracle, corpus.train_images(), corpus.train_sentences(), 40,
                                corpus.image_count(), corpus.sentence_count());
    }
};

BenchWorld& world() {
    static BenchWorld w;
    return w;
}

void BM_EncodeImage(benchmark::State& state) {
    auto& w = world();
    const std::vector<std::vector<uint32_t>> ctx{{0, 1}, {2, 3}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode_image(w.model, w.corpus.image_concepts[0], ctx, std::nullopt));
    }
}
BENCHMARK(BM_EncodeImage);

void BM_ScoreGlobal(benchmark::State& state) {
    auto& w = world();
    const auto iv = encode_image(w.model, w.corpus.image_concepts[0], {}, std::nullopt);
    const auto tv = encode_sentence(w.model, w.corpus.sentence_tokens[0], std::nullopt);
    for (auto _ : state) {
        benchmark::DoNotOptimize(score_global(w.model, iv.out, tv.out));
    }
}
BENCHMARK(BM_ScoreGlobal);

void BM_BuildCandidates(benchmark::State& state) {
    auto& w = world();
    const OracleScorer oracle(w.corpus, 0.3, 11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(build_candidates(oracle, w.corpus.train_images(), w.corpus.train_sentences(),
                                                  40, w.corpus.image_count(), w.corpus.sentence_count()));
    }
}
BENCHMARK(BM_BuildCandidates);

void BM_DiscoveryPass(benchmark::State& state) {
    auto& w = world();
    const EncoderScorer scorer(w.model, w.corpus);
    MultiModalGraph graph(w.corpus.image_object_nodes, w.corpus.sentence_phrase_nodes);
    for (auto _ : state) {
        discovery_pass(scorer, graph, w.corpus, w.candidates, LinkPolicy{}, 1);
    }
}
BENCHMARK(BM_DiscoveryPass);

void BM_TrainIteration(benchmark::State& state) {
    auto& w = world();
    EncoderParams model = w.model;
    TrainState ts{AdamState(model.trainable_count()), 0, 1000000};
    TrainConfig cfg;
    uint32_t t = 1;
    for (auto _ : state) {
        train_iteration(model, ts, w.graph, w.corpus, cfg, 5, t++);
    }
}
BENCHMARK(BM_TrainIteration);

void BM_RetrievalEval(benchmark::State& state) {
    auto& w = world();
    for (auto _ : state) {
        benchmark::DoNotOptimize(evaluate_retrieval(w.model, w.corpus, w.corpus.train_images(),
                                                    w.corpus.train_sentences(), nullptr));
    }
}
BENCHMARK(BM_RetrievalEval);

}  // namespace

BENCHMARK_MAIN();
