#include "mmkg/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "mmkg/discovery.hpp"
#include "mmkg/rng.hpp"
#include "mmkg/training.hpp"

namespace mmkg {

namespace {

uint64_t pair_key(uint32_t a, uint32_t b) { return (static_cast<uint64_t>(a) << 32) | b; }

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

Prf global_prf(const std::vector<std::pair<uint32_t, uint32_t>>& predicted,
               const std::vector<std::pair<uint32_t, uint32_t>>& truth) {
    if (truth.empty()) throw std::invalid_argument("global_prf: empty ground truth");
    std::unordered_set<uint64_t> truth_set, pred_set;
    for (const auto& [a, b] : truth) truth_set.insert(pair_key(a, b));
    for (const auto& [a, b] : predicted) pred_set.insert(pair_key(a, b));
    size_t inter = 0;
    for (uint64_t k : pred_set)
        if (truth_set.count(k)) ++inter;

    Prf out;
    out.precision = pred_set.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(pred_set.size());
    out.recall = static_cast<double>(inter) / static_cast<double>(truth_set.size());
    out.f1 = (out.precision + out.recall) > 0.0
                 ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
                 : 0.0;
    return out;
}

std::map<uint32_t, double> retrieval_recall_at_k(
    const std::function<double(uint32_t, uint32_t)>& score, const std::vector<uint32_t>& queries,
    const std::vector<uint32_t>& gallery, const std::function<bool(uint32_t, uint32_t)>& is_truth,
    const std::vector<uint32_t>& ks) {
    if (queries.empty()) throw std::invalid_argument("retrieval_recall_at_k: no queries");
    if (gallery.empty()) throw std::invalid_argument("retrieval_recall_at_k: empty gallery");

    uint32_t max_k = 0;
    for (uint32_t k : ks) max_k = std::max(max_k, k);
    max_k = std::min<uint32_t>(max_k, static_cast<uint32_t>(gallery.size()));

    std::map<uint32_t, size_t> hits;
    for (uint32_t k : ks) hits[k] = 0;

    std::vector<std::pair<double, uint32_t>> scored(gallery.size());
    for (uint32_t q : queries) {
        bool has_truth = false;
        for (size_t g = 0; g < gallery.size(); ++g) {
            scored[g] = {score(q, gallery[g]), gallery[g]};
            has_truth = has_truth || is_truth(q, gallery[g]);
        }
        if (!has_truth) throw std::invalid_argument("retrieval_recall_at_k: query without ground truth in gallery");
        std::partial_sort(scored.begin(), scored.begin() + max_k, scored.end(),
                          [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        uint32_t first_hit = max_k;  // position of the best-ranked truth
        for (uint32_t pos = 0; pos < max_k; ++pos) {
            if (is_truth(q, scored[pos].second)) {
                first_hit = pos;
                break;
            }
        }
        for (uint32_t k : ks) {
            const uint32_t kk = std::min<uint32_t>(k, static_cast<uint32_t>(gallery.size()));
            if (first_hit < kk) ++hits[k];
        }
    }

    std::map<uint32_t, double> out;
    for (uint32_t k : ks) out[k] = static_cast<double>(hits[k]) / static_cast<double>(queries.size());
    return out;
}

double local_accuracy(const std::vector<std::pair<uint32_t, uint32_t>>& predicted,
                      const std::vector<std::pair<uint32_t, uint32_t>>& truth) {
    if (truth.empty()) throw std::invalid_argument("local_accuracy: empty phrase universe");
    std::unordered_set<uint64_t> true_pairs;
    std::unordered_set<uint32_t> universe;
    for (const auto& [o, p] : truth) {
        true_pairs.insert(pair_key(o, p));
        universe.insert(p);
    }
    // a phrase is resolved when any predicted object for it is a true one
    std::unordered_set<uint32_t> resolved;
    for (const auto& [o, p] : predicted)
        if (true_pairs.count(pair_key(o, p))) resolved.insert(p);
    return static_cast<double>(resolved.size()) / static_cast<double>(universe.size());
}

namespace {

RetrievalReport retrieval_both_directions(const EncoderScorer& scorer, const SyntheticCorpus& corpus,
                                          const std::vector<uint32_t>& images,
                                          const std::vector<uint32_t>& sentences) {
    std::unordered_set<uint64_t> truth;
    std::unordered_set<uint32_t> image_pool(images.begin(), images.end());
    std::unordered_set<uint32_t> sentence_pool(sentences.begin(), sentences.end());
    std::vector<uint32_t> img_queries, sent_queries;
    {
        std::unordered_set<uint32_t> img_with_truth, sent_with_truth;
        for (const auto& [i, s] : corpus.gt_global) {
            if (image_pool.count(i) && sentence_pool.count(s)) {
                truth.insert(pair_key(i, s));
                img_with_truth.insert(i);
                sent_with_truth.insert(s);
            }
        }
        for (uint32_t i : images)
            if (img_with_truth.count(i)) img_queries.push_back(i);
        for (uint32_t s : sentences)
            if (sent_with_truth.count(s)) sent_queries.push_back(s);
    }

    RetrievalReport rep;
    if (img_queries.empty() || sent_queries.empty()) return rep;  // nothing to rank (e.g. random env)

    const std::vector<uint32_t> ks{1, 5, 10};
    auto i2s = retrieval_recall_at_k(
        [&](uint32_t q, uint32_t g) { return scorer.global_score(q, g); }, img_queries, sentences,
        [&](uint32_t q, uint32_t g) { return truth.count(pair_key(q, g)) > 0; }, ks);
    auto s2i = retrieval_recall_at_k(
        [&](uint32_t q, uint32_t g) { return scorer.global_score(g, q); }, sent_queries, images,
        [&](uint32_t q, uint32_t g) { return truth.count(pair_key(g, q)) > 0; }, ks);
    rep.r1_i2s = i2s[1];
    rep.r5_i2s = i2s[5];
    rep.r10_i2s = i2s[10];
    rep.r1_s2i = s2i[1];
    rep.r5_s2i = s2i[5];
    rep.r10_s2i = s2i[10];
    return rep;
}

}  // namespace

RetrievalReport evaluate_retrieval(const EncoderParams& params, const SyntheticCorpus& corpus,
                                   const std::vector<uint32_t>& images, const std::vector<uint32_t>& sentences,
                                   const MultiModalGraph* context_graph) {
    const EncoderScorer scorer(params, corpus, context_graph);
    return retrieval_both_directions(scorer, corpus, images, sentences);
}

RetrievalReport evaluate_inductive(const EncoderParams& params, const SyntheticCorpus& corpus) {
    const auto images = corpus.heldout_images();
    const auto sentences = corpus.heldout_sentences();
    if (images.empty() || sentences.empty())
        throw std::invalid_argument("evaluate_inductive: corpus has no held-out split");
    return evaluate_retrieval(params, corpus, images, sentences, nullptr);
}

IterationReport compute_iteration_report(const EncoderParams& params, const MultiModalGraph& graph,
                                         const SyntheticCorpus& corpus, bool use_context, uint32_t pp_cutoff,
                                         uint64_t master_seed, double dropout_rate, uint32_t iteration) {
    IterationReport rep;
    rep.iteration = iteration;

    // predicted strength-1 global links; weak links count as non-links
    std::vector<std::pair<uint32_t, uint32_t>> predicted;
    for (uint32_t i = 0; i < graph.image_count(); ++i) {
        for (const auto& rec : graph.links_of_image(i)) {
            if (rec.strength == 1.0) predicted.emplace_back(i, rec.counterpart);
            if (rec.strength == 0.5) ++rep.weak_links;
        }
    }
    rep.strong_links = predicted.size();

    std::vector<std::pair<uint32_t, uint32_t>> truth;
    for (const auto& [i, s] : corpus.gt_global)
        if (!corpus.image_heldout[i] && !corpus.sentence_heldout[s]) truth.emplace_back(i, s);
    if (!truth.empty()) {
        const Prf prf = global_prf(predicted, truth);
        rep.global_precision = prf.precision;
        rep.global_recall = prf.recall;
        rep.global_f1 = prf.f1;
    }

    std::vector<std::pair<uint32_t, uint32_t>> local_truth;
    for (const auto& [o, p] : corpus.gt_local)
        if (!corpus.sentence_heldout[corpus.phrases[p].sentence]) local_truth.emplace_back(o, p);
    if (!local_truth.empty()) {
        std::vector<std::pair<uint32_t, uint32_t>> local_pred;
        for (uint32_t o = 0; o < graph.object_count(); ++o)
            for (const auto& rec : graph.links_of_object(o))
                if (rec.strength == 1.0) local_pred.emplace_back(o, rec.counterpart);
        rep.local_acc = local_accuracy(local_pred, local_truth);
    }

    rep.pp_fraction = graph.pp_fraction(pp_cutoff);

    // transductive retrieval over the non-noise training split
    std::vector<uint32_t> images, sentences;
    for (uint32_t i = 0; i < corpus.image_count(); ++i)
        if (!corpus.image_heldout[i] && !corpus.image_noise[i]) images.push_back(i);
    for (uint32_t s = 0; s < corpus.sentence_count(); ++s)
        if (!corpus.sentence_heldout[s] && !corpus.sentence_noise[s]) sentences.push_back(s);
    rep.retrieval = evaluate_retrieval(params, corpus, images, sentences, use_context ? &graph : nullptr);

    // fixed probe set for the mean dropout-divergence: first ground-truth
    // pairs, same masks at every iteration
    std::vector<std::pair<uint32_t, uint32_t>> probe(truth.begin(),
                                                     truth.begin() + std::min<size_t>(truth.size(), 200));
    if (probe.empty()) {
        const auto ti = corpus.train_images();
        const auto ts = corpus.train_sentences();
        for (size_t k = 0; k < std::min<size_t>({ti.size(), ts.size(), 200}); ++k)
            probe.emplace_back(ti[k], ts[k]);
    }
    if (!probe.empty() && dropout_rate > 0.0) {
        double sum = 0.0;
        const std::vector<std::vector<uint32_t>> no_ctx;
        for (size_t k = 0; k < probe.size(); ++k) {
            const auto [i, s] = probe[k];
            double p[2];
            for (int pass = 0; pass < 2; ++pass) {
                const DropoutMask im{stream_seed(master_seed, Stream::UncertaintyProbe, k, pass * 2), dropout_rate};
                const DropoutMask tm{stream_seed(master_seed, Stream::UncertaintyProbe, k, pass * 2 + 1),
                                     dropout_rate};
                const EncodeTape iv = encode_image(params, corpus.image_concepts[i], no_ctx, im);
                const EncodeTape tv = encode_sentence(params, corpus.sentence_tokens[s], tm);
                p[pass] = score_global(params, iv.out, tv.out).value;
            }
            sum += loss_uncertainty(p[0], p[1]);
        }
        rep.mean_uncertainty = sum / static_cast<double>(probe.size());
    }

    return rep;
}

void write_report_csv_header(std::ostream& out) {
    out << "iteration,global_precision,global_recall,global_f1,local_accuracy,"
           "r1_i2s,r5_i2s,r10_i2s,r1_s2i,r5_s2i,r10_s2i,pp_fraction,strong_links,weak_links,"
           "mean_loss_global,mean_loss_local,mean_loss_uncertainty,mean_uncertainty,config_hash\n";
}

void write_report_csv_row(std::ostream& out, const IterationReport& r) {
    out << r.iteration << ',' << fmt_double(r.global_precision) << ',' << fmt_double(r.global_recall) << ','
        << fmt_double(r.global_f1) << ',' << fmt_double(r.local_acc) << ',' << fmt_double(r.retrieval.r1_i2s)
        << ',' << fmt_double(r.retrieval.r5_i2s) << ',' << fmt_double(r.retrieval.r10_i2s) << ','
        << fmt_double(r.retrieval.r1_s2i) << ',' << fmt_double(r.retrieval.r5_s2i) << ','
        << fmt_double(r.retrieval.r10_s2i) << ',' << fmt_double(r.pp_fraction) << ',' << r.strong_links << ','
        << r.weak_links << ',' << fmt_double(r.mean_loss_global) << ',' << fmt_double(r.mean_loss_local) << ','
        << fmt_double(r.mean_loss_uncertainty) << ',' << fmt_double(r.mean_uncertainty) << ',' << r.config_hash
        << '\n';
}

std::string report_to_jsonl(const IterationReport& r) {
    std::ostringstream os;
    os << "{\"iteration\":" << r.iteration << ",\"global_precision\":" << fmt_double(r.global_precision)
       << ",\"global_recall\":" << fmt_double(r.global_recall) << ",\"global_f1\":" << fmt_double(r.global_f1)
       << ",\"local_accuracy\":" << fmt_double(r.local_acc) << ",\"r1_i2s\":" << fmt_double(r.retrieval.r1_i2s)
       << ",\"r5_i2s\":" << fmt_double(r.retrieval.r5_i2s) << ",\"r10_i2s\":" << fmt_double(r.retrieval.r10_i2s)
       << ",\"r1_s2i\":" << fmt_double(r.retrieval.r1_s2i) << ",\"r5_s2i\":" << fmt_double(r.retrieval.r5_s2i)
       << ",\"r10_s2i\":" << fmt_double(r.retrieval.r10_s2i) << ",\"pp_fraction\":" << fmt_double(r.pp_fraction)
       << ",\"strong_links\":" << r.strong_links << ",\"weak_links\":" << r.weak_links
       << ",\"mean_loss_global\":" << fmt_double(r.mean_loss_global)
       << ",\"mean_loss_local\":" << fmt_double(r.mean_loss_local)
       << ",\"mean_loss_uncertainty\":" << fmt_double(r.mean_loss_uncertainty)
       << ",\"mean_uncertainty\":" << fmt_double(r.mean_uncertainty) << ",\"config_hash\":\"" << r.config_hash
       << "\"}";
    return os.str();
}

}  // namespace mmkg
