#include "mmkg/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace mmkg {

const char* link_strategy_name(LinkStrategy s) {
    switch (s) {
        case LinkStrategy::AT: return "AT";
        case LinkStrategy::LA: return "LA";
        case LinkStrategy::BL: return "BL";
    }
    return "?";
}

LinkStrategy link_strategy_from_name(const std::string& name) {
    if (name == "AT") return LinkStrategy::AT;
    if (name == "LA") return LinkStrategy::LA;
    if (name == "BL") return LinkStrategy::BL;
    throw std::invalid_argument("unknown link strategy: " + name);
}

void LinkPolicy::validate() const {
    if (absolute_threshold <= 0.0 || absolute_threshold >= 1.0)
        throw std::invalid_argument("policy: absolute_threshold must lie in (0,1)");
    if (mu_image <= 0.0 || mu_image > 1.0 || mu_text <= 0.0 || mu_text > 1.0)
        throw std::invalid_argument("policy: threshold powers must lie in (0,1]");
    if (local_threshold <= 0.0 || local_threshold >= 1.0)
        throw std::invalid_argument("policy: local_threshold must lie in (0,1)");
    if (prefilter_width == 0) throw std::invalid_argument("policy: prefilter_width must be positive");
    if (k_image == 0 || k_text == 0) throw std::invalid_argument("policy: top-K must be positive");
    if (k_image > prefilter_width || k_text > prefilter_width)
        throw std::invalid_argument("policy: top-K cannot exceed the prefilter width");
}

namespace {

std::vector<uint32_t> top_w(const std::vector<std::pair<double, uint32_t>>& scored, uint32_t width) {
    std::vector<std::pair<double, uint32_t>> copy(scored);
    const size_t keep = std::min<size_t>(width, copy.size());
    std::partial_sort(copy.begin(), copy.begin() + keep, copy.end(),
                      [](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return a.second < b.second;
                      });
    std::vector<uint32_t> out;
    out.reserve(keep);
    for (size_t i = 0; i < keep; ++i) out.push_back(copy[i].second);
    return out;
}

uint64_t pair_key(uint32_t i, uint32_t s) { return (static_cast<uint64_t>(i) << 32) | s; }

}  // namespace

CandidateSet build_candidates(const PairScorer& scorer, const std::vector<uint32_t>& images,
                              const std::vector<uint32_t>& sentences, uint32_t width, uint32_t total_images,
                              uint32_t total_sentences) {
    if (width == 0) throw std::invalid_argument("build_candidates: width must be >= 1");
    if (images.empty() || sentences.empty()) throw std::invalid_argument("build_candidates: empty corpus");

    CandidateSet cs;
    cs.per_image.resize(total_images);
    cs.per_sentence.resize(total_sentences);

    // score the full cross product once, then keep top-W per direction
    std::vector<std::vector<double>> scores(images.size(), std::vector<double>(sentences.size()));
    for (size_t a = 0; a < images.size(); ++a)
        for (size_t b = 0; b < sentences.size(); ++b) scores[a][b] = scorer.global_score(images[a], sentences[b]);

    std::vector<std::pair<double, uint32_t>> row;
    for (size_t a = 0; a < images.size(); ++a) {
        row.clear();
        for (size_t b = 0; b < sentences.size(); ++b) row.emplace_back(scores[a][b], sentences[b]);
        cs.per_image[images[a]] = top_w(row, width);
    }
    for (size_t b = 0; b < sentences.size(); ++b) {
        row.clear();
        for (size_t a = 0; a < images.size(); ++a) row.emplace_back(scores[a][b], images[a]);
        cs.per_sentence[sentences[b]] = top_w(row, width);
    }
    return cs;
}

double estimate_popularity(const std::vector<double>& candidate_confidences, uint32_t k) {
    if (candidate_confidences.empty()) throw std::invalid_argument("estimate_popularity: empty candidate list");
    if (k == 0) throw std::invalid_argument("estimate_popularity: k must be positive");
    std::vector<double> copy(candidate_confidences);
    const size_t keep = std::min<size_t>(k, copy.size());
    std::partial_sort(copy.begin(), copy.begin() + keep, copy.end(), std::greater<double>());
    double sum = 0.0;
    for (size_t i = 0; i < keep; ++i) sum += copy[i];
    return sum / static_cast<double>(keep);
}

double label_threshold(double popularity, double mu) {
    if (popularity < 0.0 || popularity > 1.0) throw std::invalid_argument("label_threshold: popularity outside [0,1]");
    if (mu <= 0.0 || mu > 1.0) throw std::invalid_argument("label_threshold: mu outside (0,1]");
    return std::pow(popularity, mu);
}

double assign_global(double score, const LinkPolicy& policy, double thr_image, double thr_sentence) {
    switch (policy.strategy) {
        case LinkStrategy::AT:
            return score >= policy.absolute_threshold ? 1.0 : 0.0;
        case LinkStrategy::LA:
            return (score >= thr_image || score >= thr_sentence) ? 1.0 : 0.0;
        case LinkStrategy::BL: {
            const int hits = (score >= thr_image ? 1 : 0) + (score >= thr_sentence ? 1 : 0);
            return 0.5 * hits;
        }
    }
    return 0.0;
}

std::vector<std::pair<uint32_t, uint32_t>> assign_local(const std::vector<std::vector<double>>& local_probs,
                                                        double global_strength, double local_threshold) {
    std::vector<std::pair<uint32_t, uint32_t>> out;
    if (global_strength == 0.0) return out;
    for (uint32_t p = 0; p < local_probs.size(); ++p)
        for (uint32_t o = 0; o < local_probs[p].size(); ++o)
            if (local_probs[p][o] >= local_threshold) out.emplace_back(o, p);
    return out;
}

void discovery_pass(const PairScorer& scorer, MultiModalGraph& graph, const SyntheticCorpus& corpus,
                    const CandidateSet& candidates, const LinkPolicy& policy, uint32_t iteration) {
    policy.validate();
    if (candidates.per_image.size() != graph.image_count() ||
        candidates.per_sentence.size() != graph.sentence_count())
        throw std::invalid_argument("discovery_pass: stale candidate set (node counts changed)");

    // candidate pair universe: image-side lists first, then unseen
    // sentence-side pairs, in deterministic order
    std::vector<std::pair<uint32_t, uint32_t>> pairs;
    std::unordered_set<uint64_t> seen;
    for (uint32_t i = 0; i < candidates.per_image.size(); ++i) {
        for (uint32_t s : candidates.per_image[i]) {
            if (seen.insert(pair_key(i, s)).second) pairs.emplace_back(i, s);
        }
    }
    for (uint32_t s = 0; s < candidates.per_sentence.size(); ++s) {
        for (uint32_t i : candidates.per_sentence[s]) {
            if (seen.insert(pair_key(i, s)).second) pairs.emplace_back(i, s);
        }
    }

    std::vector<double> pair_scores(pairs.size());
    for (size_t k = 0; k < pairs.size(); ++k)
        pair_scores[k] = scorer.global_score(pairs[k].first, pairs[k].second);

    // per-node label-aware thresholds (LA/BL); popularity uses each node's
    // own candidate list under the same previous-iteration scorer
    std::vector<double> thr_image(graph.image_count(), 0.0);
    std::vector<double> thr_sentence(graph.sentence_count(), 0.0);
    if (policy.strategy != LinkStrategy::AT) {
        std::vector<double> confs;
        for (uint32_t i = 0; i < candidates.per_image.size(); ++i) {
            if (candidates.per_image[i].empty()) continue;
            confs.clear();
            for (uint32_t s : candidates.per_image[i]) confs.push_back(scorer.global_score(i, s));
            thr_image[i] = label_threshold(estimate_popularity(confs, policy.k_image), policy.mu_image);
        }
        for (uint32_t s = 0; s < candidates.per_sentence.size(); ++s) {
            if (candidates.per_sentence[s].empty()) continue;
            confs.clear();
            for (uint32_t i : candidates.per_sentence[s]) confs.push_back(scorer.global_score(i, s));
            thr_sentence[s] = label_threshold(estimate_popularity(confs, policy.k_text), policy.mu_text);
        }
    }

    graph.clear_cross_links();
    for (size_t k = 0; k < pairs.size(); ++k) {
        const auto [i, s] = pairs[k];
        const double strength = assign_global(pair_scores[k], policy, thr_image[i], thr_sentence[s]);
        graph.set_global_link(i, s, strength, pair_scores[k]);
        if (strength != 0.0) {
            const auto local = scorer.local_scores(i, s);
            const auto& obj_nodes = corpus.image_object_nodes[i];
            const auto& phr_nodes = corpus.sentence_phrase_nodes[s];
            for (const auto& [o_pos, p_pos] : assign_local(local, strength, policy.local_threshold))
                graph.set_local_link(obj_nodes[o_pos], phr_nodes[p_pos], 1.0, local[p_pos][o_pos]);
        }
    }
    graph.set_iteration(iteration);
}

EncoderScorer::EncoderScorer(const EncoderParams& params, const SyntheticCorpus& corpus,
                             const MultiModalGraph* context_graph)
    : params_(&params), corpus_(&corpus) {
    const size_t d = params.dim();

    image_vecs_.resize(corpus.image_count());
    image_norms_.assign(corpus.image_count(), 0.0);
    for (uint32_t i = 0; i < corpus.image_count(); ++i) {
        std::vector<std::vector<uint32_t>> ctx;
        if (context_graph) {
            for (uint32_t pn : context_graph->two_hop_phrases(i)) ctx.push_back(corpus.phrase_token_list(pn));
        }
        image_vecs_[i] = encode_image(params, corpus.image_concepts[i], ctx, std::nullopt).out;
        image_norms_[i] = norm(image_vecs_[i]);
    }

    sentence_vecs_.resize(corpus.sentence_count());
    sentence_norms_.assign(corpus.sentence_count(), 0.0);
    for (uint32_t s = 0; s < corpus.sentence_count(); ++s) {
        sentence_vecs_[s] = encode_sentence(params, corpus.sentence_tokens[s], std::nullopt).out;
        sentence_norms_[s] = norm(sentence_vecs_[s]);
    }

    phrase_vecs_.resize(corpus.phrases.size());
    phrase_norms_.assign(corpus.phrases.size(), 0.0);
    for (uint32_t p = 0; p < corpus.phrases.size(); ++p) {
        const auto tokens = corpus.phrase_token_list(p);
        Vec v(d, 0.0);
        for (uint32_t tok : tokens) {
            const double* row = params.token_embedding.row(tok);
            for (size_t k = 0; k < d; ++k) v[k] += row[k];
        }
        scale(v, 1.0 / static_cast<double>(tokens.size()));
        phrase_norms_[p] = norm(v);
        phrase_vecs_[p] = std::move(v);
    }

    object_row_norms_.assign(params.object_embedding.rows, 0.0);
    for (size_t r = 0; r < params.object_embedding.rows; ++r) {
        const double* row = params.object_embedding.row(r);
        double s = 0.0;
        for (size_t k = 0; k < d; ++k) s += row[k] * row[k];
        object_row_norms_[r] = std::sqrt(s);
    }
}

double EncoderScorer::global_score(uint32_t image, uint32_t sentence) const {
    const double nu = image_norms_.at(image);
    const double nv = sentence_norms_.at(sentence);
    const double cos =
        (nu == 0.0 || nv == 0.0) ? 0.0 : dot(image_vecs_[image], sentence_vecs_[sentence]) / (nu * nv);
    return logistic(cos / params_->temperature);
}

std::vector<std::vector<double>> EncoderScorer::local_scores(uint32_t image, uint32_t sentence) const {
    const size_t d = params_->dim();
    const auto& concepts = corpus_->image_concepts.at(image);
    const auto& phr_nodes = corpus_->sentence_phrase_nodes.at(sentence);

    std::vector<std::vector<double>> out;
    out.reserve(phr_nodes.size());
    for (uint32_t pn : phr_nodes) {
        const Vec& pv = phrase_vecs_[pn];
        const double np = phrase_norms_[pn];
        std::vector<double> cosines(concepts.size());
        for (size_t j = 0; j < concepts.size(); ++j) {
            const double no = object_row_norms_[concepts[j]];
            if (np == 0.0 || no == 0.0) {
                cosines[j] = 0.0;
                continue;
            }
            const double* row = params_->object_embedding.row(concepts[j]);
            double s = 0.0;
            for (size_t k = 0; k < d; ++k) s += pv[k] * row[k];
            cosines[j] = s / (np * no);
        }
        double mx = cosines[0];
        for (double v : cosines) mx = std::max(mx, v);
        double z = 0.0;
        for (auto& v : cosines) {
            v = std::exp(v - mx);
            z += v;
        }
        for (auto& v : cosines) v /= z;
        out.push_back(std::move(cosines));
    }
    return out;
}

}  // namespace mmkg
