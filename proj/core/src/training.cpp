#include "mmkg/training.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mmkg {

const char* negative_loss_mode_name(NegativeLossMode m) {
    return m == NegativeLossMode::Literal ? "literal" : "symmetric";
}

NegativeLossMode negative_loss_mode_from_name(const std::string& name) {
    if (name == "literal") return NegativeLossMode::Literal;
    if (name == "symmetric") return NegativeLossMode::Symmetric;
    throw std::invalid_argument("unknown negative loss mode: " + name);
}

void TrainConfig::validate() const {
    if (lambda_global < 0.0 || lambda_local < 0.0 || lambda_uncertainty < 0.0)
        throw std::invalid_argument("train: loss weights must be non-negative");
    if (gamma <= 0.0 || gamma > 1.0) throw std::invalid_argument("train: gamma must lie in (0,1]");
    if (mu_weak <= 0.0 || mu_weak >= 1.0) throw std::invalid_argument("train: mu_weak must lie in (0,1)");
    if (batch_size == 0) throw std::invalid_argument("train: batch_size must be positive");
    if (epochs_per_iteration == 0) throw std::invalid_argument("train: epochs_per_iteration must be positive");
    if (learning_rate < 0.0) throw std::invalid_argument("train: learning_rate must be >= 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw std::invalid_argument("train: Adam betas must lie in [0,1)");
    if (warmup_fraction < 0.0 || warmup_fraction >= 1.0)
        throw std::invalid_argument("train: warmup_fraction must lie in [0,1)");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw std::invalid_argument("train: dropout_rate must lie in [0,1)");
}

SoftLabel soft_label(double f_prev, double strength, double gamma, double mu_weak) {
    if (f_prev < 0.0 || f_prev > 1.0) throw std::invalid_argument("soft_label: confidence outside [0,1]");
    SoftLabel out{0.0, LabelOrigin::Negative};
    if (strength == 1.0) {
        out.origin = LabelOrigin::Strong;
        out.value = std::pow(f_prev, gamma);
    } else if (strength == 0.5) {
        out.origin = LabelOrigin::Weak;
        out.value = mu_weak * std::pow(f_prev, gamma);
    } else if (strength == 0.0) {
        out.origin = LabelOrigin::Negative;
        out.value = 1.0 - std::pow(1.0 - f_prev, gamma);
    } else {
        throw std::invalid_argument("soft_label: strength must be 0, 0.5 or 1");
    }
    out.value = std::min(1.0, std::max(0.0, out.value));
    return out;
}

double loss_global(double y, double f_now) { return -y * std::log(clamp_prob(f_now)); }

double loss_global_negative_symmetric(double y, double f_now) {
    return -(1.0 - y) * std::log(clamp_prob(1.0 - f_now));
}

double loss_local(const std::vector<double>& linked_probs, double y_it) {
    double sum = 0.0;
    for (double q : linked_probs) sum += -std::log(clamp_prob(q));
    return y_it * sum;
}

double loss_uncertainty(double p1, double p2) {
    const double a = clamp_prob(p1);
    const double b = clamp_prob(p2);
    const double kl_ab = a * std::log(a / b) + (1.0 - a) * std::log((1.0 - a) / (1.0 - b));
    const double kl_ba = b * std::log(b / a) + (1.0 - b) * std::log((1.0 - b) / (1.0 - a));
    return 0.5 * kl_ab + 0.5 * kl_ba;
}

void loss_uncertainty_backward(double p1, double p2, double upstream, double& dp1, double& dp2) {
    const double a = clamp_prob(p1);
    const double b = clamp_prob(p2);
    const bool a_interior = p1 > kProbEps && p1 < 1.0 - kProbEps;
    const bool b_interior = p2 > kProbEps && p2 < 1.0 - kProbEps;
    if (a_interior)
        dp1 += upstream * 0.5 *
               (std::log(a / b) - std::log((1.0 - a) / (1.0 - b)) - b / a + (1.0 - b) / (1.0 - a));
    if (b_interior)
        dp2 += upstream * 0.5 *
               (std::log(b / a) - std::log((1.0 - b) / (1.0 - a)) - a / b + (1.0 - a) / (1.0 - b));
}

double total_loss(double l_it, double l_c, double l_u, const TrainConfig& cfg) {
    return cfg.lambda_global * l_it + cfg.lambda_local * l_c + cfg.lambda_uncertainty * l_u;
}

double lr_schedule(uint64_t step, uint64_t total_steps, double base_lr, double warmup_frac) {
    if (total_steps == 0) return 0.0;
    if (step >= total_steps) return 0.0;
    const double warmup_steps = warmup_frac * static_cast<double>(total_steps);
    const double s = static_cast<double>(step);
    if (warmup_steps > 0.0 && s <= warmup_steps) return base_lr * s / warmup_steps;
    return base_lr * (static_cast<double>(total_steps) - s) / (static_cast<double>(total_steps) - warmup_steps);
}

Triplet sample_triplet(const MultiModalGraph& g, NodeId anchor, Rng& rng) {
    if (anchor.kind != NodeKind::Image && anchor.kind != NodeKind::Sentence)
        throw std::invalid_argument("sample_triplet: anchor must be an image or a sentence");
    const auto& links =
        anchor.kind == NodeKind::Image ? g.links_of_image(anchor.index) : g.links_of_sentence(anchor.index);

    std::vector<const LinkRecord*> strong, weak, negatives;
    for (const auto& rec : links) {
        if (rec.strength == 1.0) strong.push_back(&rec);
        else if (rec.strength == 0.5) weak.push_back(&rec);
        else negatives.push_back(&rec);
    }

    Triplet t;
    const auto& pos_pool = !strong.empty() ? strong : weak;
    if (!pos_pool.empty()) {
        const LinkRecord* rec = pos_pool[rng.uniform_u32(static_cast<uint32_t>(pos_pool.size()))];
        t.positive = rec->counterpart;
        t.positive_strength = rec->strength;
        t.positive_confidence = rec->confidence;
    }
    if (!negatives.empty()) {
        const LinkRecord* rec = negatives[rng.uniform_u32(static_cast<uint32_t>(negatives.size()))];
        t.negative = rec->counterpart;
        t.negative_confidence = rec->confidence;
    }
    return t;
}

void AdamState::apply(EncoderParams& params, const EncoderGrad& grad, double lr, double beta1, double beta2) {
    constexpr double kEps = 1e-8;
    const Vec g = flatten_grad(grad);
    if (g.size() != m_.size()) throw std::invalid_argument("AdamState: gradient size mismatch");
    ++steps;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(steps));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(steps));
    size_t i = 0;
    for_each_tensor_value(params, [&](double& pv) {
        const double gv = g[i];
        m_[i] = beta1 * m_[i] + (1.0 - beta1) * gv;
        v_[i] = beta2 * v_[i] + (1.0 - beta2) * gv * gv;
        pv -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + kEps);
        ++i;
    });
    // the calibration temperature is learnable but bounded: unbounded
    // sharpening saturates every score and the label-aware thresholds with it
    params.temperature = std::min(std::max(params.temperature, 0.2), 2.0);
}

namespace {

// derivative of -y log(clamp(f)) w.r.t. f; zero in the clamped regions
double d_neg_log(double y, double f) {
    if (f <= kProbEps || f >= 1.0 - kProbEps) return 0.0;
    return -y / f;
}

// derivative of -(1-y) log(1 - clamp(f)) w.r.t. f
double d_neg_log_complement(double y, double f) {
    if (f <= kProbEps || f >= 1.0 - kProbEps) return 0.0;
    return (1.0 - y) / (1.0 - f);
}

struct PairLosses {
    double l_it = 0.0;
    double l_c = 0.0;
    double l_u = 0.0;
};

// Forward + backward of one sampled pair: global loss on the first dropout
// pass, uncertainty between the two passes, and (for linked pairs) the local
// loss over the graph's object-phrase links. Gradients are weighted by the
// configured lambdas as they are accumulated.
PairLosses process_pair(const EncoderParams& params, EncoderGrad& grad, const MultiModalGraph& graph,
                        const SyntheticCorpus& corpus, const TrainConfig& cfg, uint32_t image,
                        uint32_t sentence, double label, bool negative_pair, double pair_strength,
                        const std::vector<std::vector<uint32_t>>& image_ctx, uint64_t mask_seed_base,
                        uint32_t iteration) {
    PairLosses out;
    const auto mask = [&](uint64_t tag) -> std::optional<DropoutMask> {
        if (cfg.dropout_rate <= 0.0) return std::nullopt;
        return DropoutMask{mix64(mask_seed_base, tag, iteration), cfg.dropout_rate};
    };

    const EncodeTape img1 = encode_image(params, corpus.image_concepts[image], image_ctx, mask(1));
    const EncodeTape txt1 = encode_sentence(params, corpus.sentence_tokens[sentence], mask(2));
    const PairScore s1 = score_global(params, img1.out, txt1.out);

    double d_s1 = 0.0;
    if (!negative_pair || cfg.negative_loss == NegativeLossMode::Literal) {
        out.l_it = loss_global(label, s1.value);
        d_s1 += cfg.lambda_global * d_neg_log(label, s1.value);
    } else {
        out.l_it = loss_global_negative_symmetric(label, s1.value);
        d_s1 += cfg.lambda_global * d_neg_log_complement(label, s1.value);
    }

    Vec du1(params.dim(), 0.0), dv1(params.dim(), 0.0);

    if (cfg.uncertainty) {
        const EncodeTape img2 = encode_image(params, corpus.image_concepts[image], image_ctx, mask(3));
        const EncodeTape txt2 = encode_sentence(params, corpus.sentence_tokens[sentence], mask(4));
        const PairScore s2 = score_global(params, img2.out, txt2.out);
        out.l_u = loss_uncertainty(s1.value, s2.value);

        double d_s2 = 0.0;
        loss_uncertainty_backward(s1.value, s2.value, cfg.lambda_uncertainty, d_s1, d_s2);
        Vec du2(params.dim(), 0.0), dv2(params.dim(), 0.0);
        score_global_backward(params, s2, d_s2, du2, dv2, grad.temperature);
        encode_backward(params, img2, du2, grad);
        encode_backward(params, txt2, dv2, grad);
    }

    score_global_backward(params, s1, d_s1, du1, dv1, grad.temperature);
    encode_backward(params, img1, du1, grad);
    encode_backward(params, txt1, dv1, grad);

    // local level: the gate is the assigned global strength
    if (pair_strength != 0.0 && cfg.lambda_local > 0.0) {
        const auto& concepts = corpus.image_concepts[image];
        for (uint32_t pn : corpus.sentence_phrase_nodes[sentence]) {
            for (const auto& rec : graph.links_of_phrase(pn)) {
                if (rec.strength != 1.0) continue;
                const ObjectInst& obj = corpus.objects[rec.counterpart];
                if (obj.image != image) continue;
                const auto it = std::lower_bound(concepts.begin(), concepts.end(), obj.concept_id);
                if (it == concepts.end() || *it != obj.concept_id) continue;
                const size_t target = static_cast<size_t>(it - concepts.begin());
                const LocalScore ls = score_local(params, corpus.phrase_token_list(pn), concepts, target);
                out.l_c += label * -std::log(clamp_prob(ls.value));
                const double d_value = cfg.lambda_local * label * d_neg_log(1.0, ls.value);
                score_local_backward(params, ls, d_value, grad);
            }
        }
    }
    return out;
}

}  // namespace

IterationLossStats train_iteration(EncoderParams& model, TrainState& ts, const MultiModalGraph& graph,
                                   const SyntheticCorpus& corpus, const TrainConfig& cfg,
                                   uint64_t master_seed, uint32_t iteration,
                                   std::vector<LossTraceRow>* trace) {
    cfg.validate();
    const auto images = corpus.train_images();
    const auto sentences = corpus.train_sentences();
    if (images.empty() || sentences.empty()) throw std::invalid_argument("train_iteration: empty corpora");

    IterationLossStats stats;
    double sum_it = 0.0, sum_c = 0.0, sum_u = 0.0;

    EncoderGrad grad = EncoderGrad::zeros_like(model);

    const auto run_phase = [&](bool image_phase, uint32_t epoch) {
        const auto& anchors = image_phase ? images : sentences;
        const Stream triplet_stream = image_phase ? Stream::TripletImage : Stream::TripletSentence;
        const Stream mask_stream = image_phase ? Stream::DropoutImage : Stream::DropoutSentence;

        for (size_t start = 0; start < anchors.size(); start += cfg.batch_size) {
            const size_t end = std::min(anchors.size(), start + cfg.batch_size);
            grad.reset();
            size_t contributing = 0;
            double batch_it = 0.0, batch_c = 0.0, batch_u = 0.0;

            for (size_t a = start; a < end; ++a) {
                const uint32_t anchor = anchors[a];
                Rng rng(stream_seed(master_seed, triplet_stream, mix64(iteration, epoch), anchor));
                const NodeId anchor_id{image_phase ? NodeKind::Image : NodeKind::Sentence, anchor};
                const Triplet trip = sample_triplet(graph, anchor_id, rng);
                if (!trip.positive) continue;  // anchor skipped this epoch
                ++contributing;

                const auto pair_nodes = [&](uint32_t counterpart) {
                    return image_phase ? std::pair<uint32_t, uint32_t>{anchor, counterpart}
                                       : std::pair<uint32_t, uint32_t>{counterpart, anchor};
                };

                const auto context_of = [&](uint32_t img) {
                    std::vector<std::vector<uint32_t>> ctx;
                    if (cfg.graph_context) {
                        for (uint32_t pn : graph.two_hop_phrases(img)) ctx.push_back(corpus.phrase_token_list(pn));
                    }
                    return ctx;
                };

                {
                    const auto [img, txt] = pair_nodes(*trip.positive);
                    const double y = cfg.soft_labels
                                         ? soft_label(trip.positive_confidence, trip.positive_strength,
                                                      cfg.gamma, cfg.mu_weak)
                                               .value
                                         : 1.0;
                    const uint64_t seed_base =
                        stream_seed(master_seed, mask_stream, mix64(epoch, anchor), mix64(img, txt));
                    const PairLosses pl = process_pair(model, grad, graph, corpus, cfg, img, txt, y, false,
                                                       trip.positive_strength, context_of(img), seed_base,
                                                       iteration);
                    batch_it += pl.l_it;
                    batch_c += pl.l_c;
                    batch_u += pl.l_u;
                }
                if (trip.negative) {
                    const auto [img, txt] = pair_nodes(*trip.negative);
                    const double y =
                        cfg.soft_labels ? soft_label(trip.negative_confidence, 0.0, cfg.gamma, cfg.mu_weak).value
                                        : 0.0;
                    const uint64_t seed_base =
                        stream_seed(master_seed, mask_stream, mix64(epoch, anchor ^ 0x5a5a5a5aULL), mix64(img, txt));
                    const PairLosses pl = process_pair(model, grad, graph, corpus, cfg, img, txt, y, true, 0.0,
                                                       context_of(img), seed_base, iteration);
                    batch_it += pl.l_it;
                    batch_u += pl.l_u;
                }
            }

            if (contributing > 0) grad.scale_all(1.0 / static_cast<double>(contributing));
            const double lr = lr_schedule(ts.global_step, ts.total_steps, cfg.learning_rate, cfg.warmup_fraction);
            ts.adam.apply(model, grad, lr, cfg.beta1, cfg.beta2);
            ++ts.global_step;

            sum_it += batch_it;
            sum_c += batch_c;
            sum_u += batch_u;
            stats.contributing_anchors += contributing;
            if (trace) {
                const double denom = contributing > 0 ? static_cast<double>(contributing) : 1.0;
                trace->push_back(LossTraceRow{ts.global_step - 1, batch_it / denom, batch_c / denom,
                                              batch_u / denom, lr});
            }
        }
    };

    for (uint32_t epoch = 0; epoch < cfg.epochs_per_iteration; ++epoch) {
        run_phase(true, epoch);
        run_phase(false, epoch);
    }

    if (stats.contributing_anchors > 0) {
        const double denom = static_cast<double>(stats.contributing_anchors);
        stats.mean_global = sum_it / denom;
        stats.mean_local = sum_c / denom;
        stats.mean_uncertainty = sum_u / denom;
    }
    return stats;
}

void pretrain_supervised(EncoderParams& model, const SyntheticCorpus& corpus, uint32_t epochs, double lr,
                         uint64_t master_seed) {
    const auto images = corpus.train_images();
    const auto sentences = corpus.train_sentences();
    if (images.empty() || sentences.empty()) throw std::invalid_argument("pretrain_supervised: empty corpora");

    // ground-truth sentence lists per train image
    std::vector<std::vector<uint32_t>> truth(corpus.image_count());
    for (const auto& [i, s] : corpus.gt_global)
        if (!corpus.image_heldout[i]) truth[i].push_back(s);

    AdamState adam(model.trainable_count());
    EncoderGrad grad = EncoderGrad::zeros_like(model);
    constexpr uint32_t kBatch = 32;
    const std::vector<std::vector<uint32_t>> no_ctx;

    for (uint32_t epoch = 0; epoch < epochs; ++epoch) {
        for (size_t start = 0; start < images.size(); start += kBatch) {
            const size_t end = std::min(images.size(), start + kBatch);
            grad.reset();
            size_t contributing = 0;
            for (size_t a = start; a < end; ++a) {
                const uint32_t img = images[a];
                if (truth[img].empty()) continue;
                ++contributing;
                Rng rng(stream_seed(master_seed, Stream::Pretrain, epoch, img));
                const uint32_t pos = truth[img][rng.uniform_u32(static_cast<uint32_t>(truth[img].size()))];
                uint32_t neg = sentences[rng.uniform_u32(static_cast<uint32_t>(sentences.size()))];
                uint32_t guard = 0;
                while (std::find(truth[img].begin(), truth[img].end(), neg) != truth[img].end() &&
                       ++guard < 100)
                    neg = sentences[rng.uniform_u32(static_cast<uint32_t>(sentences.size()))];

                const EncodeTape iv = encode_image(model, corpus.image_concepts[img], no_ctx, std::nullopt);
                for (const auto& [txt, y] : {std::pair<uint32_t, double>{pos, 1.0}, {neg, 0.0}}) {
                    const EncodeTape tv = encode_sentence(model, corpus.sentence_tokens[txt], std::nullopt);
                    const PairScore s = score_global(model, iv.out, tv.out);
                    const double d_s = y > 0.5 ? d_neg_log(1.0, s.value) : d_neg_log_complement(0.0, s.value);
                    Vec du(model.dim(), 0.0), dv(model.dim(), 0.0);
                    score_global_backward(model, s, d_s, du, dv, grad.temperature);
                    encode_backward(model, iv, du, grad);
                    encode_backward(model, tv, dv, grad);
                }
            }
            if (contributing > 0) grad.scale_all(1.0 / static_cast<double>(contributing));
            adam.apply(model, grad, lr, 0.9, 0.999);
        }
    }
}

}  // namespace mmkg
