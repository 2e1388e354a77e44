#include "mmkg/encoder.hpp"

#include <algorithm>
#include <stdexcept>

#include "mmkg/rng.hpp"

namespace mmkg {

Vec DropoutMask::scales(size_t n) const {
    Vec out(n, 1.0);
    if (rate <= 0.0) return out;
    Rng r(seed);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (size_t i = 0; i < n; ++i) out[i] = (r.uniform() >= rate) ? keep_scale : 0.0;
    return out;
}

size_t EncoderParams::trainable_count() const {
    return object_embedding.data.size() + token_embedding.data.size() + image_projection.data.size() +
           text_projection.data.size() + segment_offset.size() + 1;
}

EncoderParams EncoderParams::init(const EncoderConfig& cfg, uint32_t object_vocab, uint32_t token_vocab,
                                  uint64_t seed) {
    EncoderParams p;
    const uint32_t d = cfg.dim;
    p.object_embedding = Matrix(object_vocab, d);
    p.token_embedding = Matrix(token_vocab, d);
    p.image_projection = Matrix(d, d);
    p.text_projection = Matrix(d, d);
    p.segment_offset.assign(d, 0.0);
    p.temperature = cfg.temperature_init;
    p.context_weight = cfg.context_weight;

    Rng r(seed);
    for (auto& v : p.object_embedding.data) v = cfg.init_scale * r.normal();
    for (auto& v : p.token_embedding.data) v = cfg.init_scale * r.normal();
    // projections start near the identity so initial scores are driven by
    // embedding geometry alone
    for (uint32_t i = 0; i < d; ++i)
        for (uint32_t j = 0; j < d; ++j) {
            const double noise = 0.02 * r.normal();
            p.image_projection.at(i, j) = (i == j ? 1.0 : 0.0) + noise;
        }
    for (uint32_t i = 0; i < d; ++i)
        for (uint32_t j = 0; j < d; ++j) {
            const double noise = 0.02 * r.normal();
            p.text_projection.at(i, j) = (i == j ? 1.0 : 0.0) + noise;
        }
    for (auto& v : p.segment_offset) v = 0.01 * r.normal();
    return p;
}

EncoderGrad EncoderGrad::zeros_like(const EncoderParams& p) {
    EncoderGrad g;
    g.object_embedding = Matrix(p.object_embedding.rows, p.object_embedding.cols);
    g.token_embedding = Matrix(p.token_embedding.rows, p.token_embedding.cols);
    g.image_projection = Matrix(p.image_projection.rows, p.image_projection.cols);
    g.text_projection = Matrix(p.text_projection.rows, p.text_projection.cols);
    g.segment_offset.assign(p.segment_offset.size(), 0.0);
    g.temperature = 0.0;
    return g;
}

void EncoderGrad::reset() {
    object_embedding.fill(0.0);
    token_embedding.fill(0.0);
    image_projection.fill(0.0);
    text_projection.fill(0.0);
    segment_offset.assign(segment_offset.size(), 0.0);
    temperature = 0.0;
}

void EncoderGrad::scale_all(double a) {
    for_each_tensor_value(*this, [a](double& v) { v *= a; });
}

Vec flatten_params(const EncoderParams& p) {
    Vec out;
    out.reserve(p.trainable_count());
    for_each_tensor_value(p, [&](const double& v) { out.push_back(v); });
    return out;
}

void unflatten_params(EncoderParams& p, const Vec& flat) {
    if (flat.size() != p.trainable_count()) throw std::invalid_argument("unflatten_params: size mismatch");
    size_t i = 0;
    for_each_tensor_value(p, [&](double& v) { v = flat[i++]; });
}

Vec flatten_grad(const EncoderGrad& g) {
    Vec out;
    for_each_tensor_value(g, [&](const double& v) { out.push_back(v); });
    return out;
}

EncodeTape encode_image(const EncoderParams& p, const std::vector<uint32_t>& objects,
                        const std::vector<std::vector<uint32_t>>& ctx_phrases,
                        const std::optional<DropoutMask>& mask) {
    if (objects.empty()) throw std::invalid_argument("encode_image: empty object bag");
    const size_t d = p.dim();

    EncodeTape t;
    t.is_image = true;
    // bag semantics: summing in id order makes the encoding bit-identical
    // under permutation of the input
    t.objects = objects;
    std::sort(t.objects.begin(), t.objects.end());
    t.ctx = ctx_phrases;

    Vec pooled(d, 0.0);
    for (uint32_t o : t.objects) {
        const double* row = p.object_embedding.row(o);
        for (size_t k = 0; k < d; ++k) pooled[k] += row[k];
    }
    scale(pooled, 1.0 / static_cast<double>(objects.size()));

    if (!ctx_phrases.empty()) {
        Vec ctx_mean(d, 0.0);
        for (const auto& phrase : ctx_phrases) {
            if (phrase.empty()) throw std::invalid_argument("encode_image: empty context phrase");
            Vec pv(d, 0.0);
            for (uint32_t tok : phrase) {
                const double* row = p.token_embedding.row(tok);
                for (size_t k = 0; k < d; ++k) pv[k] += row[k];
            }
            scale(pv, 1.0 / static_cast<double>(phrase.size()));
            for (size_t k = 0; k < d; ++k) ctx_mean[k] += pv[k] + p.segment_offset[k];
        }
        scale(ctx_mean, 1.0 / static_cast<double>(ctx_phrases.size()));
        const double w = p.context_weight;
        for (size_t k = 0; k < d; ++k) pooled[k] = (pooled[k] + w * ctx_mean[k]) / (1.0 + w);
    }

    t.pooled = pooled;
    if (mask) {
        t.drop_scale = mask->scales(d);
        t.h.resize(d);
        for (size_t k = 0; k < d; ++k) t.h[k] = pooled[k] * t.drop_scale[k];
    } else {
        t.h = pooled;
    }
    t.out = matvec(p.image_projection, t.h);
    return t;
}

EncodeTape encode_sentence(const EncoderParams& p, const std::vector<uint32_t>& tokens,
                           const std::optional<DropoutMask>& mask) {
    if (tokens.empty()) throw std::invalid_argument("encode_sentence: empty token list");
    const size_t d = p.dim();

    EncodeTape t;
    t.is_image = false;
    t.tokens = tokens;
    std::sort(t.tokens.begin(), t.tokens.end());

    Vec pooled(d, 0.0);
    for (uint32_t tok : t.tokens) {
        const double* row = p.token_embedding.row(tok);
        for (size_t k = 0; k < d; ++k) pooled[k] += row[k];
    }
    scale(pooled, 1.0 / static_cast<double>(tokens.size()));

    t.pooled = pooled;
    if (mask) {
        t.drop_scale = mask->scales(d);
        t.h.resize(d);
        for (size_t k = 0; k < d; ++k) t.h[k] = pooled[k] * t.drop_scale[k];
    } else {
        t.h = pooled;
    }
    t.out = matvec(p.text_projection, t.h);
    return t;
}

void encode_backward(const EncoderParams& p, const EncodeTape& tape, const Vec& d_out, EncoderGrad& grad) {
    if (tape.h.empty()) throw std::logic_error("encode_backward: no forward pass recorded");
    const size_t d = p.dim();
    const Matrix& proj = tape.is_image ? p.image_projection : p.text_projection;
    Matrix& proj_grad = tape.is_image ? grad.image_projection : grad.text_projection;

    add_outer(proj_grad, 1.0, d_out, tape.h);
    Vec dh = matvec_t(proj, d_out);

    Vec dpooled(d);
    if (!tape.drop_scale.empty()) {
        for (size_t k = 0; k < d; ++k) dpooled[k] = dh[k] * tape.drop_scale[k];
    } else {
        dpooled = dh;
    }

    if (tape.is_image) {
        const bool has_ctx = !tape.ctx.empty();
        const double w = p.context_weight;
        const double obj_factor = has_ctx ? 1.0 / (1.0 + w) : 1.0;
        const double per_obj = obj_factor / static_cast<double>(tape.objects.size());
        for (uint32_t o : tape.objects) {
            double* row = grad.object_embedding.row(o);
            for (size_t k = 0; k < d; ++k) row[k] += per_obj * dpooled[k];
        }
        if (has_ctx) {
            const double ctx_factor = w / (1.0 + w) / static_cast<double>(tape.ctx.size());
            for (const auto& phrase : tape.ctx) {
                for (size_t k = 0; k < d; ++k) grad.segment_offset[k] += ctx_factor * dpooled[k];
                const double per_tok = ctx_factor / static_cast<double>(phrase.size());
                for (uint32_t tok : phrase) {
                    double* row = grad.token_embedding.row(tok);
                    for (size_t k = 0; k < d; ++k) row[k] += per_tok * dpooled[k];
                }
            }
        }
    } else {
        const double per_tok = 1.0 / static_cast<double>(tape.tokens.size());
        for (uint32_t tok : tape.tokens) {
            double* row = grad.token_embedding.row(tok);
            for (size_t k = 0; k < d; ++k) row[k] += per_tok * dpooled[k];
        }
    }
}

PairScore score_global(const EncoderParams& p, const Vec& image_vec, const Vec& text_vec) {
    PairScore s;
    s.u = image_vec;
    s.v = text_vec;
    s.norm_u = norm(image_vec);
    s.norm_v = norm(text_vec);
    s.cos = (s.norm_u == 0.0 || s.norm_v == 0.0) ? 0.0 : dot(image_vec, text_vec) / (s.norm_u * s.norm_v);
    s.value = logistic(s.cos / p.temperature);
    return s;
}

namespace {

// d(cos)/du and d(cos)/dv for precomputed norms; zero-norm side contributes
// no gradient (the score is constant there by convention)
void cosine_backward(const Vec& u, const Vec& v, double cos, double nu, double nv, double dcos, Vec& du,
                     Vec& dv) {
    if (nu == 0.0 || nv == 0.0) return;
    const double inv = 1.0 / (nu * nv);
    const double cu = cos / (nu * nu);
    const double cv = cos / (nv * nv);
    for (size_t k = 0; k < u.size(); ++k) {
        du[k] += dcos * (v[k] * inv - cu * u[k]);
        dv[k] += dcos * (u[k] * inv - cv * v[k]);
    }
}

}  // namespace

void score_global_backward(const EncoderParams& p, const PairScore& s, double d_value, Vec& du, Vec& dv,
                           double& d_temperature) {
    if (s.u.empty()) throw std::logic_error("score_global_backward: no forward pass recorded");
    const double sig = s.value;
    const double dsig = d_value * sig * (1.0 - sig);
    const double dcos = dsig / p.temperature;
    d_temperature += dsig * (-s.cos / (p.temperature * p.temperature));
    cosine_backward(s.u, s.v, s.cos, s.norm_u, s.norm_v, dcos, du, dv);
}

LocalScore score_local(const EncoderParams& p, const std::vector<uint32_t>& phrase_tokens,
                       const std::vector<uint32_t>& image_objects, size_t target) {
    if (phrase_tokens.empty()) throw std::invalid_argument("score_local: empty phrase");
    if (image_objects.empty()) throw std::invalid_argument("score_local: empty object bag");
    if (target >= image_objects.size()) throw std::invalid_argument("score_local: target out of range");
    const size_t d = p.dim();

    LocalScore s;
    s.phrase_tokens = phrase_tokens;
    std::sort(s.phrase_tokens.begin(), s.phrase_tokens.end());
    s.object_ids = image_objects;
    s.target = target;

    s.phrase_vec.assign(d, 0.0);
    for (uint32_t tok : s.phrase_tokens) {
        const double* row = p.token_embedding.row(tok);
        for (size_t k = 0; k < d; ++k) s.phrase_vec[k] += row[k];
    }
    scale(s.phrase_vec, 1.0 / static_cast<double>(phrase_tokens.size()));

    s.cosines.resize(image_objects.size());
    const double np = norm(s.phrase_vec);
    for (size_t j = 0; j < image_objects.size(); ++j) {
        const double* row = p.object_embedding.row(image_objects[j]);
        Vec obj(row, row + d);
        const double no = norm(obj);
        s.cosines[j] = (np == 0.0 || no == 0.0) ? 0.0 : dot(s.phrase_vec, obj) / (np * no);
    }

    double mx = s.cosines[0];
    for (double c : s.cosines) mx = std::max(mx, c);
    double z = 0.0;
    s.probs.resize(s.cosines.size());
    for (size_t j = 0; j < s.cosines.size(); ++j) {
        s.probs[j] = std::exp(s.cosines[j] - mx);
        z += s.probs[j];
    }
    for (auto& q : s.probs) q /= z;
    s.value = s.probs[target];
    return s;
}

void score_local_backward(const EncoderParams& p, const LocalScore& s, double d_value, EncoderGrad& grad) {
    if (s.probs.empty()) throw std::logic_error("score_local_backward: no forward pass recorded");
    const size_t d = p.dim();
    const double qt = s.probs[s.target];

    Vec dphrase(d, 0.0);
    const double np = norm(s.phrase_vec);
    for (size_t j = 0; j < s.object_ids.size(); ++j) {
        const double delta = (j == s.target) ? 1.0 : 0.0;
        const double dcos = d_value * qt * (delta - s.probs[j]);
        if (dcos == 0.0) continue;
        const double* row = p.object_embedding.row(s.object_ids[j]);
        Vec obj(row, row + d);
        Vec dobj(d, 0.0);
        cosine_backward(s.phrase_vec, obj, s.cosines[j], np, norm(obj), dcos, dphrase, dobj);
        double* orow = grad.object_embedding.row(s.object_ids[j]);
        for (size_t k = 0; k < d; ++k) orow[k] += dobj[k];
    }

    const double per_tok = 1.0 / static_cast<double>(s.phrase_tokens.size());
    for (uint32_t tok : s.phrase_tokens) {
        double* row = grad.token_embedding.row(tok);
        for (size_t k = 0; k < d; ++k) row[k] += per_tok * dphrase[k];
    }
}

}  // namespace mmkg
