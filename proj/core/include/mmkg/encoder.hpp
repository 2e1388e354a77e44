#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mmkg/tensor.hpp"

namespace mmkg {

struct EncoderConfig {
    uint32_t dim = 32;
    double temperature_init = 0.5;
    double context_weight = 0.5;  // weight of the two-hop phrase context on the image side
    double init_scale = 0.1;
};

// Deterministic dropout: (seed, rate, size) always regenerates the same mask.
// Inverted scaling, so rate 0 is exactly the identity.
struct DropoutMask {
    uint64_t seed = 0;
    double rate = 0.0;

    Vec scales(size_t n) const;
};

struct EncoderParams {
    Matrix object_embedding;  // object vocab x d
    Matrix token_embedding;   // token vocab x d
    Matrix image_projection;  // d x d
    Matrix text_projection;   // d x d
    Vec segment_offset;       // d, marks neighbor-phrase context
    double temperature = 0.5;
    double context_weight = 0.5;  // fixed, not trained

    uint32_t dim() const { return static_cast<uint32_t>(segment_offset.size()); }
    size_t trainable_count() const;

    static EncoderParams init(const EncoderConfig& cfg, uint32_t object_vocab, uint32_t token_vocab,
                              uint64_t seed);
};

// Gradient accumulator with the same trainable shapes as EncoderParams.
struct EncoderGrad {
    Matrix object_embedding;
    Matrix token_embedding;
    Matrix image_projection;
    Matrix text_projection;
    Vec segment_offset;
    double temperature = 0.0;

    static EncoderGrad zeros_like(const EncoderParams& p);
    void reset();
    void scale_all(double a);
};

// Fixed flattening order shared by the optimizer and the finite-difference
// tests: object_embedding, token_embedding, image_projection,
// text_projection, segment_offset, temperature.
template <class P, class F>
void for_each_tensor_value(P& p, F&& f) {
    for (auto& v : p.object_embedding.data) f(v);
    for (auto& v : p.token_embedding.data) f(v);
    for (auto& v : p.image_projection.data) f(v);
    for (auto& v : p.text_projection.data) f(v);
    for (auto& v : p.segment_offset) f(v);
    f(p.temperature);
}

Vec flatten_params(const EncoderParams& p);
void unflatten_params(EncoderParams& p, const Vec& flat);
Vec flatten_grad(const EncoderGrad& g);

// Forward record of one encoded node; holds everything backward needs.
struct EncodeTape {
    bool is_image = false;
    std::vector<uint32_t> objects;            // image side: object vocab ids
    std::vector<std::vector<uint32_t>> ctx;   // image side: context phrase token lists
    std::vector<uint32_t> tokens;             // sentence side: token ids
    Vec pooled;      // pre-dropout pooled vector
    Vec drop_scale;  // empty when no mask was applied
    Vec h;           // pooled after dropout
    Vec out;         // projected encoding
};

/// Bag-of-objects image encoding: mean object embedding, optionally blended
/// with the mean of (token-mean + segment offset) per context phrase at
/// weight context_weight, dropout on the pooled vector, then the image
/// projection.
EncodeTape encode_image(const EncoderParams& p, const std::vector<uint32_t>& objects,
                        const std::vector<std::vector<uint32_t>>& ctx_phrases,
                        const std::optional<DropoutMask>& mask);

/// Bag-of-tokens sentence encoding: token mean, dropout, text projection.
EncodeTape encode_sentence(const EncoderParams& p, const std::vector<uint32_t>& tokens,
                           const std::optional<DropoutMask>& mask);

/// Distributes d_out through the projection, dropout and pooling into grad.
void encode_backward(const EncoderParams& p, const EncodeTape& tape, const Vec& d_out, EncoderGrad& grad);

// Calibrated pair score sigma(cos(u, v) / temperature) with its tape.
struct PairScore {
    double value = 0.0;
    double cos = 0.0;
    double norm_u = 0.0, norm_v = 0.0;
    Vec u, v;
};

PairScore score_global(const EncoderParams& p, const Vec& image_vec, const Vec& text_vec);

/// Accumulates d_value into du, dv (same size as the encodings) and the
/// temperature gradient.
void score_global_backward(const EncoderParams& p, const PairScore& s, double d_value, Vec& du, Vec& dv,
                           double& d_temperature);

// Softmax-normalized cosine similarity of one phrase against every object of
// an image; value is the target object's probability.
struct LocalScore {
    double value = 0.0;
    std::vector<uint32_t> phrase_tokens;
    std::vector<uint32_t> object_ids;
    Vec phrase_vec;
    std::vector<double> cosines;
    std::vector<double> probs;
    size_t target = 0;
};

LocalScore score_local(const EncoderParams& p, const std::vector<uint32_t>& phrase_tokens,
                       const std::vector<uint32_t>& image_objects, size_t target);

void score_local_backward(const EncoderParams& p, const LocalScore& s, double d_value, EncoderGrad& grad);

}  // namespace mmkg
