#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mmkg/encoder.hpp"
#include "mmkg/graph.hpp"
#include "mmkg/rng.hpp"
#include "mmkg/synthetic.hpp"

namespace mmkg {

// Eq-9-as-written keeps the -Y log F form for negative pairs (their label is
// small, so the pull is weak); Symmetric swaps in -(1-Y) log(1-F) instead.
enum class NegativeLossMode { Literal, Symmetric };

const char* negative_loss_mode_name(NegativeLossMode m);
NegativeLossMode negative_loss_mode_from_name(const std::string& name);

struct TrainConfig {
    double lambda_global = 1.0;       // weight of the image-sentence loss
    double lambda_local = 0.05;       // weight of the object-phrase loss
    double lambda_uncertainty = 0.5;  // weight of the dropout-divergence regularizer
    double gamma = 0.25;              // confidence sharpening exponent
    double mu_weak = 0.6;             // down-weight applied to weak-link labels
    uint32_t batch_size = 32;
    uint32_t epochs_per_iteration = 1;
    double learning_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double warmup_fraction = 0.1;
    double dropout_rate = 0.1;
    NegativeLossMode negative_loss = NegativeLossMode::Literal;
    // ablation switches
    bool soft_labels = true;    // confidence-aware labels vs hard 0/1
    bool graph_context = true;  // two-hop phrase context on the image side
    bool uncertainty = true;    // second dropout pass + divergence loss

    void validate() const;
};

enum class LabelOrigin { Strong, Weak, Negative };

struct SoftLabel {
    double value;
    LabelOrigin origin;
};

/// Confidence-aware label from the previous iteration's confidence:
/// strong F^gamma, weak mu*F^gamma, negative 1-(1-F)^gamma; clamped to [0,1].
SoftLabel soft_label(double f_prev, double strength, double gamma, double mu_weak);

/// -y log f, with f clamped away from {0,1}.
double loss_global(double y, double f_now);

/// The Symmetric-mode negative term -(1-y) log(1-f).
double loss_global_negative_symmetric(double y, double f_now);

/// -y_it * sum(log q) over the linked local pairs' softmax probabilities.
double loss_local(const std::vector<double>& linked_probs, double y_it);

/// Symmetrized KL between the Bernoulli(p1) and Bernoulli(p2) predictions of
/// two dropout-perturbed forward passes.
double loss_uncertainty(double p1, double p2);
void loss_uncertainty_backward(double p1, double p2, double upstream, double& dp1, double& dp2);

double total_loss(double l_it, double l_c, double l_u, const TrainConfig& cfg);

/// Linear warmup to base_lr over warmup_frac of total_steps, then linear
/// decay to zero.
double lr_schedule(uint64_t step, uint64_t total_steps, double base_lr, double warmup_frac);

struct Triplet {
    std::optional<uint32_t> positive;
    std::optional<uint32_t> negative;
    double positive_strength = 0.0;
    double positive_confidence = 0.0;
    double negative_confidence = 0.0;
};

/// Positive drawn uniformly from strong neighbors, falling back to weak ones;
/// negative drawn uniformly from the strength-0 candidate records.
Triplet sample_triplet(const MultiModalGraph& g, NodeId anchor, Rng& rng);

class AdamState {
public:
    explicit AdamState(size_t n) : m_(n, 0.0), v_(n, 0.0) {}

    void apply(EncoderParams& params, const EncoderGrad& grad, double lr, double beta1, double beta2);

    uint64_t steps = 0;
    Vec& m() { return m_; }
    Vec& v() { return v_; }
    const Vec& m() const { return m_; }
    const Vec& v() const { return v_; }

private:
    Vec m_, v_;
};

struct TrainState {
    AdamState adam;
    uint64_t global_step = 0;
    uint64_t total_steps = 0;
};

struct IterationLossStats {
    double mean_global = 0.0;
    double mean_local = 0.0;
    double mean_uncertainty = 0.0;
    size_t contributing_anchors = 0;
};

struct LossTraceRow {
    uint64_t step;
    double l_it, l_c, l_u, lr;
};

/// One knowledge-guided training sweep: image anchors then sentence anchors,
/// minibatched; per anchor a triplet is sampled from the graph, soft labels
/// built from the stored previous-iteration confidences, two dropout passes
/// scored, and all three losses backpropagated; Adam step per batch under the
/// warmup/decay schedule.
IterationLossStats train_iteration(EncoderParams& model, TrainState& ts, const MultiModalGraph& graph,
                                   const SyntheticCorpus& corpus, const TrainConfig& cfg, uint64_t master_seed,
                                   uint32_t iteration, std::vector<LossTraceRow>* trace = nullptr);

/// Plain supervised warm-up on the ground-truth pairs (hard BCE, no dropout,
/// no graph context). Stands in for the pre-trained backbone the loop
/// normally starts from.
void pretrain_supervised(EncoderParams& model, const SyntheticCorpus& corpus, uint32_t epochs, double lr,
                         uint64_t master_seed);

}  // namespace mmkg
