#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "priorisk/core.hpp"

namespace priorisk::model {

// Fusion variants. baseline ignores the prior exam entirely, rp_plus
// replaces the attention output with the elementwise sum of the two
// encodings, prime runs the full cross-attention block.
enum class Variant { baseline, rp_plus, prime };

std::string variant_name(Variant v);
Variant variant_from_name(std::string_view name);

struct ModelDims {
    int feature_dim = 32;    // D, raw feature vector length
    int d_model = 16;        // encoder output width
    int n_heads = 2;         // attention heads
    int n_tokens = 4;        // M, prior tokens formed by slicing the encoding
    int horizon = 5;         // T, number of yearly hazard increments
    int encoder_layers = 2;  // affine layers; tanh between layers, none after the last

    int d_head() const { return d_model / n_heads; }
    int d_token() const { return d_model / n_tokens; }
    int d_fused() const { return 2 * d_model; }

    // d_model must divide evenly by n_heads and n_tokens, all sizes positive.
    void validate() const;
    bool operator==(const ModelDims&) const = default;
};

struct TensorSpec {
    std::string name;
    int rows = 0;
    int cols = 0;  // 1 for vectors
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

// All weights in one flat vector with a named-tensor layout on top.
// Keeps SGD, gradients, finite differencing, and checkpointing uniform.
//
// Layout: enc.W{l}, enc.b{l} for each encoder layer; per head attn{k}.Wq,
// attn{k}.Wk, attn{k}.Wv (d_head x d_model); attn.Wo (d_model x d_model,
// no bias); attn.Wp / attn.bp (post-concat linear); head.base.W / .b
// (1 x d_fused); head.time.W / .b (horizon x d_fused).
class ModelParams {
  public:
    ModelParams(ModelDims dims, Variant variant);

    // Xavier-uniform weights, zero biases, deterministic in seed.
    static ModelParams seeded(ModelDims dims, Variant variant, std::uint64_t seed);

    std::span<double> tensor(std::string_view name);
    std::span<const double> tensor(std::string_view name) const;
    const TensorSpec& spec(std::string_view name) const;

    std::span<double> flat() { return data_; }
    std::span<const double> flat() const { return data_; }
    std::size_t size() const { return data_.size(); }
    const std::vector<TensorSpec>& layout() const { return layout_; }

    const ModelDims& dims() const { return dims_; }
    Variant variant() const { return variant_; }

  private:
    ModelDims dims_;
    Variant variant_;
    std::vector<TensorSpec> layout_;
    std::vector<double> data_;
};

// Intermediate features exposed for inspection and tests.
struct FusionTrace {
    std::vector<double> x_curr;                        // d_model
    std::vector<std::vector<double>> x_prior_tokens;   // M x d_model
    std::vector<std::vector<double>> attn_weights;     // n_heads x M, each sums to 1
    std::vector<double> x_cpc;                         // d_model
    std::vector<double> x_star;                        // 2*d_model
};

struct HazardPrediction {
    double base = 0.0;               // raw base-hazard head output
    std::vector<double> increments;  // softplus of the time head, length T, >= 0
    std::vector<double> cumulative;  // sigmoid(base + running sum), in (0,1)
};

struct AttentionResult {
    std::vector<double> x_cpc;
    std::vector<std::vector<double>> weights;  // n_heads x M
};

// Shared backbone: affine stack with tanh between layers.
std::vector<double> encode(std::span<const double> features, const ModelParams& params);

// Query from the current feature, keys/values from the prior tokens.
// Scores are scaled dot products over d_head; per-head outputs are
// concatenated, projected by Wo, then the post-concat linear gives x_cpc.
AttentionResult cross_attention(std::span<const double> x_curr,
                                const std::vector<std::vector<double>>& prior_tokens,
                                const ModelParams& params);

// Concatenation, x_cpc first.
std::vector<double> fuse(std::span<const double> x_cpc, std::span<const double> x_curr);

// Slices a prior encoding into M tokens embedded at their own coordinates
// (zeros elsewhere), so each token keys a distinct span of the encoding.
std::vector<std::vector<double>> tokenize_prior(std::span<const double> x_prior,
                                                const ModelDims& dims);

HazardPrediction hazard_forward(std::span<const double> x_star, const ModelParams& params);

// Sum over horizons of mask(t) * BCE(h(t), cumulative(t)).
double masked_bce_loss(const HazardPrediction& pred, const core::LabelPair& label);

// Full pipeline for one (current, prior) pair under params.variant().
// baseline: x_star = x_curr ++ x_curr (prior unused).
// rp_plus:  x_star = (x_curr + x_prior) ++ x_curr.
// prime:    x_star = x_cpc ++ x_curr.
std::pair<HazardPrediction, FusionTrace> forward(const core::ExamRecord& current,
                                                 const core::ExamRecord& prior,
                                                 const ModelParams& params);

struct Sample {
    const core::ExamRecord* current = nullptr;
    const core::ExamRecord* prior = nullptr;
    core::LabelPair label;
};

// Exact reverse-mode gradient of the summed masked BCE loss; returns the
// loss. grad must have params.size() entries and is overwritten.
// Per-sample gradients are evaluated in parallel into private slots and
// reduced in sample order, so the result is bitwise identical for any
// thread count and to the serial reference.
double batch_loss_grad(std::span<const Sample> batch, const ModelParams& params,
                       std::span<double> grad);

// Plain single-threaded loop, kept as the reference for the parallel path.
double batch_loss_grad_serial(std::span<const Sample> batch, const ModelParams& params,
                              std::span<double> grad);

// Versioned text checkpoint: header with dims/variant, then one block per
// tensor (name rows cols + hexfloat values). Lossless round trip.
void save_checkpoint(const ModelParams& params, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

// Stable sigmoid / softplus used by the hazard head.
double sigmoid(double x);
double softplus(double x);

}  // namespace priorisk::model
