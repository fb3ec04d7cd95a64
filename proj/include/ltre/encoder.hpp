#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ltre/corpus.hpp"
#include "ltre/embeddings.hpp"

namespace ltre {

/// Mean of the term vectors of in-vocabulary tokens; zero when none match.
std::vector<double> extract_query_features(const Query& query, const TermEmbeddingTable& table);

/// Contiguous storage for the encoder tensors, laid out as
/// [weight (dim x dim, row-major) | bias | ln_gain | ln_bias].
/// The same layout carries gradients and optimizer moments.
class ParameterBlock {
  public:
    ParameterBlock() = default;
    explicit ParameterBlock(std::size_t dim) : dim_(dim), values_(dim * dim + 3 * dim, 0.0) {}

    std::size_t dim() const noexcept {
        return dim_;
    }

    std::span<double> weight() {
        return flat().subspan(0, dim_ * dim_);
    }
    std::span<double> bias() {
        return flat().subspan(dim_ * dim_, dim_);
    }
    std::span<double> ln_gain() {
        return flat().subspan(dim_ * dim_ + dim_, dim_);
    }
    std::span<double> ln_bias() {
        return flat().subspan(dim_ * dim_ + 2 * dim_, dim_);
    }
    std::span<const double> weight() const {
        return flat().subspan(0, dim_ * dim_);
    }
    std::span<const double> bias() const {
        return flat().subspan(dim_ * dim_, dim_);
    }
    std::span<const double> ln_gain() const {
        return flat().subspan(dim_ * dim_ + dim_, dim_);
    }
    std::span<const double> ln_bias() const {
        return flat().subspan(dim_ * dim_ + 2 * dim_, dim_);
    }

    std::span<double> flat() noexcept {
        return values_;
    }
    std::span<const double> flat() const noexcept {
        return values_;
    }

    ParameterBlock& operator+=(const ParameterBlock& other);
    bool operator==(const ParameterBlock&) const = default;

  private:
    std::size_t dim_ = 0;
    std::vector<double> values_;
};

using EncoderGradients = ParameterBlock;

/// Trainable query encoder: linear projection, optional inverted dropout,
/// optional layer norm.
struct QueryEncoderParams {
    ParameterBlock tensors;
    bool use_layer_norm = true;
    double dropout_p = 0.0;

    std::size_t dim() const noexcept {
        return tensors.dim();
    }

    /// W = I, zero bias, unit gain, zero LN bias.
    static QueryEncoderParams identity(std::size_t dim, bool use_layer_norm = true, double dropout_p = 0.0);
    /// Identity plus N(0, noise^2 / dim) perturbation of W.
    static QueryEncoderParams perturbed_identity(std::size_t dim, double noise, std::uint64_t seed,
                                                 bool use_layer_norm = true, double dropout_p = 0.0);

    void validate() const;
    bool operator==(const QueryEncoderParams&) const = default;
};

constexpr double kLayerNormEpsilon = 1e-5;

enum class EncodeMode { kTrain, kEval };

/// Everything the backward pass needs from one forward evaluation.
struct ForwardCache {
    std::vector<double> input;
    std::vector<double> dropout_scale; // 0 or 1/(1-p) per component; 1 without dropout
    std::vector<double> hidden;        // after bias and dropout
    std::vector<double> normalized;    // (hidden - mean) * inv_std
    double inv_std = 1.0;
    bool layer_norm = false;
};

/// Forward pass. `rng` is only consulted in train mode with dropout_p > 0.
std::vector<double> encode_query(const QueryEncoderParams& params, std::span<const double> x, EncodeMode mode,
                                 std::mt19937_64* rng = nullptr, ForwardCache* cache = nullptr);

/// Forward pass with a caller-supplied dropout mask (values 0 or 1/(1-p)).
std::vector<double> encode_query_with_mask(const QueryEncoderParams& params, std::span<const double> x,
                                           std::span<const double> dropout_scale, ForwardCache* cache = nullptr);

/// Exact gradients of <upstream, encode_query(x)> with respect to the
/// parameters. `cache` must come from a forward pass over the same `x`.
EncoderGradients encode_query_backward(const QueryEncoderParams& params, std::span<const double> x,
                                       const ForwardCache& cache, std::span<const double> upstream);

/// Central differences (f(t + eps) - f(t - eps)) / (2 eps), one coordinate at a time.
std::vector<double> finite_difference_gradients(const std::function<double(std::span<const double>)>& loss,
                                                std::span<const double> theta, double eps);

struct AdamWConfig {
    double lr = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
    std::int64_t warmup_steps = 200;
    std::int64_t total_steps = 6000;
};

/// Linear warmup to `lr`, then linear decay to 0 at `total_steps`.
/// `step` is 1-based (the step about to be applied).
double scheduled_lr(const AdamWConfig& config, std::int64_t step);

struct OptimizerState {
    AdamWConfig config;
    std::int64_t step_count = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;

    OptimizerState() = default;
    OptimizerState(const AdamWConfig& cfg, std::size_t num_params)
            : config(cfg), first_moment(num_params, 0.0), second_moment(num_params, 0.0) {}
};

/// One decoupled-weight-decay Adam update. Returns the learning rate used.
/// Throws NumericError when any gradient is NaN or infinite.
double adamw_step(OptimizerState& state, std::span<double> params, std::span<const double> grads);

/// Checkpoint: "LTRP", u32 version, u32 dim, W, bias, ln_gain, ln_bias as
/// f64 little-endian, then one flags byte (bit 0 = layer norm).
std::vector<std::byte> serialize_checkpoint(const QueryEncoderParams& params);
QueryEncoderParams deserialize_checkpoint(std::span<const std::byte> bytes);
void save_checkpoint(const QueryEncoderParams& params, const std::filesystem::path& path);
QueryEncoderParams load_checkpoint(const std::filesystem::path& path);

} // namespace ltre
