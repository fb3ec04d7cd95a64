#include "ltre/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"

namespace ltre {

std::vector<double> extract_query_features(const Query& query, const TermEmbeddingTable& table) {
    std::vector<double> features(table.dim(), 0.0);
    std::size_t matched = 0;
    for (const auto& token : query.tokens) {
        auto row = table.row_of(token);
        if (!row) {
            continue;
        }
        auto v = table.vectors().row(*row);
        for (std::size_t i = 0; i < features.size(); ++i) {
            features[i] += v[i];
        }
        ++matched;
    }
    if (matched > 0) {
        for (auto& f : features) {
            f /= static_cast<double>(matched);
        }
    }
    return features;
}

ParameterBlock& ParameterBlock::operator+=(const ParameterBlock& other) {
    if (other.values_.size() != values_.size()) {
        throw ContractError("parameter block size mismatch");
    }
    for (std::size_t i = 0; i < values_.size(); ++i) {
        values_[i] += other.values_[i];
    }
    return *this;
}

QueryEncoderParams QueryEncoderParams::identity(std::size_t dim, bool use_layer_norm, double dropout_p) {
    QueryEncoderParams p;
    p.tensors = ParameterBlock(dim);
    p.use_layer_norm = use_layer_norm;
    p.dropout_p = dropout_p;
    auto w = p.tensors.weight();
    for (std::size_t i = 0; i < dim; ++i) {
        w[i * dim + i] = 1.0;
    }
    std::fill(p.tensors.ln_gain().begin(), p.tensors.ln_gain().end(), 1.0);
    p.validate();
    return p;
}

QueryEncoderParams QueryEncoderParams::perturbed_identity(std::size_t dim, double noise, std::uint64_t seed,
                                                          bool use_layer_norm, double dropout_p) {
    auto p = identity(dim, use_layer_norm, dropout_p);
    auto rng = make_rng(seed, {0x1417});
    std::normal_distribution<double> normal(0.0, noise / std::sqrt(static_cast<double>(dim)));
    for (auto& w : p.tensors.weight()) {
        w += normal(rng);
    }
    return p;
}

void QueryEncoderParams::validate() const {
    if (dim() == 0) {
        throw ValidationError("encoder dimension must be >= 1");
    }
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
        throw ValidationError("dropout probability must lie in [0, 1)");
    }
    if (!all_finite(tensors.flat())) {
        throw ValidationError("encoder parameters contain non-finite values");
    }
}

std::vector<double> encode_query_with_mask(const QueryEncoderParams& params, std::span<const double> x,
                                           std::span<const double> dropout_scale, ForwardCache* cache) {
    const std::size_t dim = params.dim();
    if (x.size() != dim || dropout_scale.size() != dim) {
        throw ContractError("encode_query: expected input of dimension " + std::to_string(dim));
    }
    auto w = params.tensors.weight();
    auto bias = params.tensors.bias();
    std::vector<double> h(dim);
    for (std::size_t r = 0; r < dim; ++r) {
        double acc = bias[r];
        for (std::size_t c = 0; c < dim; ++c) {
            acc += w[r * dim + c] * x[c];
        }
        h[r] = acc * dropout_scale[r];
    }

    std::vector<double> out(dim);
    std::vector<double> normalized;
    double inv_std = 1.0;
    if (params.use_layer_norm) {
        double mean = 0.0;
        for (double v : h) {
            mean += v;
        }
        mean /= static_cast<double>(dim);
        double var = 0.0;
        for (double v : h) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(dim);
        inv_std = 1.0 / std::sqrt(var + kLayerNormEpsilon);
        normalized.resize(dim);
        auto gain = params.tensors.ln_gain();
        auto shift = params.tensors.ln_bias();
        for (std::size_t i = 0; i < dim; ++i) {
            normalized[i] = (h[i] - mean) * inv_std;
            out[i] = gain[i] * normalized[i] + shift[i];
        }
    } else {
        out = h;
    }

    if (cache != nullptr) {
        cache->input.assign(x.begin(), x.end());
        cache->dropout_scale.assign(dropout_scale.begin(), dropout_scale.end());
        cache->hidden = std::move(h);
        cache->normalized = std::move(normalized);
        cache->inv_std = inv_std;
        cache->layer_norm = params.use_layer_norm;
    }
    return out;
}

std::vector<double> encode_query(const QueryEncoderParams& params, std::span<const double> x, EncodeMode mode,
                                 std::mt19937_64* rng, ForwardCache* cache) {
    std::vector<double> scale(params.dim(), 1.0);
    if (mode == EncodeMode::kTrain && params.dropout_p > 0.0) {
        if (rng == nullptr) {
            throw ContractError("encode_query: train mode with dropout needs a random source");
        }
        std::bernoulli_distribution drop(params.dropout_p);
        const double keep_scale = 1.0 / (1.0 - params.dropout_p);
        for (auto& s : scale) {
            s = drop(*rng) ? 0.0 : keep_scale;
        }
    }
    return encode_query_with_mask(params, x, scale, cache);
}

EncoderGradients encode_query_backward(const QueryEncoderParams& params, std::span<const double> x,
                                       const ForwardCache& cache, std::span<const double> upstream) {
    const std::size_t dim = params.dim();
    if (x.size() != dim || upstream.size() != dim) {
        throw ContractError("encode_query_backward: dimension mismatch");
    }
    if (cache.input.size() != dim || !std::equal(x.begin(), x.end(), cache.input.begin()) ||
        cache.layer_norm != params.use_layer_norm || cache.hidden.size() != dim ||
        cache.dropout_scale.size() != dim) {
        throw ContractError("encode_query_backward: forward cache does not match the inputs");
    }

    EncoderGradients grads(dim);
    std::vector<double> d_hidden(dim);
    if (params.use_layer_norm) {
        auto gain = params.tensors.ln_gain();
        auto d_gain = grads.ln_gain();
        auto d_shift = grads.ln_bias();
        std::vector<double> d_norm(dim);
        double mean_d = 0.0;
        double mean_dn = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            d_shift[i] = upstream[i];
            d_gain[i] = upstream[i] * cache.normalized[i];
            d_norm[i] = upstream[i] * gain[i];
            mean_d += d_norm[i];
            mean_dn += d_norm[i] * cache.normalized[i];
        }
        mean_d /= static_cast<double>(dim);
        mean_dn /= static_cast<double>(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            d_hidden[i] = cache.inv_std * (d_norm[i] - mean_d - cache.normalized[i] * mean_dn);
        }
    } else {
        std::copy(upstream.begin(), upstream.end(), d_hidden.begin());
    }

    auto d_w = grads.weight();
    auto d_b = grads.bias();
    for (std::size_t r = 0; r < dim; ++r) {
        const double d_pre = d_hidden[r] * cache.dropout_scale[r];
        d_b[r] = d_pre;
        for (std::size_t c = 0; c < dim; ++c) {
            d_w[r * dim + c] = d_pre * x[c];
        }
    }
    return grads;
}

std::vector<double> finite_difference_gradients(const std::function<double(std::span<const double>)>& loss,
                                                std::span<const double> theta, double eps) {
    std::vector<double> probe(theta.begin(), theta.end());
    std::vector<double> grad(theta.size());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double saved = probe[i];
        probe[i] = saved + eps;
        const double up = loss(probe);
        probe[i] = saved - eps;
        const double down = loss(probe);
        probe[i] = saved;
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

double scheduled_lr(const AdamWConfig& config, std::int64_t step) {
    if (config.warmup_steps > 0 && step <= config.warmup_steps) {
        return config.lr * static_cast<double>(step) / static_cast<double>(config.warmup_steps);
    }
    if (step >= config.total_steps) {
        return 0.0;
    }
    const auto decay_span = config.total_steps - config.warmup_steps;
    if (decay_span <= 0) {
        return config.lr;
    }
    return config.lr * static_cast<double>(config.total_steps - step) / static_cast<double>(decay_span);
}

double adamw_step(OptimizerState& state, std::span<double> params, std::span<const double> grads) {
    if (params.size() != grads.size() || state.first_moment.size() != params.size() ||
        state.second_moment.size() != params.size()) {
        throw ContractError("adamw_step: parameter, gradient and moment sizes differ");
    }
    if (!all_finite(grads)) {
        throw NumericError("adamw_step: non-finite gradient at optimizer step " +
                           std::to_string(state.step_count + 1));
    }
    const auto& cfg = state.config;
    const std::int64_t t = ++state.step_count;
    const double lr = scheduled_lr(cfg, t);
    const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i] -= lr * cfg.weight_decay * params[i];
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[i];
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[i] * grads[i];
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    return lr;
}

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

std::vector<std::byte> serialize_checkpoint(const QueryEncoderParams& params) {
    detail::ByteWriter out;
    out.magic("LTRP");
    out.u32(kCheckpointVersion);
    out.u32(static_cast<std::uint32_t>(params.dim()));
    for (double v : params.tensors.flat()) {
        out.f64(v);
    }
    out.u8(params.use_layer_norm ? 1 : 0);
    return std::move(out.bytes());
}

QueryEncoderParams deserialize_checkpoint(std::span<const std::byte> bytes) {
    detail::ByteReader in(bytes, "checkpoint");
    in.expect_magic("LTRP");
    const auto version = in.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    const auto dim = in.u32();
    if (dim == 0) {
        throw FormatError("checkpoint: zero dimension");
    }
    QueryEncoderParams params;
    params.tensors = ParameterBlock(dim);
    in.expect_remaining(params.tensors.flat().size() * 8 + 1);
    for (auto& v : params.tensors.flat()) {
        v = in.f64();
    }
    params.use_layer_norm = (in.u8() & 1u) != 0;
    params.validate();
    return params;
}

void save_checkpoint(const QueryEncoderParams& params, const std::filesystem::path& path) {
    detail::write_file(path, serialize_checkpoint(params));
}

QueryEncoderParams load_checkpoint(const std::filesystem::path& path) {
    auto bytes = detail::read_file(path);
    return deserialize_checkpoint(bytes);
}

} // namespace ltre
