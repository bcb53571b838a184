#pragma once

// Stacked denoising autoencoder over item bag-of-words rows.
//
// Layer l maps h_{l-1} to h_l = sigmoid(h_{l-1} W_l + b_l), l = 1..L, with
// h_0 the (corrupted) input. The middle activation h_{L/2} is the item text
// code f_e; the last activation h_L is the reconstruction f_r.

#include "tcf/common.hpp"

#include <numeric>
#include <string>
#include <vector>

namespace tcf {

struct SdaeConfig {
    /// [V, d_1, ..., K, ..., d_1, V]. Empty disables the text model entirely.
    std::vector<Index> layer_widths;
    double noise_rate = 0.3;
    int pretrain_epochs = 20;
    /// Step size of the per-epoch joint gradient pass.
    double learning_rate = 0.01;
    double pretrain_learning_rate = 0.1;
    Index pretrain_batch_size = 32;

    /// Builds [V, hidden..., hidden-reversed..., V]; the last hidden width is the code size.
    static SdaeConfig symmetric(Index vocab, const std::vector<Index>& hidden) {
        SdaeConfig cfg;
        cfg.layer_widths.push_back(vocab);
        for (Index w : hidden) cfg.layer_widths.push_back(w);
        for (auto it = hidden.rbegin() + 1; it != hidden.rend(); ++it)
            cfg.layer_widths.push_back(*it);
        cfg.layer_widths.push_back(vocab);
        return cfg;
    }

    bool enabled() const noexcept { return !layer_widths.empty(); }
    int depth() const noexcept {
        return enabled() ? static_cast<int>(layer_widths.size()) - 1 : 0;
    }
    Index input_width() const { return layer_widths.front(); }
    Index code_width() const { return layer_widths[layer_widths.size() / 2]; }

    void validate() const {
        if (!enabled()) return;
        const int L = depth();
        if (L < 2 || L % 2 != 0)
            throw ConfigError("sdae: layer count must be even and >= 2, got " + std::to_string(L));
        for (int l = 0; l <= L; ++l) {
            if (layer_widths[l] < 1) throw ConfigError("sdae: layer widths must be positive");
            if (layer_widths[l] != layer_widths[L - l])
                throw ConfigError("sdae: layer widths must be symmetric around the code layer");
        }
        if (!(noise_rate >= 0.0 && noise_rate < 1.0))
            throw ConfigError("sdae: noise_rate must lie in [0, 1)");
        if (!(learning_rate > 0.0) || !(pretrain_learning_rate > 0.0))
            throw ConfigError("sdae: learning rates must be positive");
        if (pretrain_epochs < 0) throw ConfigError("sdae: pretrain_epochs must be >= 0");
        if (pretrain_batch_size < 1) throw ConfigError("sdae: pretrain_batch_size must be >= 1");
    }
};

struct SdaeLayer {
    Matrix weight;  // d_{l-1} x d_l
    RowVector bias;  // d_l
};

struct SdaeParams {
    std::vector<SdaeLayer> layers;

    bool empty() const noexcept { return layers.empty(); }
    int depth() const noexcept { return static_cast<int>(layers.size()); }
    Index input_width() const { return layers.front().weight.rows(); }
    Index code_width() const { return layers[layers.size() / 2 - 1].weight.cols(); }

    std::vector<Index> widths() const {
        std::vector<Index> w;
        if (empty()) return w;
        w.push_back(input_width());
        for (const auto& layer : layers) w.push_back(layer.weight.cols());
        return w;
    }

    bool all_finite() const {
        for (const auto& layer : layers)
            if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
        return true;
    }

    /// Zero biases, weights uniform in +-sqrt(6 / (fan_in + fan_out)).
    static SdaeParams initialize(const SdaeConfig& config, std::uint64_t seed) {
        config.validate();
        SdaeParams params;
        Rng rng(seed);
        for (int l = 1; l <= config.depth(); ++l) {
            const Index fan_in = config.layer_widths[l - 1];
            const Index fan_out = config.layer_widths[l];
            const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
            std::uniform_real_distribution<double> dist(-bound, bound);
            SdaeLayer layer{Matrix(fan_in, fan_out), RowVector::Zero(fan_out)};
            for (Index r = 0; r < fan_in; ++r)
                for (Index c = 0; c < fan_out; ++c) layer.weight(r, c) = dist(rng);
            params.layers.push_back(std::move(layer));
        }
        return params;
    }
};

// ---------------------------------------------------------------------------
// Corruption

/// Masking noise: each coordinate is zeroed independently with probability `noise_rate`.
inline RowVector corrupt(const RowVector& x_clean, double noise_rate, std::uint64_t seed) {
    if (!(noise_rate >= 0.0 && noise_rate < 1.0))
        throw ConfigError("corrupt: noise_rate must lie in [0, 1)");
    RowVector out = x_clean;
    if (noise_rate == 0.0) return out;
    Rng rng(seed);
    std::bernoulli_distribution drop(noise_rate);
    for (Index v = 0; v < out.size(); ++v)
        if (drop(rng)) out[v] = 0.0;
    return out;
}

/// Row r is corrupted with the stream derive_seed(seed, r), so results do
/// not depend on how many rows are processed together.
inline Matrix corrupt_rows(const Matrix& clean, double noise_rate, std::uint64_t seed) {
    Matrix out(clean.rows(), clean.cols());
    for (Index r = 0; r < clean.rows(); ++r)
        out.row(r) = corrupt(clean.row(r), noise_rate, derive_seed(seed, static_cast<std::uint64_t>(r)));
    return out;
}

// ---------------------------------------------------------------------------
// Forward pass

struct SdaeForward {
    /// outputs[0] is the input batch, outputs[l] is h_l.
    std::vector<Matrix> outputs;

    const Matrix& code() const { return outputs[outputs.size() / 2]; }
    const Matrix& reconstruction() const { return outputs.back(); }
};

namespace detail {

inline void check_input(const SdaeParams& params, const Matrix& x0) {
    if (params.empty()) throw ShapeError("sdae: network has no layers");
    if (x0.cols() != params.input_width())
        throw ShapeError("sdae: input width " + std::to_string(x0.cols()) +
                         " does not match network input " + std::to_string(params.input_width()));
}

inline Matrix apply_layer(const SdaeLayer& layer, const Matrix& input) {
    Matrix pre = input * layer.weight;
    pre.rowwise() += layer.bias;
    return pre.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace detail

/// Runs layers 1..`through` (default: all) and keeps every activation.
inline SdaeForward forward(const Matrix& x0, const SdaeParams& params, int through = -1) {
    detail::check_input(params, x0);
    if (through < 0) through = params.depth();
    SdaeForward fwd;
    fwd.outputs.reserve(static_cast<std::size_t>(through) + 1);
    fwd.outputs.push_back(x0);
    for (int l = 0; l < through; ++l)
        fwd.outputs.push_back(detail::apply_layer(params.layers[l], fwd.outputs.back()));
    return fwd;
}

/// f_e: the middle-layer activation, one K-row per input row.
inline Matrix encode(const Matrix& x0, const SdaeParams& params) {
    auto fwd = forward(x0, params, params.depth() / 2);
    return std::move(fwd.outputs.back());
}

inline RowVector encode(const RowVector& x0, const SdaeParams& params) {
    return encode(Matrix(x0), params).row(0);
}

/// f_r: the output-layer activation.
inline Matrix reconstruct(const Matrix& x0, const SdaeParams& params) {
    auto fwd = forward(x0, params);
    return std::move(fwd.outputs.back());
}

inline RowVector reconstruct(const RowVector& x0, const SdaeParams& params) {
    return reconstruct(Matrix(x0), params).row(0);
}

// ---------------------------------------------------------------------------
// Joint-loss terms that involve the network

/// Weights of the three SDAE-touching terms of the joint loss.
struct SdaeLossWeights {
    double anchor = 0.0;  // lambda_beta: (1/2)||beta_i - f_e(x0_i)||^2
    double recon = 0.0;   // lambda_X:    (1/2)||xc_i - f_r(x0_i)||^2
    double decay = 0.0;   // lambda_W:    (1/2)(||W_l||^2 + ||b_l||^2)
};

struct SdaeGradients {
    std::vector<Matrix> weight;
    std::vector<RowVector> bias;
};

struct SdaeObjective {
    double anchor = 0.0;
    double recon = 0.0;
    double decay = 0.0;
    double total() const noexcept { return anchor + recon + decay; }
};

namespace detail {

inline void check_batch(const SdaeParams& params, const Matrix& x0, const Matrix& xc,
                        const Matrix& beta, const SdaeLossWeights& w) {
    check_input(params, x0);
    if (w.recon != 0.0 && (xc.rows() != x0.rows() || xc.cols() != x0.cols()))
        throw ShapeError("sdae: clean batch shape differs from corrupted batch");
    if (w.anchor != 0.0 && (beta.rows() != x0.rows() || beta.cols() != params.code_width()))
        throw ShapeError("sdae: anchor batch must be rows x code width");
    if (!x0.allFinite() || (w.recon != 0.0 && !xc.allFinite()) ||
        (w.anchor != 0.0 && !beta.allFinite()))
        throw NumericError("sdae: non-finite input batch");
}

inline double decay_norm(const SdaeParams& params) {
    CompensatedSum s;
    for (const auto& layer : params.layers) {
        s.add(layer.weight.squaredNorm());
        s.add(layer.bias.squaredNorm());
    }
    return s.value();
}

}  // namespace detail

inline SdaeObjective sdae_objective(const SdaeParams& params, const SdaeForward& fwd,
                                    const Matrix& xc, const Matrix& beta,
                                    const SdaeLossWeights& w) {
    SdaeObjective obj;
    if (w.anchor != 0.0) obj.anchor = 0.5 * w.anchor * (beta - fwd.code()).squaredNorm();
    if (w.recon != 0.0) obj.recon = 0.5 * w.recon * (xc - fwd.reconstruction()).squaredNorm();
    if (w.decay != 0.0) obj.decay = 0.5 * w.decay * detail::decay_norm(params);
    return obj;
}

inline SdaeObjective sdae_objective(const SdaeParams& params, const Matrix& x0, const Matrix& xc,
                                    const Matrix& beta, const SdaeLossWeights& w) {
    detail::check_batch(params, x0, xc, beta, w);
    return sdae_objective(params, forward(x0, params), xc, beta, w);
}

/// Gradient of sdae_objective with respect to every W_l and b_l (backpropagation).
inline SdaeGradients sdae_gradients(const SdaeParams& params, const Matrix& x0, const Matrix& xc,
                                    const Matrix& beta, const SdaeLossWeights& w) {
    detail::check_batch(params, x0, xc, beta, w);
    const int L = params.depth();
    const int mid = L / 2;
    const SdaeForward fwd = forward(x0, params);

    SdaeGradients g;
    g.weight.resize(static_cast<std::size_t>(L));
    g.bias.resize(static_cast<std::size_t>(L));

    Matrix grad_h = Matrix::Zero(x0.rows(), params.layers.back().weight.cols());
    if (w.recon != 0.0) grad_h = w.recon * (fwd.reconstruction() - xc);

    for (int l = L; l >= 1; --l) {
        const Matrix& h = fwd.outputs[l];
        if (l == mid && w.anchor != 0.0) grad_h += w.anchor * (h - beta);
        const Matrix delta = grad_h.cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix()));
        const SdaeLayer& layer = params.layers[l - 1];
        g.weight[l - 1] = fwd.outputs[l - 1].transpose() * delta + w.decay * layer.weight;
        g.bias[l - 1] = delta.colwise().sum() + w.decay * layer.bias;
        if (l > 1) grad_h = delta * layer.weight.transpose();
    }
    return g;
}

inline void apply_step(SdaeParams& params, const SdaeGradients& g, double step) {
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        params.layers[l].weight -= step * g.weight[l];
        params.layers[l].bias -= step * g.bias[l];
    }
}

// ---------------------------------------------------------------------------
// Pretraining

/// Mean per-row squared reconstruction error (1/2)||x - f_r(x)||^2 on clean rows.
inline double reconstruction_error(const Matrix& xc, const SdaeParams& params) {
    if (xc.rows() == 0) return 0.0;
    return 0.5 * (xc - reconstruct(xc, params)).squaredNorm() / static_cast<double>(xc.rows());
}

/// Greedy layer-wise denoising pretraining. Layer pair (l, L+1-l) is trained
/// as a one-hidden-layer denoising autoencoder on the clean codes produced by
/// the already-trained encoders, with mini-batch gradient descent.
inline SdaeParams pretrain(const Matrix& xc, const SdaeConfig& config, std::uint64_t seed) {
    SdaeParams params = SdaeParams::initialize(config, seed);
    if (config.pretrain_epochs == 0 || xc.rows() == 0) return params;
    if (xc.cols() != config.input_width())
        throw ShapeError("pretrain: document width does not match the network input");

    const int L = config.depth();
    const Index n = xc.rows();
    const double lr = config.pretrain_learning_rate;
    Rng order_rng(derive_seed(seed, 0xD1CE));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});

    Matrix input = xc;
    for (int p = 0; p < L / 2; ++p) {
        SdaeLayer& enc = params.layers[p];
        SdaeLayer& dec = params.layers[L - 1 - p];
        for (int epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
            const std::uint64_t noise_seed =
                derive_seed(seed, 0x10000ULL * static_cast<std::uint64_t>(p + 1) +
                                      static_cast<std::uint64_t>(epoch));
            const Matrix noisy = corrupt_rows(input, config.noise_rate, noise_seed);
            std::shuffle(order.begin(), order.end(), order_rng);
            for (Index start = 0; start < n; start += config.pretrain_batch_size) {
                const Index len = std::min(config.pretrain_batch_size, n - start);
                Matrix xb(len, input.cols());
                Matrix xn(len, input.cols());
                for (Index r = 0; r < len; ++r) {
                    const Index src = order[static_cast<std::size_t>(start + r)];
                    xb.row(r) = input.row(src);
                    xn.row(r) = noisy.row(src);
                }
                const Matrix h = detail::apply_layer(enc, xn);
                const Matrix y = detail::apply_layer(dec, h);
                const double scale = 1.0 / static_cast<double>(len);
                const Matrix dy =
                    scale * (y - xb).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
                const Matrix dh =
                    (dy * dec.weight.transpose()).cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix()));
                dec.weight -= lr * (h.transpose() * dy);
                dec.bias -= lr * dy.colwise().sum();
                enc.weight -= lr * (xn.transpose() * dh);
                enc.bias -= lr * dh.colwise().sum();
            }
        }
        input = detail::apply_layer(enc, input);
    }
    return params;
}

}  // namespace tcf
