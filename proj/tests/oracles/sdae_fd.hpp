#pragma once

// Central finite differences of the network part of the joint objective,
// with a loop-based forward pass that does not call into the library.

#include "tcf/sdae.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace oracle {

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Activations of every layer for one input row.
inline std::vector<std::vector<double>> forward_row(const tcf::SdaeParams& p, const std::vector<double>& x) {
    std::vector<std::vector<double>> acts{x};
    for (const auto& layer : p.layers) {
        const auto& in = acts.back();
        std::vector<double> out(layer.weight.cols());
        for (long c = 0; c < layer.weight.cols(); ++c) {
            double z = layer.bias[c];
            for (long r = 0; r < layer.weight.rows(); ++r) z += in[r] * layer.weight(r, c);
            out[c] = sig(z);
        }
        acts.push_back(out);
    }
    return acts;
}

/// (l_beta/2) sum |beta_i - f_e|^2 + (l_x/2) sum |xc_i - f_r|^2 + (l_w/2) sum (|W|^2 + |b|^2)
inline double network_loss(const tcf::SdaeParams& p, const tcf::Matrix& x0, const tcf::Matrix& xc,
                           const tcf::Matrix& beta, double l_beta, double l_x, double l_w) {
    double loss = 0.0;
    const std::size_t mid = p.layers.size() / 2;
    for (long i = 0; i < x0.rows(); ++i) {
        std::vector<double> row(x0.cols());
        for (long v = 0; v < x0.cols(); ++v) row[v] = x0(i, v);
        const auto acts = forward_row(p, row);
        for (long k = 0; k < beta.cols(); ++k) {
            const double d = beta(i, k) - acts[mid][k];
            loss += 0.5 * l_beta * d * d;
        }
        for (long v = 0; v < xc.cols(); ++v) {
            const double d = xc(i, v) - acts.back()[v];
            loss += 0.5 * l_x * d * d;
        }
    }
    for (const auto& layer : p.layers) loss += 0.5 * l_w * (layer.weight.squaredNorm() + layer.bias.squaredNorm());
    return loss;
}

struct FdGradients {
    std::vector<tcf::Matrix> weight;
    std::vector<tcf::RowVector> bias;
};

inline FdGradients finite_differences(tcf::SdaeParams p, const tcf::Matrix& x0, const tcf::Matrix& xc,
                                      const tcf::Matrix& beta, double l_beta, double l_x, double l_w, double h) {
    FdGradients g;
    auto central = [&](double& slot) {
        const double keep = slot;
        slot = keep + h;
        const double up = network_loss(p, x0, xc, beta, l_beta, l_x, l_w);
        slot = keep - h;
        const double down = network_loss(p, x0, xc, beta, l_beta, l_x, l_w);
        slot = keep;
        return (up - down) / (2.0 * h);
    };
    for (auto& layer : p.layers) {
        tcf::Matrix gw(layer.weight.rows(), layer.weight.cols());
        for (long r = 0; r < gw.rows(); ++r)
            for (long c = 0; c < gw.cols(); ++c) gw(r, c) = central(layer.weight(r, c));
        tcf::RowVector gb(layer.bias.size());
        for (long c = 0; c < gb.size(); ++c) gb[c] = central(layer.bias[c]);
        g.weight.push_back(gw);
        g.bias.push_back(gb);
    }
    return g;
}

}  // namespace oracle

namespace oracle {

/// |a - b| / max(|b|, 1e-12), Frobenius norms over a whole parameter array.
template <class A, class B>
double relative_error(const A& a, const B& b) {
    return (a - b).norm() / std::max(b.norm(), 1e-12);
}

}  // namespace oracle
