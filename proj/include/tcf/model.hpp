#pragma once

#include "tcf/common.hpp"
#include "tcf/sdae.hpp"

namespace tcf {

/// Learned parameters: user features theta (N x K), item features beta
/// (M x K), item contexts alpha (M x K) and the text network.
struct ModelState {
    Matrix theta;
    Matrix beta;
    Matrix alpha;
    SdaeParams sdae;
    int epoch = 0;
    /// Train-set mean subtracted before fitting when centering is on; 0 otherwise.
    double global_mean = 0.0;

    Index n_users() const noexcept { return theta.rows(); }
    Index n_items() const noexcept { return beta.rows(); }
    Index latent_dim() const noexcept { return theta.cols(); }

    bool all_finite() const {
        return theta.allFinite() && beta.allFinite() && alpha.allFinite() && sdae.all_finite();
    }
};

}  // namespace tcf
