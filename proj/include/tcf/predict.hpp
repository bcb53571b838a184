#pragma once

// Rating predictors and RMSE.

#include "tcf/common.hpp"
#include "tcf/sdae.hpp"

#include <span>

namespace tcf {

/// theta_u . beta_i
inline double predict_in_matrix(const Eigen::Ref<const RowVector>& theta_u,
                                const Eigen::Ref<const RowVector>& beta_i) {
    if (theta_u.size() != beta_i.size())
        throw ShapeError("predict_in_matrix: theta has " + std::to_string(theta_u.size()) +
                         " coordinates, beta has " + std::to_string(beta_i.size()));
    return theta_u.dot(beta_i);
}

/// theta_u . f_e(x_item), where x_item is the clean bag-of-words row of an
/// item that has no ratings. Reads no item factors.
inline double predict_out_of_matrix(const Eigen::Ref<const RowVector>& theta_u, const RowVector& x_item,
                                    const SdaeParams& sdae) {
    if (sdae.empty()) throw ConfigError("out-of-matrix prediction requires the text model");
    if (x_item.size() != sdae.input_width())
        throw ShapeError("predict_out_of_matrix: text row has " + std::to_string(x_item.size()) +
                         " terms, the trained vocabulary has " + std::to_string(sdae.input_width()));
    const RowVector code = encode(x_item, sdae);
    if (theta_u.size() != code.size()) throw ShapeError("predict_out_of_matrix: theta does not match code width");
    return theta_u.dot(code);
}

inline double rmse(std::span<const double> predictions, std::span<const double> truths) {
    if (predictions.empty() || predictions.size() != truths.size())
        throw ShapeError("rmse: need equal, nonempty prediction and truth lists");
    CompensatedSum sum;
    for (std::size_t k = 0; k < predictions.size(); ++k) {
        const double d = predictions[k] - truths[k];
        sum.add(d * d);
    }
    return std::sqrt(sum.value() / static_cast<double>(predictions.size()));
}

}  // namespace tcf
