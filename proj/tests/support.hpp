#pragma once

// Random instances shared by the unit tests and the acceptance runner.

#include "tcf/corpus.hpp"
#include "tcf/factor.hpp"
#include "tcf/ppmi.hpp"

#include "oracles/joint_loss.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace support {

using namespace tcf;

struct BlockInstance {
    RatingDataset ratings;
    PpmiMatrix s;
    Matrix anchor;
    ModelState state;
    Hyperparams hyper;
    CompressedRows by_user, by_item;
};

inline Matrix normal_matrix(Index r, Index c, double sd, Rng& rng) {
    Matrix m(r, c);
    fill_normal(m, sd, rng);
    return m;
}

/// Small dense-ish problem: N, M in [2, 9], random ratings, clicks and anchor.
inline BlockInstance random_instance(std::uint64_t seed, Index k) {
    Rng rng(seed);
    std::uniform_int_distribution<int> dim(2, 9);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    BlockInstance in;
    const Index n = dim(rng), m = dim(rng);
    in.ratings.n_users = n;
    in.ratings.n_items = m;
    for (Index u = 0; u < n; ++u)
        for (Index i = 0; i < m; ++i)
            if (unit(rng) < 0.5) in.ratings.entries.push_back({u, i, 1.0 + 4.0 * unit(rng)});
    ClickDataset clicks;
    clicks.n_users = n + 3;
    clicks.n_items = m;
    for (Index u = 0; u < clicks.n_users; ++u)
        for (Index i = 0; i < m; ++i)
            if (unit(rng) < 0.4) clicks.entries.push_back({u, i});
    in.s = cooccurrence_counts(clicks).total_pairs > 0 ? build_ppmi(clicks) : PpmiMatrix::empty(m);
    in.anchor = normal_matrix(m, k, 0.5, rng);
    in.state.theta = normal_matrix(n, k, 1.0, rng);
    in.state.beta = normal_matrix(m, k, 1.0, rng);
    in.state.alpha = normal_matrix(m, k, 1.0, rng);
    in.hyper.latent_dim = k;
    in.hyper.lambda_s = std::exp(std::uniform_real_distribution<double>(-3.0, 2.0)(rng));
    in.hyper.lambda_theta = std::exp(std::uniform_real_distribution<double>(-3.0, 1.0)(rng));
    in.hyper.lambda_beta = std::exp(std::uniform_real_distribution<double>(-3.0, 1.0)(rng));
    in.hyper.lambda_alpha = std::exp(std::uniform_real_distribution<double>(-3.0, 1.0)(rng));
    in.by_user = compress_ratings(in.ratings, true);
    in.by_item = compress_ratings(in.ratings, false);
    return in;
}

inline oracle::Mat to_rows(const Matrix& m) {
    oracle::Mat out(m.rows(), oracle::Vec(m.cols()));
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
    return out;
}

inline oracle::JointProblem to_problem(const BlockInstance& in) {
    oracle::JointProblem p;
    p.k = static_cast<int>(in.hyper.latent_dim);
    const auto n = in.ratings.n_users, m = in.ratings.n_items;
    p.r.assign(n, std::vector<double>(m, std::numeric_limits<double>::quiet_NaN()));
    for (const auto& r : in.ratings.entries) p.r[r.user][r.item] = r.value;
    p.s.assign(m, std::vector<double>(m, 0.0));
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < m; ++j) p.s[i][j] = in.s.at(i, j);
    p.anchor = to_rows(in.anchor);
    p.l_s = in.hyper.lambda_s;
    p.l_theta = in.hyper.lambda_theta;
    p.l_beta = in.hyper.lambda_beta;
    p.l_alpha = in.hyper.lambda_alpha;
    return p;
}

inline oracle::JointParams to_params(const ModelState& st) {
    return {to_rows(st.theta), to_rows(st.beta), to_rows(st.alpha)};
}

struct BlockCheck {
    double max_gradient = 0.0;  // over every updated row
    bool perturbation_lowered = false;
};

/// Applies each block update row by row, checks the oracle gradient at the
/// result and tries `perturbations` random moves of that row.
inline BlockCheck check_blocks(BlockInstance in, int perturbations, std::uint64_t seed) {
    const auto problem = to_problem(in);
    BlockCheck out;
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> log_scale(-4.0, 0.0);

    auto probe = [&](auto& rows, std::size_t r, const oracle::Vec& grad, oracle::JointParams& x) {
        out.max_gradient = std::max(out.max_gradient, oracle::norm(grad));
        const double base = oracle::joint_loss(problem, x);
        const oracle::Vec keep = rows[r];
        for (int t = 0; t < perturbations; ++t) {
            const double scale = std::pow(10.0, log_scale(rng));
            for (auto& v : rows[r]) v += scale * noise(rng);
            if (oracle::joint_loss(problem, x) < base) out.perturbation_lowered = true;
            rows[r] = keep;
        }
    };

    const Index n = in.ratings.n_users, m = in.ratings.n_items;
    for (Index u = 0; u < n; ++u) {
        in.state.theta.row(u) = update_user(in.by_user.row(u), in.state.beta, in.hyper.lambda_theta).transpose();
        auto x = to_params(in.state);
        probe(x.theta, u, oracle::grad_theta(problem, x, u), x);
    }
    for (Index i = 0; i < m; ++i) {
        in.state.beta.row(i) = update_item_feature(in.by_item.row(i), in.state.theta, in.state.alpha, in.s.neighbors(i),
                                                   in.anchor.row(i), in.hyper.lambda_s, in.hyper.lambda_beta)
                                   .transpose();
        auto x = to_params(in.state);
        probe(x.beta, i, oracle::grad_beta(problem, x, i), x);
    }
    for (Index j = 0; j < m; ++j) {
        in.state.alpha.row(j) =
            update_item_context(in.s.neighbors(j), in.state.beta, in.hyper.lambda_s, in.hyper.lambda_alpha).transpose();
        auto x = to_params(in.state);
        probe(x.alpha, j, oracle::grad_alpha(problem, x, j), x);
    }
    return out;
}

}  // namespace support
