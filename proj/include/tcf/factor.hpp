#pragma once

// Joint factorization of the rating matrix R and the PPMI matrix S with item
// features anchored to the text encoder.
//
//   L = 1/2 sum_R (r_ui - theta_u.beta_i)^2 + lambda_S/2 sum_S (s_ij - beta_i.alpha_j)^2
//     + lambda_theta/2 sum_u |theta_u|^2 + lambda_beta/2 sum_i |beta_i - f_e(x0_i)|^2
//     + lambda_alpha/2 sum_j |alpha_j|^2 + lambda_X/2 sum_i |xc_i - f_r(x0_i)|^2
//     + lambda_W/2 sum_l (|W_l|^2 + |b_l|^2)
//
// theta, beta and alpha are updated by exact block minimization (each row is
// a K x K ridge system); the network takes one gradient step per epoch.

#include "tcf/common.hpp"
#include "tcf/corpus.hpp"
#include "tcf/model.hpp"
#include "tcf/ppmi.hpp"
#include "tcf/predict.hpp"
#include "tcf/sdae.hpp"

#include <Eigen/Cholesky>

#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace tcf {

struct Hyperparams {
    Index latent_dim = 64;
    double lambda_s = 1.0;
    double lambda_theta = 0.01;
    double lambda_beta = 10.0;
    double lambda_alpha = 0.01;
    double lambda_x = 10.0;
    double lambda_w = 1e-4;
    /// Text network; empty layer_widths disables it (anchor f_e := 0, no reconstruction).
    SdaeConfig sdae;
    int max_epochs = 100;
    int patience = 5;
    std::uint64_t seed = 1;
    /// Standard deviation of the N(0, s^2) initialization of theta, alpha (and beta without text).
    double init_stddev = 0.01;
    /// Subtract the train mean rating before fitting, add it back when predicting.
    bool center = false;
    int threads = 1;
    /// Fixed-order loss reductions regardless of `threads`.
    bool deterministic = true;

    bool text_enabled() const noexcept { return sdae.enabled(); }

    /// "pmf-degenerate" when neither clicks nor text contribute.
    std::string label() const { return lambda_s == 0.0 && !text_enabled() ? "pmf-degenerate" : "tcf"; }

    void validate() const {
        if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
        for (double l : {lambda_s, lambda_theta, lambda_beta, lambda_alpha, lambda_x, lambda_w})
            if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("regularization weights must be finite and >= 0");
        if (!(lambda_theta > 0.0) || !(lambda_alpha > 0.0))
            throw ConfigError("lambda_theta and lambda_alpha must be positive");
        if (max_epochs < 1 || patience < 1) throw ConfigError("max_epochs and patience must be >= 1");
        if (!(init_stddev > 0.0)) throw ConfigError("init_stddev must be positive");
        if (threads < 1) throw ConfigError("threads must be >= 1");
        sdae.validate();
        if (text_enabled() && sdae.code_width() != latent_dim)
            throw ConfigError("sdae code width " + std::to_string(sdae.code_width()) +
                              " must equal latent_dim " + std::to_string(latent_dim));
    }
};

// ---------------------------------------------------------------------------
// Block updates

namespace detail {

inline Vector solve_spd(Eigen::MatrixXd& a, const Vector& b, const char* what) {
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(a);
    if (llt.info() != Eigen::Success) throw NumericError(std::string(what) + ": system is not positive definite");
    Vector x = llt.solve(b);
    if (!x.allFinite()) throw NumericError(std::string(what) + ": non-finite solution");
    return x;
}

/// Adds weight * sum_e f_e f_e^T to the lower triangle of `a` and
/// weight * sum_e value_e f_e to `b`, where f_e = factors.row(e.index).
inline void accumulate(Eigen::MatrixXd& a, Vector& b, std::span<const Entry> entries, const Matrix& factors,
                       double weight) {
    if (entries.empty()) return;
    const Index n = static_cast<Index>(entries.size());
    Matrix gathered(n, factors.cols());
    Vector values(n);
    for (Index r = 0; r < n; ++r) {
        const auto& e = entries[static_cast<std::size_t>(r)];
        gathered.row(r) = factors.row(e.index);
        values[r] = e.value;
    }
    a.selfadjointView<Eigen::Lower>().rankUpdate(gathered.transpose(), weight);
    b.noalias() += weight * (gathered.transpose() * values);
}

}  // namespace detail

/// theta_u = (sum_i beta_i beta_i^T + lambda_theta I)^-1 sum_i r_ui beta_i over the user's ratings.
inline Vector update_user(std::span<const Entry> ratings_of_u, const Matrix& beta, double lambda_theta) {
    const Index k = beta.cols();
    if (ratings_of_u.empty()) return Vector::Zero(k);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
    Vector b = Vector::Zero(k);
    detail::accumulate(a, b, ratings_of_u, beta, 1.0);
    a.diagonal().array() += lambda_theta;
    return detail::solve_spd(a, b, "update_user");
}

/// beta_i = (sum_u theta_u theta_u^T + lambda_S sum_j alpha_j alpha_j^T + lambda_beta I)^-1
///          (sum_u r_ui theta_u + lambda_S sum_j s_ij alpha_j + lambda_beta anchor).
/// An empty `anchor` stands for the zero vector.
inline Vector update_item_feature(std::span<const Entry> ratings_of_i, const Matrix& theta, const Matrix& alpha,
                                  std::span<const Entry> s_row, const Eigen::Ref<const RowVector>& anchor,
                                  double lambda_s, double lambda_beta) {
    const Index k = theta.cols();
    if (anchor.size() != 0 && anchor.size() != k) throw ShapeError("update_item_feature: anchor width mismatch");
    if (ratings_of_i.empty() && (lambda_s == 0.0 || s_row.empty()) && lambda_beta == 0.0)
        throw NumericError("update_item_feature: singular system (no ratings, no context, lambda_beta = 0)");
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
    Vector b = Vector::Zero(k);
    detail::accumulate(a, b, ratings_of_i, theta, 1.0);
    if (lambda_s != 0.0) detail::accumulate(a, b, s_row, alpha, lambda_s);
    a.diagonal().array() += lambda_beta;
    if (lambda_beta != 0.0 && anchor.size() != 0) b += lambda_beta * anchor.transpose();
    return detail::solve_spd(a, b, "update_item_feature");
}

/// alpha_j = (lambda_S sum_i beta_i beta_i^T + lambda_alpha I)^-1 (lambda_S sum_i s_ij beta_i).
inline Vector update_item_context(std::span<const Entry> s_col, const Matrix& beta, double lambda_s,
                                  double lambda_alpha) {
    const Index k = beta.cols();
    if (s_col.empty() || lambda_s == 0.0) return Vector::Zero(k);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
    Vector b = Vector::Zero(k);
    detail::accumulate(a, b, s_col, beta, lambda_s);
    a.diagonal().array() += lambda_alpha;
    return detail::solve_spd(a, b, "update_item_context");
}

// ---------------------------------------------------------------------------
// Loss

struct LossTerms {
    double rating = 0.0;
    double click = 0.0;
    double theta_reg = 0.0;
    double beta_reg = 0.0;
    double alpha_reg = 0.0;
    double recon = 0.0;
    double decay = 0.0;

    double total() const noexcept {
        CompensatedSum s;
        for (double t : {rating, click, theta_reg, beta_reg, alpha_reg, recon, decay}) s.add(t);
        return s.value();
    }

    /// Name of the first non-finite term, if any.
    std::optional<std::string> nonfinite_term() const {
        const std::pair<const char*, double> terms[] = {
            {"rating", rating}, {"click", click},   {"theta_reg", theta_reg}, {"beta_reg", beta_reg},
            {"alpha_reg", alpha_reg}, {"recon", recon}, {"decay", decay}};
        for (const auto& [name, v] : terms)
            if (!std::isfinite(v)) return std::string(name);
        return std::nullopt;
    }
};

namespace detail {

/// Sums f(row) over [0, n) in index order, or in per-thread chunks when
/// `deterministic` is off.
template <class Fn>
double reduce_rows(Index n, int threads, bool deterministic, Fn&& f) {
    if (deterministic || threads <= 1) {
        CompensatedSum s;
        for (Index r = 0; r < n; ++r) s.add(f(r));
        return s.value();
    }
    std::vector<double> partial(static_cast<std::size_t>(threads), 0.0);
    const Index chunk = (n + threads - 1) / threads;
    parallel_for(n, threads, [&](Index b, Index e) {
        CompensatedSum s;
        for (Index r = b; r < e; ++r) s.add(f(r));
        partial[static_cast<std::size_t>(b / std::max<Index>(chunk, 1))] = s.value();
    });
    CompensatedSum s;
    for (double p : partial) s.add(p);
    return s.value();
}

inline double sum_row_sq(const Matrix& m, int threads, bool deterministic) {
    return reduce_rows(m.rows(), threads, deterministic, [&](Index r) { return m.row(r).squaredNorm(); });
}

/// The joint loss given precomputed network outputs. `by_user` holds
/// centered ratings; `anchor` (M x K) and `recon` (M x V) are empty when the
/// text model is disabled.
inline LossTerms loss_terms(const ModelState& st, const CompressedRows& by_user, const PpmiMatrix& s,
                            const Matrix& anchor, const Matrix& recon, const Matrix& xc, const Hyperparams& h) {
    const int T = h.threads;
    const bool det = h.deterministic;
    LossTerms t;
    t.rating = 0.5 * reduce_rows(by_user.rows(), T, det, [&](Index u) {
        CompensatedSum acc;
        for (const auto& e : by_user.row(u)) {
            const double d = e.value - st.theta.row(u).dot(st.beta.row(e.index));
            acc.add(d * d);
        }
        return acc.value();
    });
    if (h.lambda_s != 0.0) {
        t.click = 0.5 * h.lambda_s * reduce_rows(s.n_items(), T, det, [&](Index i) {
            CompensatedSum acc;
            for (const auto& e : s.neighbors(i)) {
                const double d = e.value - st.beta.row(i).dot(st.alpha.row(e.index));
                acc.add(d * d);
            }
            return acc.value();
        });
    }
    t.theta_reg = 0.5 * h.lambda_theta * sum_row_sq(st.theta, T, det);
    if (anchor.rows() != 0) {
        t.beta_reg = 0.5 * h.lambda_beta *
                     reduce_rows(st.beta.rows(), T, det, [&](Index i) { return (st.beta.row(i) - anchor.row(i)).squaredNorm(); });
    } else {
        t.beta_reg = 0.5 * h.lambda_beta * sum_row_sq(st.beta, T, det);
    }
    t.alpha_reg = 0.5 * h.lambda_alpha * sum_row_sq(st.alpha, T, det);
    if (recon.rows() != 0 && h.lambda_x != 0.0) {
        t.recon = 0.5 * h.lambda_x *
                  reduce_rows(xc.rows(), T, det, [&](Index i) { return (xc.row(i) - recon.row(i)).squaredNorm(); });
    }
    if (!st.sdae.empty() && h.lambda_w != 0.0) {
        CompensatedSum acc;
        for (const auto& layer : st.sdae.layers) {
            acc.add(layer.weight.squaredNorm());
            acc.add(layer.bias.squaredNorm());
        }
        t.decay = 0.5 * h.lambda_w * acc.value();
    }
    return t;
}

}  // namespace detail

/// Evaluates the joint loss. `x0` is the corrupted document batch fixed for
/// the epoch and `xc` the clean one; both may have zero columns when the text
/// model is disabled. Ratings are centered by state.global_mean.
inline LossTerms total_loss(const ModelState& state, const RatingDataset& ratings, const PpmiMatrix& s,
                            const Matrix& x0, const Matrix& xc, const Hyperparams& hyper) {
    if (state.theta.rows() != ratings.n_users || state.beta.rows() != ratings.n_items ||
        state.alpha.rows() != ratings.n_items || s.n_items() != ratings.n_items)
        throw ShapeError("total_loss: model, ratings and PPMI dimensions disagree");
    RatingDataset centered = ratings;
    for (auto& r : centered.entries) r.value -= state.global_mean;
    const CompressedRows by_user = compress_ratings(centered, true);
    Matrix anchor, recon;
    if (!state.sdae.empty()) {
        const SdaeForward fwd = forward(x0, state.sdae);
        anchor = fwd.code();
        recon = fwd.reconstruction();
    }
    const LossTerms t = detail::loss_terms(state, by_user, s, anchor, recon, xc, hyper);
    if (auto bad = t.nonfinite_term()) throw NumericError("total_loss: non-finite " + *bad + " term");
    return t;
}

// ---------------------------------------------------------------------------
// Training

struct EpochRecord {
    int epoch = 0;
    double loss_start = 0.0;  // after resampling the corruption, before any update
    double loss_after_users = 0.0;
    double loss_after_items = 0.0;
    double loss_after_contexts = 0.0;
    double loss = 0.0;  // after the network step
    double validation_rmse = std::numeric_limits<double>::quiet_NaN();
    double sdae_learning_rate = 0.0;
};

struct TrainingTrace {
    std::string label;
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    double best_validation_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
    ModelState state;
    TrainingTrace trace;
};

struct TrainingData {
    const RatingDataset& train;
    const RatingDataset& validation;
    const PpmiMatrix& ppmi;
    /// Clean document rows; ignored when the text model is disabled.
    const DocTermMatrix& docs;
    /// Selects the validation predictor.
    SplitMode mode = SplitMode::in_matrix;
};

/// Predictions for every entry of `data`, in entry order.
inline std::vector<double> predict_entries(const ModelState& state, const RatingDataset& data, SplitMode mode,
                                           const DocTermMatrix& docs) {
    std::vector<double> out;
    out.reserve(data.size());
    if (mode == SplitMode::in_matrix) {
        for (const auto& r : data.entries)
            out.push_back(state.global_mean + predict_in_matrix(state.theta.row(r.user), state.beta.row(r.item)));
        return out;
    }
    std::unordered_map<Index, RowVector> codes;
    for (const auto& r : data.entries) {
        auto it = codes.find(r.item);
        if (it == codes.end()) it = codes.emplace(r.item, encode(RowVector(docs.rows.row(r.item)), state.sdae)).first;
        out.push_back(state.global_mean + state.theta.row(r.user).dot(it->second));
    }
    return out;
}

inline double rmse_on(const ModelState& state, const RatingDataset& data, SplitMode mode, const DocTermMatrix& docs) {
    const auto pred = predict_entries(state, data, mode, docs);
    std::vector<double> truth;
    truth.reserve(data.size());
    for (const auto& r : data.entries) truth.push_back(r.value);
    return rmse(pred, truth);
}

/// Optional hook called after every epoch (e.g. progress logging).
using EpochCallback = std::function<void(const EpochRecord&)>;

class Trainer {
public:
    Trainer(const TrainingData& data, const Hyperparams& hyper) : data_(data), hyper_(hyper) {
        hyper_.validate();
        const Index n = data.train.n_users, m = data.train.n_items;
        if (data.validation.n_users != n || data.validation.n_items != m)
            throw ShapeError("train: validation dimensions differ from train");
        if (data.ppmi.n_items() != m) throw ShapeError("train: PPMI has a different item count than the ratings");
        if (hyper_.text_enabled()) {
            if (data.docs.n_items != m || data.docs.rows.rows() != m)
                throw ShapeError("train: document matrix has a different item count than the ratings");
            if (data.docs.rows.cols() != hyper_.sdae.input_width())
                throw ShapeError("train: vocabulary size differs from the network input width");
        } else if (data.mode == SplitMode::out_of_matrix) {
            throw ConfigError("train: out-of-matrix validation requires the text model");
        }
        mean_ = hyper_.center ? data.train.mean() : 0.0;
        RatingDataset centered = data.train;
        for (auto& r : centered.entries) r.value -= mean_;
        by_user_ = compress_ratings(centered, true);
        by_item_ = compress_ratings(centered, false);
    }

    /// Initial state: pretrained network, beta = f_e(clean text) (or N(0, s^2)
    /// without text), theta and alpha ~ N(0, s^2). Draw order: theta, beta, alpha.
    ModelState initial_state() const {
        const Index n = data_.train.n_users, m = data_.train.n_items, k = hyper_.latent_dim;
        ModelState st;
        st.global_mean = mean_;
        if (hyper_.text_enabled()) st.sdae = pretrain(data_.docs.rows, hyper_.sdae, derive_seed(hyper_.seed, 11));
        Rng rng(hyper_.seed);
        st.theta = Matrix(n, k);
        fill_normal(st.theta, hyper_.init_stddev, rng);
        if (hyper_.text_enabled()) {
            st.beta = encode(data_.docs.rows, st.sdae);
        } else {
            st.beta = Matrix(m, k);
            fill_normal(st.beta, hyper_.init_stddev, rng);
        }
        st.alpha = Matrix(m, k);
        fill_normal(st.alpha, hyper_.init_stddev, rng);
        return st;
    }

    TrainResult run(const EpochCallback& on_epoch = {}) const {
        ModelState st = initial_state();
        TrainResult result;
        result.trace.label = hyper_.label();
        double lr = hyper_.sdae.learning_rate;
        double best = std::numeric_limits<double>::infinity();
        int stale = 0;
        const bool has_validation = !data_.validation.empty();
        for (int epoch = 1; epoch <= hyper_.max_epochs; ++epoch) {
            EpochRecord rec;
            rec.epoch = epoch;
            st.epoch = epoch;
            Matrix x0, anchor, recon;
            if (hyper_.text_enabled()) {
                x0 = corrupt_rows(data_.docs.rows, hyper_.sdae.noise_rate, derive_seed(hyper_.seed, 1000 + epoch));
                SdaeForward fwd = forward(x0, st.sdae);
                anchor = fwd.code();
                recon = fwd.reconstruction();
            }
            rec.loss_start = checked_loss(st, anchor, recon, epoch);
            update_users(st);
            rec.loss_after_users = checked_loss(st, anchor, recon, epoch);
            update_item_features(st, anchor);
            rec.loss_after_items = checked_loss(st, anchor, recon, epoch);
            update_item_contexts(st);
            rec.loss_after_contexts = checked_loss(st, anchor, recon, epoch);
            if (hyper_.text_enabled()) {
                lr = network_step(st, x0, lr);
                const SdaeForward fwd = forward(x0, st.sdae);
                anchor = fwd.code();
                recon = fwd.reconstruction();
            }
            rec.sdae_learning_rate = lr;
            rec.loss = checked_loss(st, anchor, recon, epoch);
            if (!st.all_finite()) throw TrainingError("non-finite parameters", epoch);

            if (has_validation) {
                rec.validation_rmse = rmse_on(st, data_.validation, data_.mode, data_.docs);
                if (!std::isfinite(rec.validation_rmse)) throw TrainingError("non-finite validation RMSE", epoch);
            }
            result.trace.epochs.push_back(rec);
            if (on_epoch) on_epoch(rec);

            if (!has_validation) {
                result.state = st;
                result.trace.best_epoch = epoch;
                continue;
            }
            if (rec.validation_rmse < best) {
                best = rec.validation_rmse;
                result.state = st;
                result.trace.best_epoch = epoch;
                result.trace.best_validation_rmse = best;
                stale = 0;
            } else if (++stale >= hyper_.patience) {
                break;
            }
        }
        return result;
    }

    // Individual blocks, exposed for tests and instrumentation.

    void update_users(ModelState& st) const {
        parallel_for(st.theta.rows(), hyper_.threads, [&](Index b, Index e) {
            for (Index u = b; u < e; ++u) st.theta.row(u) = update_user(by_user_.row(u), st.beta, hyper_.lambda_theta).transpose();
        });
    }

    void update_item_features(ModelState& st, const Matrix& anchor) const {
        parallel_for(st.beta.rows(), hyper_.threads, [&](Index b, Index e) {
            const RowVector none;
            for (Index i = b; i < e; ++i) {
                const auto s_row = data_.ppmi.neighbors(i);
                st.beta.row(i) = (anchor.rows() != 0
                                      ? update_item_feature(by_item_.row(i), st.theta, st.alpha, s_row, anchor.row(i),
                                                            hyper_.lambda_s, hyper_.lambda_beta)
                                      : update_item_feature(by_item_.row(i), st.theta, st.alpha, s_row, none,
                                                            hyper_.lambda_s, hyper_.lambda_beta))
                                     .transpose();
            }
        });
    }

    void update_item_contexts(ModelState& st) const {
        parallel_for(st.alpha.rows(), hyper_.threads, [&](Index b, Index e) {
            for (Index j = b; j < e; ++j)
                st.alpha.row(j) =
                    update_item_context(data_.ppmi.neighbors(j), st.beta, hyper_.lambda_s, hyper_.lambda_alpha).transpose();
        });
    }

    LossTerms loss(const ModelState& st, const Matrix& anchor, const Matrix& recon) const {
        static const Matrix none;
        return detail::loss_terms(st, by_user_, data_.ppmi, anchor, recon,
                                  hyper_.text_enabled() ? data_.docs.rows : none, hyper_);
    }

    const Hyperparams& hyper() const noexcept { return hyper_; }

private:
    double checked_loss(const ModelState& st, const Matrix& anchor, const Matrix& recon, int epoch) const {
        const LossTerms t = loss(st, anchor, recon);
        if (auto bad = t.nonfinite_term()) throw TrainingError("non-finite " + *bad + " loss term", epoch);
        return t.total();
    }

    /// One full-batch gradient step on the network terms; the step size is
    /// halved until the network objective does not increase. Returns the step
    /// size to use next epoch.
    double network_step(ModelState& st, const Matrix& x0, double lr) const {
        const SdaeLossWeights w{hyper_.lambda_beta, hyper_.lambda_x, hyper_.lambda_w};
        const Matrix& xc = data_.docs.rows;
        const double before = sdae_objective(st.sdae, x0, xc, st.beta, w).total();
        const SdaeGradients g = sdae_gradients(st.sdae, x0, xc, st.beta, w);
        for (int attempt = 0; attempt < 40; ++attempt) {
            SdaeParams trial = st.sdae;
            apply_step(trial, g, lr);
            const double after = trial.all_finite() ? sdae_objective(trial, x0, xc, st.beta, w).total()
                                                    : std::numeric_limits<double>::infinity();
            if (std::isfinite(after) && after <= before) {
                st.sdae = std::move(trial);
                return lr;
            }
            lr *= 0.5;
        }
        return lr;
    }

    TrainingData data_;
    Hyperparams hyper_;
    double mean_ = 0.0;
    CompressedRows by_user_;
    CompressedRows by_item_;
};

/// Trains with early stopping on validation RMSE; returns the best state and the per-epoch trace.
inline TrainResult train(const TrainingData& data, const Hyperparams& hyper, const EpochCallback& on_epoch = {}) {
    return Trainer(data, hyper).run(on_epoch);
}

}  // namespace tcf
