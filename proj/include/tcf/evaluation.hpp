#pragma once

// Test-set evaluation and the experiment drivers built on it: one
// split/train/evaluate run, the lambda_S sweep and the sparsity curve.

#include "tcf/common.hpp"
#include "tcf/corpus.hpp"
#include "tcf/factor.hpp"
#include "tcf/model.hpp"
#include "tcf/ppmi.hpp"
#include "tcf/predict.hpp"
#include "tcf/sdae.hpp"

#include <charconv>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace tcf {

struct EvalOptions {
    /// Clamp predictions into [lo, hi]; off by default.
    std::optional<std::pair<double, double>> clamp;
    int threads = 1;
};

struct EvalReport {
    SplitMode mode = SplitMode::in_matrix;
    double rmse = 0.0;
    std::size_t n_predictions = 0;
    /// Distinct test users with no training rating (predicted from theta_u = 0).
    std::size_t n_cold_users = 0;
    /// Distinct out-of-matrix test items without a document (predicted from a zero row).
    std::size_t n_missing_text = 0;
    std::string label;
    double lambda_s = 0.0;
    int epoch = 0;
    std::string fingerprint;
    /// In test-set order.
    std::vector<double> predictions;
};

class InMatrixPredictor {
public:
    InMatrixPredictor(const Matrix& theta, const Matrix& beta, double global_mean)
        : theta_(theta), beta_(beta), mean_(global_mean) {}

    double predict(Index user, Index item) const {
        if (item < 0 || item >= beta_.rows())
            throw ShapeError("in-matrix prediction: item " + std::to_string(item) + " has no trained feature vector");
        return mean_ + predict_in_matrix(theta_.row(user), beta_.row(item));
    }

private:
    const Matrix& theta_;
    const Matrix& beta_;
    double mean_;
};

/// Sees only the user factors and the text network; item factors are not
/// reachable from here.
class OutOfMatrixPredictor {
public:
    OutOfMatrixPredictor(const Matrix& theta, const SdaeParams& sdae, double global_mean)
        : theta_(theta), sdae_(sdae), mean_(global_mean) {
        if (sdae_.empty()) throw ConfigError("out-of-matrix prediction requires the text model");
    }

    RowVector code(const RowVector& x_item) const {
        if (x_item.size() != sdae_.input_width())
            throw ShapeError("out-of-matrix prediction: text row has " + std::to_string(x_item.size()) +
                             " terms, the trained vocabulary has " + std::to_string(sdae_.input_width()));
        return encode(x_item, sdae_);
    }

    double predict(Index user, const RowVector& x_item) const {
        return mean_ + predict_out_of_matrix(theta_.row(user), x_item, sdae_);
    }
    double predict_from_code(Index user, const RowVector& code) const { return mean_ + theta_.row(user).dot(code); }

private:
    const Matrix& theta_;
    const SdaeParams& sdae_;
    double mean_;
};

/// Applies the predictor of `split.mode` to every test pair.
inline EvalReport evaluate(const ModelState& model, const EvalSplit& split, const DocTermMatrix& docs,
                           const EvalOptions& opt = {}) {
    const RatingDataset& test = split.test;
    if (test.empty()) throw ValidationError("evaluate: empty test set");
    if (model.n_users() != test.n_users)
        throw ShapeError("evaluate: model has " + std::to_string(model.n_users()) + " users, data has " +
                         std::to_string(test.n_users));
    if (opt.clamp && !(opt.clamp->first <= opt.clamp->second)) throw ConfigError("clamp: lo must not exceed hi");

    EvalReport report;
    report.mode = split.mode;
    report.epoch = model.epoch;
    report.n_predictions = test.size();
    report.predictions.assign(test.size(), 0.0);

    std::vector<char> trained_user(static_cast<std::size_t>(test.n_users), 0);
    for (const auto& r : split.train.entries) trained_user[static_cast<std::size_t>(r.user)] = 1;
    std::vector<char> counted(static_cast<std::size_t>(test.n_users), 0);
    for (const auto& r : test.entries) {
        const auto u = static_cast<std::size_t>(r.user);
        if (!trained_user[u] && !counted[u]++) ++report.n_cold_users;
    }

    if (split.mode == SplitMode::in_matrix) {
        if (model.n_items() != test.n_items)
            throw ShapeError("evaluate: model has " + std::to_string(model.n_items()) + " items, data has " +
                             std::to_string(test.n_items));
        const InMatrixPredictor p(model.theta, model.beta, model.global_mean);
        parallel_for(static_cast<Index>(test.size()), opt.threads, [&](Index b, Index e) {
            for (Index k = b; k < e; ++k) {
                const auto& r = test.entries[static_cast<std::size_t>(k)];
                report.predictions[static_cast<std::size_t>(k)] = p.predict(r.user, r.item);
            }
        });
    } else {
        if (docs.rows.rows() != test.n_items) throw ShapeError("evaluate: document matrix does not cover every item");
        const OutOfMatrixPredictor p(model.theta, model.sdae, model.global_mean);
        std::map<Index, Index> slot;
        for (const auto& r : test.entries) slot.emplace(r.item, 0);
        std::vector<Index> items;
        for (auto& [item, s] : slot) {
            s = static_cast<Index>(items.size());
            items.push_back(item);
            if (!docs.has_text.empty() && !docs.has_text[static_cast<std::size_t>(item)]) ++report.n_missing_text;
        }
        std::vector<RowVector> codes(items.size());
        parallel_for(static_cast<Index>(items.size()), opt.threads, [&](Index b, Index e) {
            for (Index k = b; k < e; ++k) codes[static_cast<std::size_t>(k)] = p.code(docs.rows.row(items[static_cast<std::size_t>(k)]));
        });
        parallel_for(static_cast<Index>(test.size()), opt.threads, [&](Index b, Index e) {
            for (Index k = b; k < e; ++k) {
                const auto& r = test.entries[static_cast<std::size_t>(k)];
                report.predictions[static_cast<std::size_t>(k)] =
                    p.predict_from_code(r.user, codes[static_cast<std::size_t>(slot.at(r.item))]);
            }
        });
    }

    if (opt.clamp)
        for (double& v : report.predictions) v = std::clamp(v, opt.clamp->first, opt.clamp->second);
    std::vector<double> truth;
    truth.reserve(test.size());
    for (const auto& r : test.entries) truth.push_back(r.value);
    report.rmse = rmse(report.predictions, truth);
    return report;
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentSpec {
    SplitMode mode = SplitMode::in_matrix;
    double test_fraction = 0.2;
    /// Share of the whole dataset held out for early stopping.
    double validation_fraction = 0.08;
    std::uint64_t split_seed = 1;
    /// Seed of the nested subsamples in the sparsity curve.
    std::uint64_t subsample_seed = 1;
    /// Without a click file, clicks are the binarized training ratings; this
    /// switches to binarizing every rating instead.
    bool clicks_from_all = false;
    EvalOptions eval;
};

struct ExperimentData {
    const RatingDataset& ratings;
    /// Separate click log over the same index space, or null.
    const ClickDataset* clicks = nullptr;
    const DocTermMatrix& docs;
};

struct ExperimentResult {
    EvalSplit split;
    PpmiMatrix ppmi;
    TrainResult fit;
    EvalReport report;
};

inline ClickDataset experiment_clicks(const ExperimentData& data, const RatingDataset& train, bool clicks_from_all) {
    if (data.clicks) return *data.clicks;
    return binarize_ratings(clicks_from_all ? data.ratings : train);
}

/// The PPMI matrix is only needed when some lambda_S is nonzero.
inline PpmiMatrix experiment_ppmi(const ClickDataset& clicks, Index n_items, bool needed) {
    if (!needed) return PpmiMatrix::empty(n_items);
    if (clicks.n_items != n_items) throw ShapeError("click log and ratings disagree on the item count");
    return build_ppmi(clicks);
}

inline ExperimentResult run_split(const ExperimentData& data, EvalSplit split, PpmiMatrix ppmi, const ExperimentSpec& spec,
                                  const Hyperparams& hyper) {
    ExperimentResult out{std::move(split), std::move(ppmi), {}, {}};
    const TrainingData td{out.split.train, out.split.validation, out.ppmi, data.docs, out.split.mode};
    out.fit = train(td, hyper);
    out.report = evaluate(out.fit.state, out.split, data.docs, spec.eval);
    out.report.label = out.fit.trace.label;
    out.report.lambda_s = hyper.lambda_s;
    return out;
}

/// split -> clicks -> PPMI -> train -> evaluate.
inline ExperimentResult run_experiment(const ExperimentData& data, const ExperimentSpec& spec, const Hyperparams& hyper) {
    EvalSplit split = make_split(data.ratings, spec.mode, spec.test_fraction, spec.validation_fraction, spec.split_seed);
    PpmiMatrix s = experiment_ppmi(experiment_clicks(data, split.train, spec.clicks_from_all), data.ratings.n_items,
                                   hyper.lambda_s != 0.0);
    return run_split(data, std::move(split), std::move(s), spec, hyper);
}

struct SweepPoint {
    double lambda_s = 0.0;
    double validation_rmse = 0.0;
    double test_rmse = 0.0;
    int best_epoch = 0;
    std::string label;
};

namespace detail {

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class Fn>
auto tagged(const std::string& tag, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const TrainingError& e) {
        throw TrainingError(tag + ": " + e.what(), e.epoch());
    } catch (const ConfigError& e) {
        throw ConfigError(tag + ": " + e.what());
    } catch (const Error& e) {
        throw Error(tag + ": " + e.what());
    }
}

}  // namespace detail

/// One model per lambda_S on a shared split, click matrix and seed.
inline std::vector<SweepPoint> sweep_lambda_s(const ExperimentData& data, const ExperimentSpec& spec,
                                              const Hyperparams& hyper, const std::vector<double>& grid) {
    if (grid.empty()) throw ConfigError("lambda_s grid is empty");
    EvalSplit split = make_split(data.ratings, spec.mode, spec.test_fraction, spec.validation_fraction, spec.split_seed);
    bool needed = false;
    for (double l : grid) needed = needed || l != 0.0;
    const PpmiMatrix s = experiment_ppmi(experiment_clicks(data, split.train, spec.clicks_from_all),
                                         data.ratings.n_items, needed);
    std::vector<SweepPoint> curve;
    for (double l : grid) {
        Hyperparams h = hyper;
        h.lambda_s = l;
        const auto r = detail::tagged("lambda_s=" + detail::format_double(l), [&] { return run_split(data, split, s, spec, h); });
        curve.push_back({l, r.fit.trace.best_validation_rmse, r.report.rmse, r.fit.trace.best_epoch, r.fit.trace.label});
    }
    return curve;
}

struct SparsityPoint {
    std::string dataset;  // MT-10, MT-20, ...
    double fraction = 0.0;
    std::size_t n_ratings = 0;
    double validation_rmse = 0.0;
    double test_rmse = 0.0;
    int best_epoch = 0;
    std::string label;
};

inline std::string sparsity_label(double fraction) {
    return "MT-" + std::to_string(std::llround(100.0 * fraction));
}

/// Nested subsets of the ratings at each fraction, each split and fitted on its own.
inline std::vector<SparsityPoint> sparsity_curve(const ExperimentData& data, const ExperimentSpec& spec,
                                                 const Hyperparams& hyper, const std::vector<double>& fractions) {
    if (fractions.empty()) throw ConfigError("sparsity grid is empty");
    std::vector<SparsityPoint> curve;
    for (double f : fractions) {
        const RatingDataset subset = subsample_ratings(data.ratings, f, spec.subsample_seed);
        const ExperimentData sub{subset, data.clicks, data.docs};
        const auto r = detail::tagged(sparsity_label(f), [&] { return run_experiment(sub, spec, hyper); });
        curve.push_back({sparsity_label(f), f, subset.size(), r.fit.trace.best_validation_rmse, r.report.rmse,
                         r.fit.trace.best_epoch, r.fit.trace.label});
    }
    return curve;
}

// ---------------------------------------------------------------------------
// Report files

inline void write_report(std::ostream& out, const EvalReport& r) {
    out << "mode=" << to_string(r.mode) << '\n'
        << "rmse=" << detail::format_double(r.rmse) << '\n'
        << "n_predictions=" << r.n_predictions << '\n'
        << "n_cold_users=" << r.n_cold_users << '\n'
        << "n_missing_text=" << r.n_missing_text << '\n'
        << "run=" << r.label << '\n'
        << "lambda_s=" << detail::format_double(r.lambda_s) << '\n'
        << "epoch=" << r.epoch << '\n'
        << "fingerprint=" << r.fingerprint << '\n';
}

inline void write_report_csv(std::ostream& out, const EvalReport& r) {
    out << "mode,lambda_s,epoch,rmse,run,fingerprint\n"
        << to_string(r.mode) << ',' << detail::format_double(r.lambda_s) << ',' << r.epoch << ','
        << detail::format_double(r.rmse) << ',' << r.label << ',' << r.fingerprint << '\n';
}

/// One row per epoch; `rmse` is the validation RMSE.
inline void write_trace_csv(std::ostream& out, const TrainingTrace& trace, SplitMode mode, double lambda_s,
                            const std::string& fingerprint) {
    out << "run,fingerprint,mode,lambda_s,epoch,rmse,loss,loss_start,loss_after_users,loss_after_items,"
           "loss_after_contexts,sdae_learning_rate\n";
    using detail::format_double;
    for (const auto& e : trace.epochs)
        out << trace.label << ',' << fingerprint << ',' << to_string(mode) << ',' << format_double(lambda_s) << ','
            << e.epoch << ',' << format_double(e.validation_rmse) << ',' << format_double(e.loss) << ','
            << format_double(e.loss_start) << ',' << format_double(e.loss_after_users) << ','
            << format_double(e.loss_after_items) << ',' << format_double(e.loss_after_contexts) << ','
            << format_double(e.sdae_learning_rate) << '\n';
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& curve, SplitMode mode,
                            const std::string& fingerprint) {
    out << "mode,lambda_s,epoch,rmse,validation_rmse,run,fingerprint\n";
    for (const auto& p : curve)
        out << to_string(mode) << ',' << detail::format_double(p.lambda_s) << ',' << p.best_epoch << ','
            << detail::format_double(p.test_rmse) << ',' << detail::format_double(p.validation_rmse) << ','
            << p.label << ',' << fingerprint << '\n';
}

inline void write_sparsity_csv(std::ostream& out, const std::vector<SparsityPoint>& curve, SplitMode mode,
                               double lambda_s, const std::string& fingerprint) {
    out << "dataset,fraction,n_ratings,mode,lambda_s,epoch,rmse,validation_rmse,run,fingerprint\n";
    for (const auto& p : curve)
        out << p.dataset << ',' << detail::format_double(p.fraction) << ',' << p.n_ratings << ',' << to_string(mode)
            << ',' << detail::format_double(lambda_s) << ',' << p.best_epoch << ','
            << detail::format_double(p.test_rmse) << ',' << detail::format_double(p.validation_rmse) << ','
            << p.label << ',' << fingerprint << '\n';
}

}  // namespace tcf
