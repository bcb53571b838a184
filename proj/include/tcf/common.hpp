#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace tcf {

using Index = Eigen::Index;

/// Row-major dense matrix; every latent factor table stores one K-vector per row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

using Rng = std::mt19937_64;

/// (index, value) pair used for sparse rows of R and S.
struct Entry {
    Index index;
    double value;
};

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input text. Carries the 1-based line number.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Input is well-formed but violates a data invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Operand dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Bad configuration or argument values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Non-finite values or singular systems.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Training diverged; records the epoch where it happened.
class TrainingError : public Error {
public:
    TrainingError(const std::string& what, int epoch)
        : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

// ---------------------------------------------------------------------------
// Small numeric helpers

/// Neumaier-compensated accumulator. Summation order is the call order.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            carry_ += (sum_ - t) + x;
        else
            carry_ += (x - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + carry_; }

private:
    double sum_ = 0.0;
    double carry_ = 0.0;
};

/// Derives an independent stream seed from a base seed and a tag (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) noexcept {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

/// Fills `m` with i.i.d. N(0, stddev^2) draws in row-major order.
inline void fill_normal(Matrix& m, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    for (Index r = 0; r < m.rows(); ++r)
        for (Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
}

/// Runs fn(begin, end) over contiguous chunks of [0, n). Each index is
/// visited exactly once; chunk boundaries depend only on n and threads.
template <class Fn>
void parallel_for(Index n, int threads, Fn&& fn) {
    if (threads <= 1 || n < 2 * threads) {
        fn(Index{0}, n);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> failures(static_cast<std::size_t>(threads));
    pool.reserve(static_cast<std::size_t>(threads));
    const Index chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const Index begin = t * chunk;
        const Index end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, &failures, t, begin, end] {
            try {
                fn(begin, end);
            } catch (...) {
                failures[static_cast<std::size_t>(t)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
}

}  // namespace tcf
