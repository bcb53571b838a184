#include "tcf/sdae.hpp"

#include "oracles/sdae_fd.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace tcf;

namespace {

SdaeParams tiny_net() {
    SdaeParams p;
    p.layers.push_back({Matrix::Ones(2, 1), RowVector::Zero(1)});
    p.layers.push_back({Matrix::Ones(1, 2), RowVector::Zero(2)});
    return p;
}

SdaeParams zero_net(const std::vector<Index>& widths) {
    SdaeParams p;
    for (std::size_t l = 1; l < widths.size(); ++l)
        p.layers.push_back({Matrix::Zero(widths[l - 1], widths[l]), RowVector::Zero(widths[l])});
    return p;
}

Matrix uniform(Index r, Index c, Rng& rng) {
    std::uniform_real_distribution<double> d(0.0, 1.0);
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
        for (Index j = 0; j < c; ++j) m(i, j) = d(rng);
    return m;
}

SdaeParams random_net(const std::vector<Index>& hidden, Index v, std::uint64_t seed) {
    auto p = SdaeParams::initialize(SdaeConfig::symmetric(v, hidden), seed);
    Rng rng(seed + 1);
    std::normal_distribution<double> n(0.0, 0.3);
    for (auto& l : p.layers)
        for (Index c = 0; c < l.bias.size(); ++c) l.bias[c] = n(rng);
    return p;
}

}  // namespace

TEST(Corrupt, ZeroRateIsIdentity) {
    RowVector x = RowVector::LinSpaced(50, 0.1, 1.0);
    EXPECT_EQ(corrupt(x, 0.0, 3), x);
}

TEST(Corrupt, ZeroedCountWithinBinomialBounds) {
    const RowVector x = RowVector::Ones(10000);
    const double mean = 3000.0, sd = std::sqrt(10000 * 0.3 * 0.7);
    for (std::uint64_t seed : {1, 2, 3, 4}) {
        const RowVector y = corrupt(x, 0.3, seed);
        const double zeroed = static_cast<double>((y.array() == 0.0).count());
        EXPECT_NEAR(zeroed, mean, 3 * sd);
    }
}

TEST(Corrupt, ZeroInputStaysZeroAndSupportShrinks) {
    EXPECT_EQ(corrupt(RowVector::Zero(20), 0.6, 9), RowVector::Zero(20));
    const RowVector x = RowVector::LinSpaced(40, 0.0, 1.0);
    const RowVector y = corrupt(x, 0.5, 4);
    for (Index v = 0; v < x.size(); ++v) EXPECT_TRUE(y[v] == x[v] || y[v] == 0.0);
}

TEST(Corrupt, RejectsBadRate) { EXPECT_THROW(corrupt(RowVector::Ones(3), 1.0, 1), ConfigError); }

TEST(Encode, ZeroParamsGiveHalf) {
    const auto p = zero_net({6, 4, 3, 4, 6});
    const RowVector x = RowVector::LinSpaced(6, 0.0, 1.0);
    EXPECT_TRUE(encode(x, p).isApprox(RowVector::Constant(3, 0.5)));
    EXPECT_TRUE(reconstruct(x, p).isApprox(RowVector::Constant(6, 0.5)));
}

TEST(Encode, TinyNetHandValue) {
    RowVector x(2);
    x << 1, 1;
    const RowVector code = encode(x, tiny_net());
    ASSERT_EQ(code.size(), 1);
    EXPECT_NEAR(code[0], 0.8807970779778823, 1e-15);
    EXPECT_EQ(encode(x, tiny_net()), code);
}

TEST(Reconstruct, TinyNetHandValue) {
    RowVector x(2);
    x << 1, 1;
    const RowVector y = reconstruct(x, tiny_net());
    EXPECT_NEAR(y[0], 0.7069873680001046, 1e-15);
    EXPECT_NEAR(y[1], 0.7069873680001046, 1e-15);
}

TEST(Encode, IsPrefixOfReconstructStack) {
    const auto p = random_net({7, 3}, 9, 5);
    Rng rng(2);
    const Matrix x = uniform(4, 9, rng);
    const auto fwd = forward(x, p);
    EXPECT_EQ(encode(x, p), fwd.outputs[2]);
    EXPECT_EQ(fwd.code(), fwd.outputs[2]);
    EXPECT_EQ(reconstruct(x, p), fwd.reconstruction());
}

TEST(Gradients, PureDecayWhenDataTermsOff) {
    const auto p = random_net({4, 2}, 6, 8);
    Rng rng(1);
    const Matrix x = uniform(3, 6, rng);
    const auto g = sdae_gradients(p, x, x, Matrix::Zero(3, 2), {0.0, 0.0, 0.25});
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        EXPECT_TRUE(g.weight[l].isApprox(0.25 * p.layers[l].weight));
        EXPECT_TRUE(g.bias[l].isApprox(0.25 * p.layers[l].bias) || p.layers[l].bias.norm() == 0.0);
    }
}

TEST(Gradients, MatchFiniteDifferencesOnTinyNet) {
    const auto p = random_net({2}, 5, 11);
    Rng rng(3);
    const Matrix x0 = uniform(4, 5, rng), xc = uniform(4, 5, rng), beta = uniform(4, 2, rng);
    const SdaeLossWeights w{0.7, 1.3, 0.05};
    const auto g = sdae_gradients(p, x0, xc, beta, w);
    const auto fd = oracle::finite_differences(p, x0, xc, beta, w.anchor, w.recon, w.decay, 1e-5);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        for (Index r = 0; r < g.weight[l].rows(); ++r)
            for (Index c = 0; c < g.weight[l].cols(); ++c)
                EXPECT_LE(std::fabs(g.weight[l](r, c) - fd.weight[l](r, c)),
                          1e-4 * std::max(std::fabs(fd.weight[l](r, c)), 1e-3));
        EXPECT_LE(oracle::relative_error(g.bias[l], fd.bias[l]), 1e-4);
    }
}

TEST(Gradients, MatchFiniteDifferencesOnDeepNet) {
    const auto p = random_net({8, 4}, 20, 12);
    Rng rng(4);
    const Matrix x0 = uniform(6, 20, rng), xc = uniform(6, 20, rng), beta = uniform(6, 4, rng);
    const SdaeLossWeights w{2.0, 1.0, 0.01};
    const auto g = sdae_gradients(p, x0, xc, beta, w);
    const auto fd = oracle::finite_differences(p, x0, xc, beta, w.anchor, w.recon, w.decay, 1e-5);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        EXPECT_LE(oracle::relative_error(g.weight[l], fd.weight[l]), 1e-4) << "layer " << l;
        EXPECT_LE(oracle::relative_error(g.bias[l], fd.bias[l]), 1e-4) << "layer " << l;
    }
}

TEST(Gradients, ExactAnchorContributesNothing) {
    const auto p = random_net({3}, 5, 13);
    Rng rng(5);
    const Matrix x0 = uniform(3, 5, rng);
    const Matrix beta = encode(x0, p);
    const auto with_anchor = sdae_gradients(p, x0, x0, beta, {4.0, 1.0, 0.0});
    const auto without = sdae_gradients(p, x0, x0, beta, {0.0, 1.0, 0.0});
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        EXPECT_TRUE(with_anchor.weight[l].isApprox(without.weight[l], 1e-14));
        EXPECT_TRUE(with_anchor.bias[l].isApprox(without.bias[l], 1e-14));
    }
}

TEST(Gradients, ObjectiveAgreesWithLoopOracle) {
    const auto p = random_net({6, 3}, 10, 14);
    Rng rng(6);
    const Matrix x0 = uniform(5, 10, rng), xc = uniform(5, 10, rng), beta = uniform(5, 3, rng);
    const double lib = sdae_objective(p, x0, xc, beta, {1.5, 0.5, 0.1}).total();
    EXPECT_NEAR(lib, oracle::network_loss(p, x0, xc, beta, 1.5, 0.5, 0.1), 1e-12 * lib);
}

TEST(Pretrain, ZeroEpochsIsInitialization) {
    auto cfg = SdaeConfig::symmetric(8, {5, 2});
    cfg.pretrain_epochs = 0;
    Rng rng(1);
    const Matrix x = uniform(10, 8, rng);
    const auto p = pretrain(x, cfg, 21);
    const auto init = SdaeParams::initialize(cfg, 21);
    for (std::size_t l = 0; l < p.layers.size(); ++l) EXPECT_EQ(p.layers[l].weight, init.layers[l].weight);
}

TEST(Pretrain, ReducesReconstructionErrorAndIsDeterministic) {
    auto cfg = SdaeConfig::symmetric(12, {6, 3});
    cfg.pretrain_epochs = 30;
    Rng rng(2);
    const Matrix x = uniform(40, 12, rng);
    const auto init = SdaeParams::initialize(cfg, 5);
    const auto a = pretrain(x, cfg, 5), b = pretrain(x, cfg, 5);
    EXPECT_LE(reconstruction_error(x, a), reconstruction_error(x, init));
    for (std::size_t l = 0; l < a.layers.size(); ++l) EXPECT_EQ(a.layers[l].weight, b.layers[l].weight);
}

TEST(SdaeConfig, RejectsAsymmetricWidths) {
    SdaeConfig cfg;
    cfg.layer_widths = {10, 4, 2, 5, 10};
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.layer_widths = {10, 4, 10, 2};
    EXPECT_THROW(cfg.validate(), ConfigError);
}
