// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace freqdis;
using freqdis::test::random;

namespace {
    pyramid::PyramidStack<double> single(const Tensor<double>& band) {
        pyramid::PyramidStack<double> s;
        s.bands.push_back(band);
        return s;
    }

    pyramid::PyramidStack<double> offset_low_band(const pyramid::PyramidStack<double>& m, double delta) {
        auto out = m;
        out.bands.back() = ops::add_scalar(m.coarsest(), delta);
        return out;
    }
} // namespace

TEST(ReconLoss, ZeroOnEqualStacks) {
    auto m = pyramid::decompose(random<double>({1, 3, 32, 32}, 1), 4);
    EXPECT_EQ(losses::recon_loss(m, m).item(), 0.0);
}

TEST(ReconLoss, HandL1WithMeanReduction) {
    auto d = Tensor<double>::from({1, 1, 2, 2}, {0, 1, 2, 3});
    auto gt = Tensor<double>::from({1, 1, 2, 2}, {1, 1, 1, 1});
    EXPECT_DOUBLE_EQ(losses::recon_loss(single(d), single(gt)).item(), 1.0);
}

TEST(ReconLoss, SymmetricAndPerBandSum) {
    auto a = pyramid::decompose(random<double>({1, 3, 32, 32}, 2), 4);
    auto b = pyramid::decompose(random<double>({1, 3, 32, 32}, 3), 4);
    std::vector<double> per_band;
    const double ab = losses::recon_loss(a, b, &per_band).item();
    EXPECT_EQ(ab, losses::recon_loss(b, a).item());
    ASSERT_EQ(per_band.size(), 4u);
    EXPECT_NEAR(per_band[0] + per_band[1] + per_band[2] + per_band[3], ab, 1e-12);
}

TEST(ReconLoss, ShapeMismatchRejected) {
    auto a = pyramid::decompose(random<double>({1, 3, 32, 32}, 4), 4);
    auto b = pyramid::decompose(random<double>({1, 3, 32, 32}, 4), 3);
    EXPECT_THROW(losses::recon_loss(a, b), DimensionError);
}

TEST(ConsistencyLoss, ZeroAndConstantOffset) {
    auto m = pyramid::decompose(random<double>({1, 3, 32, 32}, 5), 4);
    EXPECT_EQ(losses::consistency_loss(m, m).item(), 0.0);
    EXPECT_NEAR(losses::consistency_loss(offset_low_band(m, 0.2), m).item(), 0.2, 1e-12);
}

TEST(ConsistencyLoss, IgnoresHighBands) {
    auto m = pyramid::decompose(random<double>({1, 3, 32, 32}, 6), 4);
    auto ml = offset_low_band(m, 0.1);
    const double before = losses::consistency_loss(m, ml).item();
    auto moved = m;
    for (int k = 1; k < 4; ++k)
        moved.bands[static_cast<std::size_t>(k - 1)] = ops::add_scalar(m.band(k), 5.0);
    EXPECT_EQ(losses::consistency_loss(moved, ml).item(), before);
}

TEST(ConsistencyLoss, SubgradientIsSignOverCount) {
    auto m = pyramid::decompose(random<double>({1, 3, 32, 32}, 7), 4);
    auto ml = pyramid::decompose(random<double>({1, 3, 32, 32}, 8), 4);
    auto low = m.coarsest().detach();
    low.set_requires_grad(true);
    auto md = m;
    md.bands.back() = low;
    backward(losses::consistency_loss(md, ml));
    const double n = static_cast<double>(low.numel());
    const auto g = low.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double diff = low[i] - ml.coarsest()[i];
        EXPECT_DOUBLE_EQ(g[i], (diff > 0 ? 1.0 : -1.0) / n);
    }
}

TEST(TotalLoss, ExamplesAndAlphaValidation) {
    EXPECT_DOUBLE_EQ(losses::total_loss(0.3, 0.2, 0.0), 0.3);
    EXPECT_DOUBLE_EQ(losses::total_loss(0.3, 0.2, 1.0), 0.5);
    EXPECT_DOUBLE_EQ(losses::kDefaultAlpha, 1.0);
    EXPECT_THROW(losses::total_loss(0.3, 0.2, -0.1), ConfigError);
}

TEST(TotalLoss, AffineInAlpha) {
    auto md = pyramid::decompose(random<double>({1, 3, 32, 32}, 9), 4);
    auto gt = pyramid::decompose(random<double>({1, 3, 32, 32}, 10), 4);
    auto ml = pyramid::decompose(random<double>({1, 3, 32, 32}, 11), 4);
    losses::LossReport r0;
    (void)losses::disentangled_loss(md, gt, ml, 0.0, &r0);
    for (double a : {0.0, 0.5, 1.0, 2.0}) {
        losses::LossReport r;
        const double total = losses::disentangled_loss(md, gt, ml, a, &r).item();
        EXPECT_NEAR(total, r0.l_r + a * r.l_i, 1e-7);
        EXPECT_NEAR(r.l_total, r.l_r + a * r.l_i, 1e-7);
        EXPECT_EQ(r.per_band.size(), 4u);
        EXPECT_GE(r.l_r, 0.0);
        EXPECT_GE(r.l_i, 0.0);
    }
}

TEST(AccaLoss, ExamplesAndGradient) {
    auto a = random<double>({1, 3, 4, 4}, 12);
    EXPECT_EQ(losses::acca_loss(a, a).item(), 0.0);
    EXPECT_NEAR(losses::acca_loss(Tensor<double>::full({1, 3, 2, 2}, 0.2), Tensor<double>::full({1, 3, 2, 2}, 0.5)).item(),
                0.3, 1e-15);
    std::function<Tensor<double>(const std::vector<Tensor<double>>&)> f = [](const auto& in) {
        return losses::acca_loss(in[0], in[1]);
    };
    EXPECT_LE(grad_check(f, {a, random<double>({1, 3, 4, 4}, 13)}), 1e-6);
    EXPECT_THROW(losses::acca_loss(a, random<double>({1, 3, 4, 2}, 14)), DimensionError);
}
