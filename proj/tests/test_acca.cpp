// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace freqdis;
using freqdis::test::max_abs_diff;
using freqdis::test::random;

namespace {
    using Fn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

    // Rebinds every parameter of `w` to the matching input tensor, in params() order.
    acca::AccaWeights<double> rebind(const acca::AccaWeights<double>& w, const std::vector<Tensor<double>>& in) {
        auto c = w;
        std::vector<Tensor<double>*> slots{&c.stem.weight, &c.stem.bias};
        for (auto* b : {&c.wcca_scale, &c.wcca_offset})
            for (auto* conv : {&b->split, &b->factor_h, &b->factor_w, &b->factor_c}) {
                slots.push_back(&conv->weight);
                slots.push_back(&conv->bias);
            }
        for (auto* conv : {&c.head_scale, &c.head_offset, &c.enc1, &c.enc2, &c.enc3}) {
            slots.push_back(&conv->weight);
            slots.push_back(&conv->bias);
        }
        for (auto* lin : {&c.head_matrix, &c.head_gamma}) {
            slots.push_back(&lin->weight);
            slots.push_back(&lin->bias);
        }
        for (std::size_t i = 0; i < slots.size(); ++i)
            *slots[i] = in[i];
        return c;
    }

    std::vector<Tensor<double>> param_tensors(const acca::AccaWeights<double>& w) {
        std::vector<Tensor<double>> out;
        for (const auto& [name, t] : w.params())
            out.push_back(t);
        return out;
    }
} // namespace

TEST(AccaParams, DefaultCountInBudget) {
    nn::Rng rng(0);
    auto w = acca::AccaWeights<float>::init({}, rng);
    const auto n = acca::param_count(w);
    EXPECT_GE(n, 60000);
    EXPECT_LE(n, 120000);
    EXPECT_EQ(n, 87824);
}

TEST(AccaParams, SingleConvArithmetic) {
    nn::Rng rng(1);
    auto conv = nn::Conv<float>::make(8, 3, 3, rng);
    nn::ParamList<float> p;
    conv.collect(p, "c");
    EXPECT_EQ(nn::count_params(p), 3 * 3 * 3 * 8 + 8);
}

TEST(AccaParams, ParamNamesAreUnique) {
    nn::Rng rng(2);
    auto p = acca::AccaWeights<float>::init({}, rng).params();
    std::set<std::string> names;
    for (const auto& [name, t] : p)
        EXPECT_TRUE(names.insert(name).second) << name;
}

TEST(LocalBranch, ZeroHeadsGiveIdentityMaps) {
    nn::Rng rng(3);
    acca::AccaConfig cfg;
    auto w = acca::AccaWeights<float>::init(cfg, rng);
    auto img = random<float>({2, 3, 16, 24}, 4, 0.0, 1.0);
    auto [scale, offset] = acca::local_branch(img, w, cfg);
    EXPECT_EQ(scale.shape(), img.shape());
    EXPECT_EQ(offset.shape(), img.shape());
    for (float v : scale.data())
        EXPECT_EQ(v, 1.0f);
    for (float v : offset.data())
        EXPECT_EQ(v, 0.0f);
}

TEST(LocalBranch, RejectsBadInput) {
    nn::Rng rng(4);
    acca::AccaConfig cfg;
    auto w = acca::AccaWeights<float>::init(cfg, rng);
    EXPECT_THROW(acca::local_branch(random<float>({1, 4, 16, 16}, 1), w, cfg), DimensionError);
    EXPECT_THROW(acca::local_branch(random<float>({1, 3, 12, 16}, 1), w, cfg), DimensionError);
}

TEST(ApplyLocal, Arithmetic) {
    auto img = Tensor<double>::full({1, 3, 2, 2}, 0.2);
    auto y = acca::apply_local(img, Tensor<double>::full(img.shape(), 2.0), Tensor<double>::full(img.shape(), 0.1));
    for (double v : y.data())
        EXPECT_NEAR(v, 0.5, 1e-15);
    EXPECT_EQ(acca::apply_local(img, Tensor<double>::ones(img.shape()), Tensor<double>::zeros(img.shape())).vec(),
              img.vec());
    auto neg = acca::apply_local(img, Tensor<double>::ones(img.shape()), Tensor<double>::full(img.shape(), -1.0));
    for (double v : neg.data())
        EXPECT_EQ(v, 0.0);
}

TEST(ApplyLocal, MatchesElementwiseOracle) {
    auto img = random<double>({1, 3, 4, 4}, 5, 0.0, 1.0);
    auto a = random<double>(img.shape(), 6, 0.5, 1.5);
    auto b = random<double>(img.shape(), 7, -0.2, 0.2);
    auto y = acca::apply_local(img, a, b);
    for (std::size_t i = 0; i < y.vec().size(); ++i)
        EXPECT_EQ(y[i], std::max(a[i] * img[i] + b[i], 0.0));
}

TEST(ApplyLocal, MonotoneInPixelValue) {
    auto a = Tensor<double>::full({1, 3, 1, 1}, 0.8);
    auto b = Tensor<double>::full({1, 3, 1, 1}, 0.05);
    auto lo = acca::apply_local(Tensor<double>::full({1, 3, 1, 1}, 0.3), a, b);
    auto hi = acca::apply_local(Tensor<double>::full({1, 3, 1, 1}, 0.31), a, b);
    for (std::size_t i = 0; i < 3; ++i)
        EXPECT_LT(lo[i], hi[i]);
}

TEST(GlobalBranch, ZeroHeadsGiveIdentityMatrixAndUnitGamma) {
    nn::Rng rng(8);
    acca::AccaConfig cfg;
    auto w = acca::AccaWeights<float>::init(cfg, rng);
    auto [m, g] = acca::global_branch(random<float>({2, 3, 16, 16}, 9, 0.0, 1.0), w, cfg);
    EXPECT_EQ(m.shape(), (Shape{2, 3, 3}));
    EXPECT_EQ(g.shape(), (Shape{2, 1, 1, 1}));
    for (int n = 0; n < 2; ++n)
        for (int i = 0; i < 9; ++i)
            EXPECT_EQ(m[static_cast<std::size_t>(n * 9 + i)], i % 4 == 0 ? 1.0f : 0.0f);
    for (float v : g.data())
        EXPECT_EQ(v, 1.0f);
}

TEST(GlobalBranch, OutputsBoundedForExtremeHeads) {
    nn::Rng rng(10);
    acca::AccaConfig cfg;
    cfg.per_channel_gamma = true;
    auto w = acca::AccaWeights<float>::init(cfg, rng);
    for (auto& v : w.head_matrix.bias.mutable_data())
        v = 50.0f;
    w.head_gamma.bias.mutable_data()[0] = 10.0f;
    w.head_gamma.bias.mutable_data()[1] = -10.0f;
    auto [m, g] = acca::global_branch(random<float>({1, 3, 16, 16}, 11, 0.0, 1.0), w, cfg);
    for (int i = 0; i < 9; ++i) {
        const float eye = i % 4 == 0 ? 1.0f : 0.0f;
        EXPECT_GE(m[i], eye - 1.0f);
        EXPECT_LE(m[i], eye + 1.0f);
    }
    EXPECT_EQ(g.shape(), (Shape{1, 3, 1, 1}));
    EXPECT_EQ(g[0], 3.0f);
    EXPECT_EQ(g[1], 0.5f);
    EXPECT_EQ(g[2], 1.0f);
}

TEST(ApplyGlobal, Examples) {
    auto eye = Tensor<double>::from({1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    auto img = random<double>({1, 3, 4, 4}, 12, 0.1, 1.0);
    EXPECT_LE(max_abs_diff(acca::apply_global(img, eye, Tensor<double>::full({1, 1, 1, 1}, 1.0)), img), 1e-15);
    auto q = Tensor<double>::full({1, 3, 2, 2}, 0.25);
    const auto half = acca::apply_global(q, eye, Tensor<double>::full({1, 1, 1, 1}, 0.5));
    for (double v : half.data())
        EXPECT_NEAR(v, 0.5, 1e-15);
}

TEST(ApplyGlobal, MatchesOperatorComposition) {
    auto m = random<double>({2, 3, 3}, 13, 0.0, 1.0);
    auto g = random<double>({2, 1, 1, 1}, 14, 0.5, 2.0);
    auto img = random<double>({2, 3, 4, 4}, 15, 0.0, 1.0);
    auto want = ops::pow_gamma(ops::matmul3(m, img), g);
    EXPECT_EQ(acca::apply_global(img, m, g).vec(), want.vec());
}

TEST(AccaForward, IdentityInitIsIdentityOnNonNegativeImages) {
    nn::Rng rng(16);
    acca::AccaConfig cfg;
    auto w = acca::AccaWeights<float>::init(cfg, rng);
    auto img = random<float>({2, 3, 32, 16}, 17, 0.0, 1.0);
    img.mutable_data()[0] = 0.0f;
    auto out = acca::acca_forward(img, w, cfg);
    EXPECT_EQ(out.shape(), img.shape());
    EXPECT_LE(max_abs_diff(out, img), 1e-4);
}

TEST(AccaForward, ExposesIntermediateParams) {
    nn::Rng rng(18);
    acca::AccaConfig cfg;
    auto w = acca::AccaWeights<float>::init(cfg, rng);
    acca::AccaParams<float> p;
    (void)acca::acca_forward(random<float>({1, 3, 16, 16}, 19, 0.0, 1.0), w, cfg, &p);
    EXPECT_EQ(p.scale_map.shape(), (Shape{1, 3, 16, 16}));
    EXPECT_EQ(p.offset_map.shape(), (Shape{1, 3, 16, 16}));
    EXPECT_EQ(p.color_matrix.shape(), (Shape{1, 3, 3}));
    EXPECT_EQ(p.gamma.shape(), (Shape{1, 1, 1, 1}));
}

TEST(AccaForward, FiniteOnRandomWeightsAndUnitRange) {
    nn::Rng rng(20);
    acca::AccaConfig cfg;
    auto w = acca::AccaWeights<float>::init(cfg, rng);
    test::jitter(w.params(), 21, 0.05);
    for (float fill : {0.0f, 1.0f}) {
        Tensor<float> img({1, 3, 16, 16}, fill);
        EXPECT_NO_THROW((void)acca::acca_forward(img, w, cfg));
    }
}

TEST(AccaForward, ParamCountIndependentOfResolution) {
    nn::Rng rng(22);
    auto w = acca::AccaWeights<float>::init({}, rng);
    const auto n = acca::param_count(w);
    (void)acca::acca_forward(random<float>({1, 3, 64, 64}, 23, 0.0, 1.0), w, {});
    EXPECT_EQ(acca::param_count(w), n);
}

TEST(AccaGradients, LocalBranchBothHeads) {
    auto cfg = test::tiny_acca();
    nn::Rng rng(24);
    auto w = acca::AccaWeights<double>::init(cfg, rng);
    test::jitter(w.params(), 25, 0.1);
    auto img = random<double>({1, 3, 8, 8}, 26, 0.0, 1.0);
    Fn f = [&](const auto& in) {
        auto [a, b] = acca::local_branch(img, rebind(w, in), cfg);
        return ops::add(ops::sum(ops::mul(a, a)), ops::sum(ops::mul(b, a)));
    };
    EXPECT_LE(grad_check(f, param_tensors(w), {.max_probes_per_input = 8}), 1e-4);
}

TEST(AccaGradients, GlobalBranch) {
    auto cfg = test::tiny_acca();
    nn::Rng rng(27);
    auto w = acca::AccaWeights<double>::init(cfg, rng);
    test::jitter(w.params(), 28, 0.1);
    auto local = random<double>({2, 3, 8, 8}, 29, 0.0, 1.0);
    Fn f = [&](const auto& in) {
        auto [m, g] = acca::global_branch(in.back(), rebind(w, in), cfg);
        return ops::add(ops::sum(ops::mul(m, m)), ops::sum(ops::mul(g, g)));
    };
    auto inputs = param_tensors(w);
    inputs.push_back(local);
    EXPECT_LE(grad_check(f, inputs, {.max_probes_per_input = 8}), 1e-4);
}

TEST(AccaGradients, FullForward) {
    auto cfg = test::tiny_acca();
    cfg.per_channel_gamma = true;
    nn::Rng rng(30);
    auto w = acca::AccaWeights<double>::init(cfg, rng);
    test::jitter(w.params(), 31, 0.1);
    auto img = random<double>({1, 3, 8, 8}, 32, 0.05, 1.0);
    auto gt = random<double>({1, 3, 8, 8}, 33, 0.0, 1.0);
    Fn f = [&](const auto& in) { return losses::acca_loss(acca::acca_forward(in.back(), rebind(w, in), cfg), gt); };
    auto inputs = param_tensors(w);
    inputs.push_back(img);
    EXPECT_LE(grad_check(f, inputs, {.max_probes_per_input = 6}), 1e-4);
}
