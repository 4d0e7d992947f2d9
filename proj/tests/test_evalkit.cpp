// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace freqdis;
using freqdis::test::random;

namespace {
    // Adds +d / -d in alternation so the MSE is exactly d^2.
    Tensor<float> offset_checker(const Tensor<float>& a, float d) {
        auto b = a.detach();
        auto v = b.mutable_data();
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] += (i % 2 ? d : -d);
        return b;
    }

    Tensor<float> noisy(const Tensor<float>& a, double sigma, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, 1.0);
        auto b = a.detach();
        for (auto& v : b.mutable_data())
            v = static_cast<float>(v + sigma * n(rng));
        return b;
    }
} // namespace

TEST(SynthPair, IdentityDegradation) {
    auto clean = eval::clean_image(32, 32, 7, 3);
    eval::SynthSpec spec;
    spec.gamma_dark = {1.0, 1.0};
    spec.gain = {1.0, 1.0};
    spec.noise_sigma = {0.0, 0.0};
    auto p = eval::synth_pair(clean, spec, 3);
    EXPECT_EQ(p.low.vec(), clean.vec());
    EXPECT_EQ(p.gt.vec(), clean.vec());
}

TEST(SynthPair, GainOnConstant) {
    Tensor<float> one({1, 3, 8, 8}, 1.0f);
    eval::SynthSpec spec;
    spec.gamma_dark = {1.0, 1.0};
    spec.gain = {0.25, 0.25};
    spec.noise_sigma = {0.0, 0.0};
    const auto pair = eval::synth_pair(one, spec, 0);
    for (float v : pair.low.data())
        EXPECT_EQ(v, 0.25f);
}

TEST(SynthPair, DeterministicAndInRange) {
    auto clean = eval::clean_image(32, 32, 7, 5);
    auto a = eval::synth_pair(clean, {}, 5), b = eval::synth_pair(clean, {}, 5);
    EXPECT_EQ(a.low.vec(), b.low.vec());
    for (float v : a.low.data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
    EXPECT_LT(test::mean_of(a.low), test::mean_of(clean));
    EXPECT_THROW(eval::synth_pair(Tensor<float>({1, 3, 4, 4}, 1.5f), {}, 0), ConfigError);
}

TEST(SynthDataset, DistinctPairsAndStableHash) {
    auto d1 = eval::synth_dataset(6, 32, {});
    auto d2 = eval::synth_dataset(6, 32, {});
    EXPECT_EQ(eval::dataset_hash(d1), eval::dataset_hash(d2));
    EXPECT_EQ(d1[2].name, "pair_0002");
    std::set<std::uint64_t> hashes;
    for (const auto& p : d1)
        hashes.insert(eval::fnv1a(p.gt.data().data(), p.gt.data().size() * sizeof(float)));
    EXPECT_EQ(hashes.size(), d1.size());
    eval::SynthSpec other;
    other.seed = 8;
    EXPECT_NE(eval::dataset_hash(eval::synth_dataset(6, 32, other)), eval::dataset_hash(d1));
}

TEST(Psnr, ClosedFormValues) {
    auto a = random<float>({1, 3, 16, 16}, 1, 0.3, 0.7);
    EXPECT_EQ(eval::psnr(a, a), eval::kPsnrCap);
    EXPECT_NEAR(eval::psnr(a, offset_checker(a, 0.1f)), 20.0, 0.01);
    EXPECT_NEAR(eval::psnr(a, offset_checker(a, 0.01f)), 40.0, 0.01);
    EXPECT_THROW(eval::psnr(a, random<float>({1, 3, 16, 8}, 2)), DimensionError);
}

TEST(Psnr, DecreasesWithNoise) {
    auto a = eval::clean_image(64, 64, 7, 1);
    const double p1 = eval::psnr(a, noisy(a, 0.01, 1));
    const double p2 = eval::psnr(a, noisy(a, 0.02, 1));
    const double p5 = eval::psnr(a, noisy(a, 0.05, 1));
    EXPECT_GT(p1, p2);
    EXPECT_GT(p2, p5);
}

TEST(Ssim, IdentitySymmetryAndBounds) {
    auto a = eval::clean_image(32, 32, 7, 2);
    auto b = noisy(a, 0.05, 3);
    EXPECT_DOUBLE_EQ(eval::ssim(a, a), 1.0);
    EXPECT_NEAR(eval::ssim(a, b), eval::ssim(b, a), 1e-9);
    const double s = eval::ssim(a, b);
    EXPECT_GE(s, -1.0);
    EXPECT_LT(s, 1.0);
    EXPECT_THROW(eval::ssim(random<float>({1, 3, 8, 8}, 1), random<float>({1, 3, 8, 8}, 2)), DimensionError);
}

TEST(Ssim, InvertedBinaryImageIsDissimilar) {
    Tensor<float> a({1, 3, 32, 32}, 0.0f);
    auto v = a.mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = ((i / 32) / 4 + (i % 32) / 4) % 2 ? 1.0f : 0.0f;
    auto inv = ops::add_scalar(ops::mul_scalar(a, -1.0f), 1.0f);
    EXPECT_LT(eval::ssim(a, inv), 0.1);
}

TEST(Ssim, MatchesIndependentReference) {
    // Direct per-pixel window sums against the separable implementation.
    auto a = random<float>({1, 3, 16, 16}, 4, 0.0, 1.0);
    auto b = random<float>({1, 3, 16, 16}, 5, 0.0, 1.0);
    auto luma = [](const Tensor<float>& t) {
        std::vector<double> y(256);
        for (int i = 0; i < 256; ++i)
            y[static_cast<std::size_t>(i)] = 0.299 * t[static_cast<std::size_t>(i)] +
                                             0.587 * t[static_cast<std::size_t>(256 + i)] +
                                             0.114 * t[static_cast<std::size_t>(512 + i)];
        return y;
    };
    const auto ya = luma(a), yb = luma(b);
    double g[11], gs = 0.0;
    for (int i = 0; i < 11; ++i) {
        g[i] = std::exp(-((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
        gs += g[i];
    }
    const double c1 = 1e-4, c2 = 9e-4;
    double total = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + 11 <= 16; ++y0)
        for (int x0 = 0; x0 + 11 <= 16; ++x0) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < 11; ++i)
                for (int j = 0; j < 11; ++j) {
                    const double w = g[i] * g[j] / (gs * gs);
                    const double va = ya[static_cast<std::size_t>((y0 + i) * 16 + x0 + j)];
                    const double vb = yb[static_cast<std::size_t>((y0 + i) * 16 + x0 + j)];
                    ma += w * va;
                    mb += w * vb;
                    saa += w * va * va;
                    sbb += w * vb * vb;
                    sab += w * va * vb;
                }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++count;
        }
    EXPECT_NEAR(eval::ssim(a, b), total / count, 1e-6);
}

TEST(Evaluate, ThreadCountDoesNotChangeResults) {
    auto data = eval::synth_dataset(5, 32, {});
    eval::Enhancer brighten = [](const Tensor<float>& x) { return ops::mul_scalar(x, 2.5f); };
    auto one = eval::evaluate(data, brighten, "", 1);
    auto three = eval::evaluate(data, brighten, "", 3);
    ASSERT_EQ(one.rows.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) {
        EXPECT_EQ(one.rows[i].psnr, three.rows[i].psnr);
        EXPECT_EQ(one.rows[i].ssim, three.rows[i].ssim);
    }
    EXPECT_EQ(one.fingerprint, eval::hex64(eval::dataset_hash(data)));
    auto identity = eval::evaluate(data, [](const Tensor<float>& x) { return x; });
    EXPECT_GT(one.psnr_mean, identity.psnr_mean);
}

TEST(Evaluate, ClampsBeforeScoring) {
    auto data = eval::synth_dataset(2, 32, {});
    auto rep = eval::evaluate(data, [](const Tensor<float>& x) { return ops::add_scalar(x, 5.0f); });
    for (const auto& r : rep.rows)
        EXPECT_GT(r.psnr, 0.0);
}

TEST(Median, OddAndEven) {
    EXPECT_EQ(eval::median({3, 1, 2}), 2.0);
    EXPECT_EQ(eval::median({4, 1, 2, 3}), 2.5);
    EXPECT_THROW(eval::median({}), UsageError);
}

TEST(AblationReport, RowCountAndMissingWeights) {
    auto test_set = eval::synth_dataset(3, 32, {});
    eval::ModelSource id = [](std::uint64_t) { return std::optional<eval::Enhancer>([](const Tensor<float>& x) { return x; }); };
    eval::ModelSource gain = [](std::uint64_t s) {
        const float g = 1.5f + static_cast<float>(s);
        return std::optional<eval::Enhancer>([g](const Tensor<float>& x) { return ops::mul_scalar(x, g); });
    };
    auto t = eval::ablation_report("demo", test_set, {{"identity", id}, {"gain", gain}}, {0, 1, 2});
    EXPECT_EQ(t.configs.size(), 2u);
    EXPECT_EQ(t.cells.size(), 6u);
    EXPECT_EQ(t.psnr_of("gain").size(), 3u);
    const auto csv = t.summary_csv();
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);

    eval::ModelSource missing = [](std::uint64_t) { return std::optional<eval::Enhancer>(); };
    EXPECT_THROW(eval::ablation_report("demo", test_set, {{"missing", missing}}, {0}), ConfigError);
}

TEST(Experiment, SuitesHaveExpectedConfigurations) {
    auto data = eval::synth_dataset(4, 32, {});
    eval::Experiment ex(data, data, {});
    EXPECT_EQ(ex.suite("li").size(), 4u);
    EXPECT_EQ(ex.suite("freeze").size(), 2u);
    EXPECT_EQ(ex.suite("k").size(), 4u);
    EXPECT_EQ(ex.suite("alpha").size(), 4u);
    EXPECT_THROW(ex.suite("nope"), UsageError);
}

TEST(Experiment, TinyLiSuiteRunsAndSharesModels) {
    auto data = eval::synth_dataset(6, 32, {});
    training::TrainConfig cfg;
    cfg.acca_epochs = 1;
    cfg.ldrm_iters = 3;
    cfg.ldrm_batch = 2;
    cfg.crop = 16;
    cfg.width = 8;
    cfg.blocks = 1;
    eval::Experiment ex(data, data, cfg);
    std::vector<std::string> trained;
    ex.on_trained = [&](const std::string& what, std::uint64_t, double) { trained.push_back(what); };
    auto li = ex.run("li", {0});
    auto fr = ex.run("freeze", {0});
    EXPECT_EQ(li.cells.size(), 4u);
    EXPECT_EQ(fr.median_psnr("frozen"), li.median_psnr("full_with_li"));
    // acca, unified, two restorers, one joint model; the frozen row reuses the alpha=1 restorer.
    EXPECT_EQ(trained.size(), 5u);
}
