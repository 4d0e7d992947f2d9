// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/nn.hpp"
#include "freqdis/ops.hpp"
#include "freqdis/tensor.hpp"

#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>

// Window-based convolutional composition attention.
//
// A feature map F [N, C, H, W] is cut into non-overlapping s x s windows. A window-local
// grouped convolution produces the patch features p_n. Three stride-s convolutions collapse
// each patch to 1-D factors f^h (s), f^w (s) and f^c (C); their outer product is a rank-1
// s x s x C similarity map o_n, and the output patch is o_n * p_n.

namespace freqdis::wcca {

    struct WccaConfig {
        int channels = 16;
        int window = 8;
        bool sigmoid_gating = false;

        /// C / s when s divides C, otherwise gcd(C, s).
        int split_groups() const { return channels % window == 0 ? channels / window : std::gcd(channels, window); }

        void validate() const {
            if (channels <= 0 || window <= 0)
                throw ConfigError("wcca: channels and window must be positive");
        }
    };

    enum class SplitInit { identity, random };

    template <class T>
    struct WccaWeights {
        nn::Conv<T> split;    // [C, C/g, s, s], window-local
        nn::Conv<T> factor_h; // [s, C, s, s], stride s
        nn::Conv<T> factor_w; // [s, C, s, s], stride s
        nn::Conv<T> factor_c; // [C, C, s, s], stride s

        /// Split starts as the identity (delta at tap (s/2, s/2)); factor convs start near the
        /// all-ones composition (small weights, unit bias).
        static WccaWeights init(const WccaConfig& cfg, nn::Rng& rng, SplitInit split_init = SplitInit::identity) {
            cfg.validate();
            const std::int64_t c = cfg.channels, s = cfg.window, g = cfg.split_groups();
            WccaWeights w;
            if (split_init == SplitInit::identity) {
                w.split = nn::Conv<T>::zeros(c, c / g, s);
                auto d = w.split.weight.mutable_data();
                const std::int64_t cg = c / g;
                for (std::int64_t co = 0; co < c; ++co) {
                    const std::int64_t ci = co % cg;
                    d[static_cast<std::size_t>(((co * cg + ci) * s + s / 2) * s + s / 2)] = T(1);
                }
            } else {
                w.split = nn::Conv<T>::make(c, c / g, s, rng);
            }
            w.factor_h = nn::Conv<T>::make(s, c, s, rng, 0.1);
            w.factor_w = nn::Conv<T>::make(s, c, s, rng, 0.1);
            w.factor_c = nn::Conv<T>::make(c, c, s, rng, 0.1);
            for (auto* conv : {&w.factor_h, &w.factor_w, &w.factor_c})
                std::fill(conv->bias.mutable_data().begin(), conv->bias.mutable_data().end(), T(1));
            return w;
        }

        WccaWeights clone() const { return {split.clone(), factor_h.clone(), factor_w.clone(), factor_c.clone()}; }

        void collect(nn::ParamList<T>& out, const std::string& prefix) const {
            split.collect(out, prefix + ".split");
            factor_h.collect(out, prefix + ".factor_h");
            factor_w.collect(out, prefix + ".factor_w");
            factor_c.collect(out, prefix + ".factor_c");
        }

        void check(const WccaConfig& cfg) const {
            const std::int64_t c = cfg.channels, s = cfg.window;
            if (split.weight.shape() != Shape{c, c / cfg.split_groups(), s, s} ||
                factor_h.weight.shape() != Shape{s, c, s, s} || factor_w.weight.shape() != Shape{s, c, s, s} ||
                factor_c.weight.shape() != Shape{c, c, s, s})
                throw DimensionError("wcca: weights do not match config C=" + std::to_string(c) +
                                     " s=" + std::to_string(s));
        }
    };

    /// Patch features laid out in place: window (gy, gx) of `features` is p_n with n = gy * grid_w + gx.
    template <class T>
    struct PatchGrid {
        Tensor<T> features; // [N, C, H, W]
        int window = 0;
        std::int64_t grid_h = 0;
        std::int64_t grid_w = 0;

        std::int64_t count() const { return grid_h * grid_w; }

        /// Copy of patch n of batch item b as an s x s x C tensor (row, column, channel).
        Tensor<T> patch(std::int64_t b, std::int64_t n) const {
            const std::int64_t s = window, c = features.dim(1);
            const std::int64_t y0 = (n / grid_w) * s, x0 = (n % grid_w) * s;
            std::vector<T> v(static_cast<std::size_t>(s * s * c));
            for (std::int64_t i = 0; i < s; ++i)
                for (std::int64_t j = 0; j < s; ++j)
                    for (std::int64_t ch = 0; ch < c; ++ch)
                        v[static_cast<std::size_t>((i * s + j) * c + ch)] = features.at(b, ch, y0 + i, x0 + j);
            return Tensor<T>({s, s, c}, std::move(v));
        }
    };

    /// Batched 1-D factors: fh, fw [N, s, H/s, W/s]; fc [N, C, H/s, W/s].
    template <class T>
    struct Factors {
        Tensor<T> fh;
        Tensor<T> fw;
        Tensor<T> fc;
    };

    inline void check_divisible(const Shape& shape, int s) {
        if (shape.size() != 4)
            throw DimensionError("wcca: feature map must be [N, C, H, W], got " + to_string(shape));
        if (s <= 0 || shape[2] % s != 0 || shape[3] % s != 0)
            throw DimensionError("wcca: spatial dims " + std::to_string(shape[2]) + "x" + std::to_string(shape[3]) +
                                 " not divisible by window " + std::to_string(s));
    }

    template <class T>
    PatchGrid<T> split_patches(const Tensor<T>& f, const WccaWeights<T>& w, const WccaConfig& cfg) {
        check_divisible(f.shape(), cfg.window);
        if (f.dim(1) != cfg.channels)
            throw DimensionError("wcca: expected " + std::to_string(cfg.channels) + " channels, got " +
                                 to_string(f.shape()));
        PatchGrid<T> grid;
        grid.features = ops::window_conv2d(f, w.split.weight, w.split.bias, cfg.window, cfg.split_groups());
        grid.window = cfg.window;
        grid.grid_h = f.dim(2) / cfg.window;
        grid.grid_w = f.dim(3) / cfg.window;
        return grid;
    }

    /// One stride-s convolution per factor over the whole map; each output cell sees exactly one patch.
    template <class T>
    Factors<T> regress_factors(const PatchGrid<T>& grid, const WccaWeights<T>& w) {
        check_divisible(grid.features.shape(), grid.window);
        const ops::Conv2dOptions opt{.stride = grid.window};
        return {w.factor_h(grid.features, opt), w.factor_w(grid.features, opt), w.factor_c(grid.features, opt)};
    }

    /// Factors of a single patch given as [1, C, s, s]; returns 1-D tensors of length s, s, C.
    template <class T>
    std::tuple<Tensor<T>, Tensor<T>, Tensor<T>> regress_patch_factors(const Tensor<T>& patch, const WccaWeights<T>& w) {
        const std::int64_t s = w.factor_h.weight.dim(2);
        if (patch.rank() != 4 || patch.dim(0) != 1 || patch.dim(2) != s || patch.dim(3) != s ||
            patch.dim(1) != w.factor_c.weight.dim(1))
            throw DimensionError("regress_patch_factors: patch " + to_string(patch.shape()) + " does not match s=" +
                                 std::to_string(s));
        PatchGrid<T> g{patch, static_cast<int>(s), 1, 1};
        auto f = regress_factors(g, w);
        return {ops::reshape(f.fh, {s}), ops::reshape(f.fw, {s}), ops::reshape(f.fc, {patch.dim(1)})};
    }

    /// o[i, j, c] = fh[i] * fw[j] * fc[c]; no activation.
    template <class T>
    Tensor<T> compose_similarity(const Tensor<T>& fh, const Tensor<T>& fw, const Tensor<T>& fc) {
        if (fh.rank() == 1 && fw.rank() == 1 && fh.dim(0) != fw.dim(0))
            throw DimensionError("compose_similarity: f^h and f^w lengths differ");
        return ops::outer3(fh, fw, fc);
    }

    /// Batched composition for every window of the grid: [N, C, H, W].
    template <class T>
    Tensor<T> compose_similarity(const Factors<T>& f) {
        return ops::compose_windows(f.fh, f.fw, f.fc);
    }

    template <class T>
    Tensor<T> omni_aggregate(const Tensor<T>& p, const Tensor<T>& o) {
        if (p.shape() != o.shape())
            throw DimensionError("omni_aggregate: patch " + to_string(p.shape()) + " vs similarity " +
                                 to_string(o.shape()));
        return ops::mul(o, p);
    }

    template <class T>
    Tensor<T> wcca_forward(const Tensor<T>& f, const WccaWeights<T>& w, const WccaConfig& cfg) {
        auto grid = split_patches(f, w, cfg);
        auto o = compose_similarity(regress_factors(grid, w));
        if (cfg.sigmoid_gating)
            o = ops::sigmoid(o);
        // Patches are kept in their spatial position, so reassembly is the identity layout.
        return omni_aggregate(grid.features, o);
    }

    /// 4HWC + 2HWC^2/s.
    inline double flops_analytic(std::int64_t h, std::int64_t w, std::int64_t c, std::int64_t s) {
        if (h <= 0 || w <= 0 || c <= 0 || s <= 0)
            throw ConfigError("flops_analytic: arguments must be positive");
        const double hw = static_cast<double>(h) * static_cast<double>(w);
        const double cc = static_cast<double>(c);
        return 4.0 * hw * cc + 2.0 * hw * cc * cc / static_cast<double>(s);
    }

    /// Multiply-accumulates executed by one wcca_forward on a [1, C, h, w] input.
    template <class T>
    std::uint64_t flops_empirical(std::int64_t h, std::int64_t w, const WccaWeights<T>& weights, const WccaConfig& cfg) {
        NoGradGuard no_grad;
        Tensor<T> f({1, cfg.channels, h, w}, T(0.5));
        MacCounter counter;
        (void)wcca_forward(f, weights, cfg);
        return counter.count();
    }

} // namespace freqdis::wcca
