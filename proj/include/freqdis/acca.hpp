// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/nn.hpp"
#include "freqdis/ops.hpp"
#include "freqdis/wcca.hpp"

#include <cstdint>
#include <string>
#include <utility>

// Coarse low-frequency adjuster. A local branch predicts per-pixel affine maps (A_l, B_l)
// through two W-CCA blocks; a global branch predicts a 3x3 colour matrix A_g and a gamma B_g:
//
//   I_local = max(A_l * I + B_l, 0)
//   I_l     = max(A_g x I_local, eps) ^ B_g

namespace freqdis::acca {

    struct AccaConfig {
        int channels = 16;
        int window = 8;
        int global_size = 32;  // side of the downsampled global-branch input
        int global_width = 16; // encoder channels
        bool per_channel_gamma = false;
        bool sigmoid_gating = false;

        static constexpr double kGammaMin = 0.5;
        static constexpr double kGammaMax = 3.0;

        wcca::WccaConfig wcca() const { return {channels, window, sigmoid_gating}; }

        void validate() const {
            wcca().validate();
            if (global_size < 8 || global_width <= 0)
                throw ConfigError("acca: global_size must be >= 8 and global_width positive");
        }
    };

    template <class T>
    struct AccaWeights {
        nn::Conv<T> stem;
        wcca::WccaWeights<T> wcca_scale;
        wcca::WccaWeights<T> wcca_offset;
        nn::Conv<T> head_scale;
        nn::Conv<T> head_offset;
        nn::Conv<T> enc1, enc2, enc3;
        nn::Linear<T> head_matrix;
        nn::Linear<T> head_gamma;

        /// Heads start at zero so the untrained module is the identity on non-negative images.
        static AccaWeights init(const AccaConfig& cfg, nn::Rng& rng) {
            cfg.validate();
            const std::int64_t c = cfg.channels, gw = cfg.global_width;
            AccaWeights w;
            w.stem = nn::Conv<T>::make(c, 3, 3, rng);
            w.wcca_scale = wcca::WccaWeights<T>::init(cfg.wcca(), rng);
            w.wcca_offset = wcca::WccaWeights<T>::init(cfg.wcca(), rng);
            w.head_scale = nn::Conv<T>::zeros(3, c, 1);
            w.head_offset = nn::Conv<T>::zeros(3, c, 1);
            w.enc1 = nn::Conv<T>::make(gw, 3, 3, rng);
            w.enc2 = nn::Conv<T>::make(gw, gw, 3, rng);
            w.enc3 = nn::Conv<T>::make(gw, gw, 3, rng);
            w.head_matrix = nn::Linear<T>::zeros(9, gw);
            w.head_gamma = nn::Linear<T>::zeros(cfg.per_channel_gamma ? 3 : 1, gw);
            return w;
        }

        AccaWeights clone() const {
            return {stem.clone(),        wcca_scale.clone(), wcca_offset.clone(), head_scale.clone(),
                    head_offset.clone(), enc1.clone(),       enc2.clone(),        enc3.clone(),
                    head_matrix.clone(), head_gamma.clone()};
        }

        nn::ParamList<T> params() const {
            nn::ParamList<T> out;
            stem.collect(out, "acca.stem");
            wcca_scale.collect(out, "acca.wcca_scale");
            wcca_offset.collect(out, "acca.wcca_offset");
            head_scale.collect(out, "acca.head_scale");
            head_offset.collect(out, "acca.head_offset");
            enc1.collect(out, "acca.global.enc1");
            enc2.collect(out, "acca.global.enc2");
            enc3.collect(out, "acca.global.enc3");
            head_matrix.collect(out, "acca.global.head_matrix");
            head_gamma.collect(out, "acca.global.head_gamma");
            return out;
        }
    };

    template <class T>
    std::int64_t param_count(const AccaWeights<T>& w) {
        return nn::count_params(w.params());
    }

    /// Adjustment outputs for a batch: A_l, B_l [N, 3, H, W]; A_g [N, 3, 3]; B_g [N, 1|3, 1, 1].
    template <class T>
    struct AccaParams {
        Tensor<T> scale_map;   // A_l
        Tensor<T> offset_map;  // B_l
        Tensor<T> color_matrix; // A_g
        Tensor<T> gamma;       // B_g
    };

    inline void check_image(const Shape& s, const AccaConfig& cfg) {
        if (s.size() != 4 || s[1] != 3)
            throw DimensionError("acca: expected an RGB batch [N, 3, H, W], got " + to_string(s));
        wcca::check_divisible(s, cfg.window);
    }

    template <class T>
    std::pair<Tensor<T>, Tensor<T>> local_branch(const Tensor<T>& image, const AccaWeights<T>& w, const AccaConfig& cfg) {
        check_image(image.shape(), cfg);
        auto feat = w.stem(image, {.padding = 1});
        auto wc = cfg.wcca();
        auto scale = ops::add_scalar(ops::tanh(w.head_scale(wcca::wcca_forward(feat, w.wcca_scale, wc))), T(1));
        auto offset = w.head_offset(wcca::wcca_forward(feat, w.wcca_offset, wc));
        return {scale, offset};
    }

    template <class T>
    Tensor<T> apply_local(const Tensor<T>& image, const Tensor<T>& scale, const Tensor<T>& offset) {
        if (scale.shape() != image.shape() || offset.shape() != image.shape())
            throw DimensionError("apply_local: maps " + to_string(scale.shape()) + ", " + to_string(offset.shape()) +
                                 " do not match image " + to_string(image.shape()));
        return ops::clamp_min(ops::add(ops::mul(scale, image), offset), T(0));
    }

    template <class T>
    std::pair<Tensor<T>, Tensor<T>> global_branch(const Tensor<T>& local, const AccaWeights<T>& w, const AccaConfig& cfg) {
        if (local.rank() != 4 || local.dim(1) != 3)
            throw DimensionError("global_branch: expected [N, 3, H, W], got " + to_string(local.shape()));
        const std::int64_t n = local.dim(0);
        auto x = ops::resize_bilinear(local, cfg.global_size, cfg.global_size);
        const ops::Conv2dOptions down{.stride = 2, .padding = 1};
        x = ops::relu(w.enc1(x, down));
        x = ops::relu(w.enc2(x, down));
        x = ops::relu(w.enc3(x, down));
        auto pooled = ops::global_avg_pool(x);

        auto eye = Tensor<T>::from({1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
        auto matrix = ops::add(ops::reshape(ops::tanh(w.head_matrix(pooled)), {n, 3, 3}), eye);

        const std::int64_t gc = w.head_gamma.weight.dim(0);
        auto gamma = ops::clamp(ops::add_scalar(w.head_gamma(pooled), T(1)), T(AccaConfig::kGammaMin),
                                T(AccaConfig::kGammaMax));
        return {matrix, ops::reshape(gamma, {n, gc, 1, 1})};
    }

    template <class T>
    Tensor<T> apply_global(const Tensor<T>& local, const Tensor<T>& matrix, const Tensor<T>& gamma) {
        return ops::pow_gamma(ops::matmul3(matrix, local), gamma);
    }

    /// Full forward; optionally returns the intermediate adjustment parameters.
    template <class T>
    Tensor<T> acca_forward(const Tensor<T>& image, const AccaWeights<T>& w, const AccaConfig& cfg,
                           AccaParams<T>* params = nullptr) {
        auto [scale, offset] = local_branch(image, w, cfg);
        auto local = apply_local(image, scale, offset);
        auto [matrix, gamma] = global_branch(local, w, cfg);
        if (params)
            *params = {scale, offset, matrix, gamma};
        return apply_global(local, matrix, gamma);
    }

} // namespace freqdis::acca
