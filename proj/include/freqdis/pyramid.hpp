// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/ops.hpp"
#include "freqdis/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace freqdis::pyramid {

    /// exact: band-pass residuals against the upsampled next level, perfect reconstruction.
    /// literal: difference-of-Gaussians bands as originally formulated; not invertible.
    enum class Mode { exact, literal };

    inline std::string_view mode_name(Mode m) { return m == Mode::exact ? "exact" : "paper-literal"; }

    inline Mode parse_mode(std::string_view s) {
        if (s == "exact")
            return Mode::exact;
        if (s == "paper-literal" || s == "literal")
            return Mode::literal;
        throw ConfigError("unknown pyramid mode '" + std::string(s) + "' (expected exact or paper-literal)");
    }

    inline constexpr int kDefaultLevels = 4;

    /// Binomial 5-tap Gaussian, [1, 4, 6, 4, 1] / 16.
    struct GaussianKernel {
        static constexpr std::array<double, 5> taps{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
    };

    /// Band maps m^1 .. m^K; band k (1-based) is H / 2^(k-1) x W / 2^(k-1).
    template <class T>
    struct PyramidStack {
        std::vector<Tensor<T>> bands;
        Mode mode = Mode::exact;

        int levels() const { return static_cast<int>(bands.size()); }
        const Tensor<T>& band(int k) const { return bands.at(static_cast<std::size_t>(k - 1)); }
        const Tensor<T>& coarsest() const { return bands.back(); }
    };

    template <class T>
    Tensor<T> gaussian_blur(const Tensor<T>& image) {
        const auto& taps = GaussianKernel::taps;
        return ops::separable_blur(image, std::vector<double>(taps.begin(), taps.end()));
    }

    inline void check_levels(const Shape& shape, int levels) {
        if (levels < 2)
            throw ConfigError("pyramid needs at least 2 levels, got " + std::to_string(levels));
        if (shape.size() != 4)
            throw DimensionError("pyramid input must be [N, C, H, W], got " + to_string(shape));
        const std::int64_t f = std::int64_t{1} << (levels - 1);
        if (shape[2] % f != 0 || shape[3] % f != 0)
            throw DimensionError("image " + std::to_string(shape[2]) + "x" + std::to_string(shape[3]) +
                                 " not divisible by 2^(K-1) = " + std::to_string(f) + " for K = " +
                                 std::to_string(levels));
    }

    template <class T>
    PyramidStack<T> decompose(const Tensor<T>& image, int levels = kDefaultLevels, Mode mode = Mode::exact) {
        check_levels(image.shape(), levels);
        PyramidStack<T> out;
        out.mode = mode;
        if (mode == Mode::exact) {
            Tensor<T> g = image;
            for (int k = 1; k < levels; ++k) {
                Tensor<T> next = ops::downsample2(gaussian_blur(g));
                out.bands.push_back(ops::sub(g, ops::upsample2(next)));
                g = next;
            }
            out.bands.push_back(g);
            return out;
        }
        // Gaussian level k is the blur of the previous level downscaled; level 1 blurs the input.
        std::vector<Tensor<T>> gauss{gaussian_blur(image)};
        for (int k = 2; k < levels; ++k)
            gauss.push_back(gaussian_blur(ops::downsample2(gauss.back())));
        out.bands.push_back(ops::sub(image, gauss[0]));
        for (int k = 2; k < levels; ++k)
            out.bands.push_back(ops::sub(ops::downsample2(gauss[static_cast<std::size_t>(k - 2)]),
                                         gauss[static_cast<std::size_t>(k - 1)]));
        out.bands.push_back(ops::downsample2(gauss.back()));
        return out;
    }

    template <class T>
    void check_stack(const PyramidStack<T>& stack) {
        if (stack.levels() < 1)
            throw DimensionError("empty pyramid stack");
        const auto& base = stack.bands.front().shape();
        if (base.size() != 4)
            throw DimensionError("pyramid bands must be rank 4");
        for (int k = 2; k <= stack.levels(); ++k) {
            const auto& s = stack.band(k).shape();
            const std::int64_t f = std::int64_t{1} << (k - 1);
            if (s.size() != 4 || s[0] != base[0] || s[1] != base[1] || s[2] * f != base[2] || s[3] * f != base[3])
                throw DimensionError("band " + std::to_string(k) + " has shape " + to_string(s) +
                                     ", inconsistent with band 1 " + to_string(base));
        }
    }

    /// Inverse transform from the coarsest band upward: r^K = m^K, r^k = m^k + up(r^{k+1}).
    template <class T>
    Tensor<T> reconstruct(const PyramidStack<T>& stack) {
        check_stack(stack);
        Tensor<T> r = stack.coarsest();
        for (int k = stack.levels() - 1; k >= 1; --k)
            r = ops::add(stack.band(k), ops::upsample2(r));
        return r;
    }

    /// Bands resized to full resolution, channel-concatenated as
    /// [m^1, Up(m^2) .. Up(m^K), m_l^1, Up(m_l^2) .. Up(m_l^K)].
    template <class T>
    Tensor<T> stack_bands(const PyramidStack<T>& m, const PyramidStack<T>& m_l) {
        check_stack(m);
        check_stack(m_l);
        if (m.levels() != m_l.levels())
            throw DimensionError("stack_bands: level counts differ (" + std::to_string(m.levels()) + " vs " +
                                 std::to_string(m_l.levels()) + ")");
        if (m.bands.front().shape() != m_l.bands.front().shape())
            throw DimensionError("stack_bands: full-resolution shapes differ");
        if (m.bands.front().dim(1) != 3)
            throw DimensionError("stack_bands: bands must be RGB");
        std::vector<Tensor<T>> parts;
        const auto h = m.bands.front().dim(2), w = m.bands.front().dim(3);
        for (const auto* s : {&m, &m_l}) {
            parts.push_back(s->bands.front());
            for (int k = 2; k <= s->levels(); ++k) {
                parts.push_back(ops::resize_bilinear(s->band(k), h, w));
            }
        }
        return ops::concat_channels(parts);
    }

} // namespace freqdis::pyramid
