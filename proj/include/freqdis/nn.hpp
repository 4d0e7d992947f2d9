// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/ops.hpp"
#include "freqdis/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace freqdis::nn {

    using Rng = std::mt19937_64;

    /// Named parameter handles, in a fixed enumeration order.
    template <class T>
    using ParamList = std::vector<std::pair<std::string, Tensor<T>>>;

    template <class T>
    std::int64_t count_params(const ParamList<T>& params) {
        std::int64_t n = 0;
        for (const auto& [name, t] : params)
            n += t.numel();
        return n;
    }

    /// Uniform in [-bound, bound].
    template <class T>
    Tensor<T> uniform(Shape shape, double bound, Rng& rng) {
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<T> v(static_cast<std::size_t>(numel(shape)));
        for (auto& x : v)
            x = static_cast<T>(dist(rng));
        Tensor<T> t(std::move(shape), std::move(v));
        t.set_requires_grad(true);
        return t;
    }

    template <class T>
    Tensor<T> constant(Shape shape, T value) {
        Tensor<T> t(std::move(shape), value);
        t.set_requires_grad(true);
        return t;
    }

    /// Fresh trainable leaf holding a copy of t's values.
    template <class T>
    Tensor<T> leaf_copy(const Tensor<T>& t) {
        auto c = t.detach();
        c.set_requires_grad(true);
        return c;
    }

    /// Convolution layer: weight [out, in/groups, k, k], bias [out].
    template <class T>
    struct Conv {
        Tensor<T> weight;
        Tensor<T> bias;

        /// Kaiming-uniform style init scaled by `gain`; bias zero.
        static Conv make(std::int64_t out, std::int64_t in_per_group, std::int64_t k, Rng& rng, double gain = 1.0) {
            const double fan_in = static_cast<double>(in_per_group * k * k);
            Conv c;
            c.weight = uniform<T>({out, in_per_group, k, k}, gain * std::sqrt(6.0 / fan_in) / std::sqrt(2.0), rng);
            c.bias = constant<T>({out}, T(0));
            return c;
        }

        static Conv zeros(std::int64_t out, std::int64_t in_per_group, std::int64_t k) {
            Conv c;
            c.weight = constant<T>({out, in_per_group, k, k}, T(0));
            c.bias = constant<T>({out}, T(0));
            return c;
        }

        Tensor<T> operator()(const Tensor<T>& x, ops::Conv2dOptions opt = {}) const {
            return ops::conv2d(x, weight, bias, opt);
        }

        Conv clone() const { return {leaf_copy(weight), leaf_copy(bias)}; }

        void collect(ParamList<T>& out, const std::string& prefix) const {
            out.emplace_back(prefix + ".weight", weight);
            out.emplace_back(prefix + ".bias", bias);
        }
    };

    /// Fully connected layer: weight [out, in], bias [out].
    template <class T>
    struct Linear {
        Tensor<T> weight;
        Tensor<T> bias;

        static Linear zeros(std::int64_t out, std::int64_t in) {
            return {constant<T>({out, in}, T(0)), constant<T>({out}, T(0))};
        }

        Tensor<T> operator()(const Tensor<T>& x) const { return ops::linear(x, weight, bias); }

        Linear clone() const { return {leaf_copy(weight), leaf_copy(bias)}; }

        void collect(ParamList<T>& out, const std::string& prefix) const {
            out.emplace_back(prefix + ".weight", weight);
            out.emplace_back(prefix + ".bias", bias);
        }
    };

    /// Deep copy of every parameter into fresh leaves, preserving names and order.
    template <class T>
    ParamList<T> clone(const ParamList<T>& params) {
        ParamList<T> out;
        for (const auto& [name, t] : params) {
            auto c = t.detach();
            c.set_requires_grad(t.requires_grad());
            out.emplace_back(name, c);
        }
        return out;
    }

    template <class T>
    void set_requires_grad(const ParamList<T>& params, bool on) {
        for (const auto& [name, t] : params)
            t.set_requires_grad(on);
    }

} // namespace freqdis::nn
