// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/ops.hpp"
#include "freqdis/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace freqdis {

    struct GradCheckOptions {
        double step = 1e-5;
        /// Elements probed per input; 0 probes every element. Probes are drawn without replacement.
        std::size_t max_probes_per_input = 0;
        std::uint64_t seed = 0;
    };

    struct GradCheckResult {
        double max_rel_error = 0.0;
        std::size_t probes = 0;
        std::size_t worst_input = 0;
        std::size_t worst_index = 0;
    };

    /// Compares reverse-mode gradients with central differences.
    ///
    /// The error of one element is |analytic - numeric| / max(1, |numeric|). `f` may return a
    /// non-scalar tensor; it is reduced with sum. The inputs are used as leaves: their values are
    /// perturbed in place and restored.
    inline GradCheckResult grad_check_detailed(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                                               const std::vector<Tensor<double>>& inputs, GradCheckOptions opt = {}) {
        auto reduce = [](const Tensor<double>& t) { return t.numel() == 1 ? t : ops::sum(t); };

        for (const auto& in : inputs) {
            in.zero_grad();
            in.set_requires_grad(true);
        }
        {
            auto loss = reduce(f(inputs));
            backward(loss);
        }

        GradCheckResult result;
        std::mt19937_64 rng(opt.seed);
        NoGradGuard no_grad;
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            const auto& in = inputs[k];
            const auto analytic = in.grad();
            std::vector<std::size_t> idx(static_cast<std::size_t>(in.numel()));
            std::iota(idx.begin(), idx.end(), 0);
            if (opt.max_probes_per_input != 0 && idx.size() > opt.max_probes_per_input) {
                std::shuffle(idx.begin(), idx.end(), rng);
                idx.resize(opt.max_probes_per_input);
            }
            auto values = in.mutable_data();
            for (std::size_t i : idx) {
                const double saved = values[i];
                values[i] = saved + opt.step;
                const double up = reduce(f(inputs)).item();
                values[i] = saved - opt.step;
                const double down = reduce(f(inputs)).item();
                values[i] = saved;
                const double numeric = (up - down) / (2.0 * opt.step);
                const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
                ++result.probes;
                if (err > result.max_rel_error) {
                    result.max_rel_error = err;
                    result.worst_input = k;
                    result.worst_index = i;
                }
            }
        }
        return result;
    }

    /// Max relative error between analytic and central-difference gradients.
    inline double grad_check(const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& f,
                             const std::vector<Tensor<double>>& inputs, GradCheckOptions opt = {}) {
        return grad_check_detailed(f, inputs, opt).max_rel_error;
    }

} // namespace freqdis
