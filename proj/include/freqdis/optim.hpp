// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/error.hpp"
#include "freqdis/nn.hpp"
#include "freqdis/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace freqdis::optim {

    inline constexpr double kDefaultLr = 5e-4;

    /// 0.5 * lr0 * (1 + cos(pi * step / total)).
    inline double cosine_lr(std::int64_t step, std::int64_t total, double lr0 = kDefaultLr) {
        if (total <= 0 || step < 0 || step > total)
            throw UsageError("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
        return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total)));
    }

    struct AdamOptions {
        double beta1 = 0.9;
        double beta2 = 0.999;
        double eps = 1e-8;
    };

    /// Adam with bias correction. Moments are kept in double regardless of T.
    template <class T>
    class Adam {
    public:
        explicit Adam(nn::ParamList<T> params, AdamOptions opt = {}) : params_(std::move(params)), opt_(opt) {
            for (const auto& [name, p] : params_) {
                m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
                v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
            }
        }

        const nn::ParamList<T>& params() const { return params_; }
        std::int64_t step_count() const { return step_; }

        void zero_grad() const {
            for (const auto& [name, p] : params_)
                p.zero_grad();
        }

        /// Throws UsageError if any parameter has never received a gradient.
        void step(double lr) {
            for (const auto& [name, p] : params_)
                if (!p.has_grad())
                    throw UsageError("adam: parameter '" + name + "' has no gradient; run backward first");
            ++step_;
            const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(step_));
            const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(step_));
            for (std::size_t i = 0; i < params_.size(); ++i) {
                auto& p = params_[i].second;
                auto data = p.mutable_data();
                auto grad = p.mutable_grad();
                auto& m = m_[i];
                auto& v = v_[i];
                for (std::size_t j = 0; j < data.size(); ++j) {
                    const double g = static_cast<double>(grad[j]);
                    m[j] = opt_.beta1 * m[j] + (1.0 - opt_.beta1) * g;
                    v[j] = opt_.beta2 * v[j] + (1.0 - opt_.beta2) * g * g;
                    const double upd = lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + opt_.eps);
                    data[j] = static_cast<T>(static_cast<double>(data[j]) - upd);
                }
            }
        }

    private:
        nn::ParamList<T> params_;
        AdamOptions opt_;
        std::vector<std::vector<double>> m_, v_;
        std::int64_t step_ = 0;
    };

    /// Rescales all gradients so their joint L2 norm is at most max_norm; returns the norm before clipping.
    template <class T>
    double clip_grad_norm(const nn::ParamList<T>& params, double max_norm) {
        double sq = 0.0;
        for (const auto& [name, p] : params) {
            if (!p.has_grad())
                continue;
            for (T g : p.mutable_grad())
                sq += static_cast<double>(g) * static_cast<double>(g);
        }
        const double norm = std::sqrt(sq);
        if (max_norm > 0.0 && norm > max_norm) {
            const T scale = static_cast<T>(max_norm / norm);
            for (const auto& [name, p] : params) {
                if (!p.has_grad())
                    continue;
                for (T& g : p.mutable_grad())
                    g *= scale;
            }
        }
        return norm;
    }

} // namespace freqdis::optim
