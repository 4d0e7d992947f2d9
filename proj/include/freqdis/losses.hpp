// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/ops.hpp"
#include "freqdis/pyramid.hpp"

#include <string>
#include <vector>

// L1 terms use mean reduction per band, summed over bands.

namespace freqdis::losses {

    inline constexpr double kDefaultAlpha = 1.0;

    struct LossReport {
        double l_r = 0.0;
        double l_i = 0.0;
        double l_total = 0.0;
        double alpha = kDefaultAlpha;
        std::vector<double> per_band;
    };

    template <class T>
    void check_same_stack(const pyramid::PyramidStack<T>& a, const pyramid::PyramidStack<T>& b, const char* op) {
        if (a.levels() != b.levels())
            throw DimensionError(std::string(op) + ": level counts differ");
        for (int k = 1; k <= a.levels(); ++k)
            if (a.band(k).shape() != b.band(k).shape())
                throw DimensionError(std::string(op) + ": band " + std::to_string(k) + " shapes " +
                                     to_string(a.band(k).shape()) + " vs " + to_string(b.band(k).shape()));
    }

    /// sum_k mean|m_d^k - m_gt^k|; per-band values optionally written to `per_band`.
    template <class T>
    Tensor<T> recon_loss(const pyramid::PyramidStack<T>& restored, const pyramid::PyramidStack<T>& target,
                         std::vector<double>* per_band = nullptr) {
        check_same_stack(restored, target, "recon_loss");
        Tensor<T> total;
        for (int k = 1; k <= restored.levels(); ++k) {
            auto term = ops::l1_mean(restored.band(k), target.band(k));
            if (per_band)
                per_band->push_back(static_cast<double>(term.item()));
            total = total.defined() ? ops::add(total, term) : term;
        }
        return total;
    }

    /// mean|m_d^K - m_l^K|: ties the restored coarsest band to the coarse result, not to the ground truth.
    template <class T>
    Tensor<T> consistency_loss(const pyramid::PyramidStack<T>& restored, const pyramid::PyramidStack<T>& coarse) {
        if (restored.coarsest().shape() != coarse.coarsest().shape())
            throw DimensionError("consistency_loss: coarsest band shapes " + to_string(restored.coarsest().shape()) +
                                 " vs " + to_string(coarse.coarsest().shape()));
        return ops::l1_mean(restored.coarsest(), coarse.coarsest());
    }

    inline void check_alpha(double alpha) {
        if (!(alpha >= 0.0))
            throw ConfigError("alpha must be non-negative, got " + std::to_string(alpha));
    }

    inline double total_loss(double l_r, double l_i, double alpha = kDefaultAlpha) {
        check_alpha(alpha);
        return l_r + alpha * l_i;
    }

    template <class T>
    Tensor<T> total_loss(const Tensor<T>& l_r, const Tensor<T>& l_i, double alpha = kDefaultAlpha) {
        check_alpha(alpha);
        return ops::add(l_r, ops::mul_scalar(l_i, static_cast<T>(alpha)));
    }

    /// L_r + alpha * L_i together with a report of the individual terms.
    template <class T>
    Tensor<T> disentangled_loss(const pyramid::PyramidStack<T>& restored, const pyramid::PyramidStack<T>& target,
                                const pyramid::PyramidStack<T>& coarse, double alpha, LossReport* report = nullptr) {
        std::vector<double> per_band;
        auto l_r = recon_loss(restored, target, &per_band);
        auto l_i = consistency_loss(restored, coarse);
        auto total = total_loss(l_r, l_i, alpha);
        if (report)
            *report = {static_cast<double>(l_r.item()), static_cast<double>(l_i.item()),
                       static_cast<double>(total.item()), alpha, std::move(per_band)};
        return total;
    }

    /// Coarse-phase objective; the L1 term only (no perceptual term).
    template <class T>
    Tensor<T> acca_loss(const Tensor<T>& coarse, const Tensor<T>& target) {
        return ops::l1_mean(coarse, target);
    }

} // namespace freqdis::losses
