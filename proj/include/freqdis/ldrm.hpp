// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/acca.hpp"
#include "freqdis/nn.hpp"
#include "freqdis/ops.hpp"
#include "freqdis/pyramid.hpp"

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

// Laplace decoupled restoration: a backbone maps the stacked bands of the input and of the
// coarse result (6K channels) to 3K full-resolution channels; group k is reduced to band k's
// resolution and added to the coarse band m_l^k.

namespace freqdis::ldrm {

    struct BackboneSpec {
        int in_channels = 24;
        int out_channels = 12;
        int width = 32;
        int blocks = 4;
    };

    /// Any restoration network that keeps spatial dims and maps in_channels to out_channels.
    template <class T>
    class Backbone {
    public:
        virtual ~Backbone() = default;
        virtual Tensor<T> forward(const Tensor<T>& x) const = 0;
        virtual nn::ParamList<T> params() const = 0;
        virtual const BackboneSpec& spec() const = 0;
    };

    /// Entry conv, residual blocks (conv-relu-conv + skip), zero-initialised exit conv.
    template <class T>
    class ReferenceBackbone final : public Backbone<T> {
    public:
        ReferenceBackbone(const BackboneSpec& spec, nn::Rng& rng) : spec_(spec) {
            if (spec.in_channels <= 0 || spec.out_channels <= 0 || spec.width <= 0 || spec.blocks < 0)
                throw ConfigError("reference backbone: channel counts must be positive");
            entry_ = nn::Conv<T>::make(spec.width, spec.in_channels, 3, rng);
            for (int i = 0; i < spec.blocks; ++i) {
                // Second conv of each block scaled down so the stack starts close to the skip path.
                blocks_.push_back({nn::Conv<T>::make(spec.width, spec.width, 3, rng),
                                   nn::Conv<T>::make(spec.width, spec.width, 3, rng, 0.1)});
            }
            exit_ = nn::Conv<T>::zeros(spec.out_channels, spec.width, 3);
        }

        Tensor<T> forward(const Tensor<T>& x) const override {
            if (x.rank() != 4 || x.dim(1) != spec_.in_channels)
                throw DimensionError("reference backbone: expected " + std::to_string(spec_.in_channels) +
                                     " input channels, got " + to_string(x.shape()));
            const ops::Conv2dOptions same{.padding = 1};
            auto h = entry_(x, same);
            for (const auto& [a, b] : blocks_)
                h = ops::add(h, b(ops::relu(a(h, same)), same));
            return exit_(h, same);
        }

        nn::ParamList<T> params() const override {
            nn::ParamList<T> out;
            entry_.collect(out, "ldrm.entry");
            for (std::size_t i = 0; i < blocks_.size(); ++i) {
                blocks_[i].first.collect(out, "ldrm.block" + std::to_string(i) + ".conv1");
                blocks_[i].second.collect(out, "ldrm.block" + std::to_string(i) + ".conv2");
            }
            exit_.collect(out, "ldrm.exit");
            return out;
        }

        const BackboneSpec& spec() const override { return spec_; }

    private:
        BackboneSpec spec_;
        nn::Conv<T> entry_;
        std::vector<std::pair<nn::Conv<T>, nn::Conv<T>>> blocks_;
        nn::Conv<T> exit_;
    };

    template <class T>
    using BackboneFactory = std::function<std::unique_ptr<Backbone<T>>(const BackboneSpec&, nn::Rng&)>;

    struct BackboneHandle {
        std::string name;
    };

    inline constexpr const char* kReferenceBackbone = "reference";

    /// Named backbone factories. Registration dry-runs the factory on a K = 4 stack and rejects
    /// factories whose output violates the 6K -> 3K, same-resolution contract.
    template <class T>
    class BackboneRegistry {
    public:
        static BackboneRegistry& instance() {
            static BackboneRegistry registry;
            return registry;
        }

        BackboneHandle add(const std::string& name, BackboneFactory<T> factory) {
            validate(name, factory);
            std::lock_guard lock(mutex_);
            factories_[name] = std::move(factory);
            return {name};
        }

        bool contains(const std::string& name) const {
            std::lock_guard lock(mutex_);
            return factories_.count(name) != 0;
        }

        std::unique_ptr<Backbone<T>> create(const std::string& name, const BackboneSpec& spec, nn::Rng& rng) const {
            BackboneFactory<T> f;
            {
                std::lock_guard lock(mutex_);
                auto it = factories_.find(name);
                if (it == factories_.end())
                    throw ConfigError("unknown backbone '" + name + "'");
                f = it->second;
            }
            return f(spec, rng);
        }

        std::vector<std::string> names() const {
            std::lock_guard lock(mutex_);
            std::vector<std::string> out;
            for (const auto& [k, v] : factories_)
                out.push_back(k);
            return out;
        }

    private:
        BackboneRegistry() {
            factories_[kReferenceBackbone] = [](const BackboneSpec& s, nn::Rng& rng) {
                return std::make_unique<ReferenceBackbone<T>>(s, rng);
            };
        }

        static void validate(const std::string& name, const BackboneFactory<T>& factory) {
            if (name.empty() || !factory)
                throw ContractError("backbone registration needs a name and a factory");
            constexpr int levels = 4;
            const BackboneSpec spec{6 * levels, 3 * levels, 8, 1};
            nn::Rng rng(0);
            auto net = factory(spec, rng);
            if (!net)
                throw ContractError("backbone '" + name + "': factory returned null");
            NoGradGuard no_grad;
            Tensor<T> probe({1, spec.in_channels, 16, 16}, T(0.1));
            Tensor<T> out;
            try {
                out = net->forward(probe);
            } catch (const Error& e) {
                throw ContractError("backbone '" + name + "': dry run failed: " + e.what());
            }
            const Shape want{1, spec.out_channels, 16, 16};
            if (out.shape() != want)
                throw ContractError("backbone '" + name + "': dry run on " + to_string(probe.shape()) + " produced " +
                                    to_string(out.shape()) + ", contract requires " + to_string(want));
        }

        mutable std::mutex mutex_;
        std::map<std::string, BackboneFactory<T>> factories_;
    };

    template <class T>
    BackboneHandle register_backbone(const std::string& name, BackboneFactory<T> factory) {
        return BackboneRegistry<T>::instance().add(name, std::move(factory));
    }

    struct LdrmConfig {
        int levels = pyramid::kDefaultLevels;
        pyramid::Mode codec = pyramid::Mode::exact;
        std::string backbone = kReferenceBackbone;
        int width = 32;
        int blocks = 4;

        BackboneSpec backbone_spec() const { return {6 * levels, 3 * levels, width, blocks}; }
    };

    template <class T>
    std::unique_ptr<Backbone<T>> make_backbone(const LdrmConfig& cfg, nn::Rng& rng) {
        return BackboneRegistry<T>::instance().create(cfg.backbone, cfg.backbone_spec(), rng);
    }

    /// Restored bands M_d = M_l + per-band residual predicted from the stacked bands.
    template <class T>
    pyramid::PyramidStack<T> ldrm_forward(const Tensor<T>& stacked, const pyramid::PyramidStack<T>& coarse,
                                          const Backbone<T>& net) {
        const int k_levels = coarse.levels();
        if (stacked.rank() != 4 || stacked.dim(1) != 6 * k_levels)
            throw DimensionError("ldrm_forward: expected " + std::to_string(6 * k_levels) + " stacked channels, got " +
                                 to_string(stacked.shape()));
        auto out = net.forward(stacked);
        const Shape want{stacked.dim(0), 3 * k_levels, stacked.dim(2), stacked.dim(3)};
        if (out.shape() != want)
            throw ContractError("ldrm_forward: backbone produced " + to_string(out.shape()) + ", expected " +
                                to_string(want));
        pyramid::PyramidStack<T> restored;
        restored.mode = coarse.mode;
        for (int k = 1; k <= k_levels; ++k) {
            auto r = ops::slice_channels(out, 3 * (k - 1), 3);
            for (int step = 1; step < k; ++step)
                r = ops::downsample2(r);
            restored.bands.push_back(ops::add(coarse.band(k), r));
        }
        return restored;
    }

    /// Every intermediate of one coarse-to-fine pass.
    template <class T>
    struct PipelineOutputs {
        Tensor<T> coarse;                     // I_l
        pyramid::PyramidStack<T> input_bands;  // M
        pyramid::PyramidStack<T> coarse_bands; // M_l
        pyramid::PyramidStack<T> restored;     // M_d
        Tensor<T> output;                     // I_c, unclamped
    };

    template <class T>
    void check_pipeline_dims(const Shape& s, const acca::AccaConfig& acfg, const LdrmConfig& lcfg) {
        acca::check_image(s, acfg);
        pyramid::check_levels(s, lcfg.levels);
    }

    /// Pipeline from an already computed coarse result.
    template <class T>
    PipelineOutputs<T> restore(const Tensor<T>& image, const Tensor<T>& coarse, const Backbone<T>& net,
                               const LdrmConfig& cfg) {
        PipelineOutputs<T> out;
        out.coarse = coarse;
        out.input_bands = pyramid::decompose(image, cfg.levels, cfg.codec);
        out.coarse_bands = pyramid::decompose(coarse, cfg.levels, cfg.codec);
        out.restored = ldrm_forward(pyramid::stack_bands(out.input_bands, out.coarse_bands), out.coarse_bands, net);
        out.output = pyramid::reconstruct(out.restored);
        return out;
    }

    template <class T>
    PipelineOutputs<T> enhance(const Tensor<T>& image, const acca::AccaWeights<T>& acca_w, const acca::AccaConfig& acfg,
                               const Backbone<T>& net, const LdrmConfig& lcfg) {
        check_pipeline_dims<T>(image.shape(), acfg, lcfg);
        return restore(image, acca::acca_forward(image, acca_w, acfg), net, lcfg);
    }

    /// Single-network baseline: output = I + backbone(I) with a 3 -> 3 backbone.
    template <class T>
    Tensor<T> unified_forward(const Tensor<T>& image, const Backbone<T>& net) {
        return ops::add(image, net.forward(image));
    }

} // namespace freqdis::ldrm
