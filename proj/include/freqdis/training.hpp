// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/acca.hpp"
#include "freqdis/ldrm.hpp"
#include "freqdis/losses.hpp"
#include "freqdis/nn.hpp"
#include "freqdis/optim.hpp"
#include "freqdis/pyramid.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

// Two-phase optimisation: the coarse adjuster first, then the band restorer against a frozen
// adjuster. End-to-end and single-network modes exist for the ablations.

namespace freqdis::training {

    enum class Phase { acca, ldrm, e2e, unified };

    inline std::string phase_name(Phase p) {
        switch (p) {
        case Phase::acca:
            return "acca";
        case Phase::ldrm:
            return "ldrm";
        case Phase::e2e:
            return "e2e";
        case Phase::unified:
            return "unified";
        }
        return "?";
    }

    inline Phase parse_phase(const std::string& s) {
        if (s == "acca")
            return Phase::acca;
        if (s == "ldrm")
            return Phase::ldrm;
        if (s == "e2e" || s == "end-to-end")
            return Phase::e2e;
        if (s == "unified")
            return Phase::unified;
        throw ConfigError("unknown phase '" + s + "' (expected acca, ldrm, e2e or unified)");
    }

    struct TrainConfig {
        Phase phase = Phase::ldrm;
        double lr0 = optim::kDefaultLr; // cosine-annealed to 0
        int acca_epochs = 100;
        int acca_batch = 4;
        int ldrm_iters = 2000; // also used by e2e and unified
        int ldrm_batch = 8;
        int crop = 32; // square training crop for the restorer phases; 0 trains on full images
        double alpha = losses::kDefaultAlpha;
        int levels = pyramid::kDefaultLevels;
        pyramid::Mode codec = pyramid::Mode::exact;
        int channels = 16;
        int window = 8;
        bool sigmoid_gating = false;
        bool per_channel_gamma = false;
        std::string backbone = ldrm::kReferenceBackbone;
        int width = 32;
        int blocks = 4;
        std::uint64_t seed = 0;
        bool freeze_acca = true;
        bool augment = true;
        double clip_norm = 1.0; // 0 disables
        bool image_loss = false; // adds mean|I_c - gt| to the band objective
        int log_every = 10;

        acca::AccaConfig acca() const {
            acca::AccaConfig c;
            c.channels = channels;
            c.window = window;
            c.sigmoid_gating = sigmoid_gating;
            c.per_channel_gamma = per_channel_gamma;
            return c;
        }

        ldrm::LdrmConfig ldrm() const {
            ldrm::LdrmConfig c;
            c.levels = levels;
            c.codec = codec;
            c.backbone = backbone;
            c.width = width;
            c.blocks = blocks;
            return c;
        }

        void validate() const {
            if (!(lr0 > 0.0))
                throw ConfigError("lr0 must be positive");
            losses::check_alpha(alpha);
            if (levels < 2)
                throw ConfigError("levels must be >= 2");
            if (acca_epochs <= 0 || acca_batch <= 0 || ldrm_iters <= 0 || ldrm_batch <= 0)
                throw ConfigError("epochs, iterations and batch sizes must be positive");
            if (crop < 0 || (crop > 0 && crop % (std::int64_t{1} << (levels - 1)) != 0))
                throw ConfigError("crop " + std::to_string(crop) + " must be 0 or a multiple of 2^(levels-1)");
            if (clip_norm < 0.0)
                throw ConfigError("clip_norm must be >= 0");
            acca().validate();
        }
    };

    struct Pair {
        std::string name;
        Tensor<float> low; // [1, 3, H, W]
        Tensor<float> gt;
    };
    using Dataset = std::vector<Pair>;

    struct HistoryRow {
        std::int64_t step = 0;
        double l_r = 0.0;
        double l_i = 0.0;
        double l_total = 0.0;
    };

    struct History {
        std::string phase;
        std::vector<HistoryRow> rows;
        double seconds = 0.0;
        std::vector<std::string> notes;

        void write_csv(const std::string& path) const {
            std::ofstream out(path);
            if (!out)
                throw IoError("cannot write history '" + path + "'");
            out << "step,l_r,l_i,l_total\n";
            out.precision(9);
            for (const auto& r : rows)
                out << r.step << ',' << r.l_r << ',' << r.l_i << ',' << r.l_total << '\n';
        }
    };

    inline void check_dataset(const Dataset& data, const char* op) {
        if (data.empty())
            throw ConfigError(std::string(op) + ": empty dataset");
        const auto& s = data.front().low.shape();
        for (const auto& p : data)
            if (p.low.shape() != s || p.gt.shape() != s)
                throw DimensionError(std::string(op) + ": pair '" + p.name + "' shape differs from " + to_string(s));
    }

    // --------------------------------------------------------------------------------------------
    // Batches

    /// Dihedral transform d in [0, 8): bit 0 flips horizontally, bit 1 vertically, bit 2 transposes.
    inline Tensor<float> dihedral(const Tensor<float>& img, int d) {
        const std::int64_t n = img.dim(0), c = img.dim(1), h = img.dim(2), w = img.dim(3);
        const bool tr = (d & 4) != 0 && h == w;
        std::vector<float> out(img.vec().size());
        const auto& src = img.data();
        for (std::int64_t p = 0; p < n * c; ++p)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x) {
                    std::int64_t sy = tr ? x : y, sx = tr ? y : x;
                    if (d & 1)
                        sx = w - 1 - sx;
                    if (d & 2)
                        sy = h - 1 - sy;
                    out[static_cast<std::size_t>((p * h + y) * w + x)] =
                        src[static_cast<std::size_t>((p * h + sy) * w + sx)];
                }
        return Tensor<float>(img.shape(), std::move(out));
    }

    inline Tensor<float> stack_batch(const std::vector<Tensor<float>>& items) {
        const auto& s = items.front().shape();
        std::vector<float> out;
        out.reserve(items.size() * items.front().vec().size());
        for (const auto& t : items)
            out.insert(out.end(), t.vec().begin(), t.vec().end());
        return Tensor<float>({static_cast<std::int64_t>(items.size()), s[1], s[2], s[3]}, std::move(out));
    }

    /// Random full-image batch with identical augmentation on both sides of each pair.
    struct Batch {
        Tensor<float> low;
        Tensor<float> gt;
        std::vector<std::size_t> index; // dataset index per item
        std::vector<int> transform;     // dihedral code per item
    };

    inline Batch sample_batch(const Dataset& data, int size, bool augment, nn::Rng& rng) {
        std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
        std::uniform_int_distribution<int> dih(0, 7);
        Batch b;
        std::vector<Tensor<float>> lows, gts;
        for (int i = 0; i < size; ++i) {
            const std::size_t k = pick(rng);
            const auto& p = data[k];
            const int d = augment ? dih(rng) : 0;
            lows.push_back(d ? dihedral(p.low, d) : p.low);
            gts.push_back(d ? dihedral(p.gt, d) : p.gt);
            b.index.push_back(k);
            b.transform.push_back(d);
        }
        b.low = stack_batch(lows);
        b.gt = stack_batch(gts);
        return b;
    }

    /// Epoch order over the dataset, reshuffled by `rng`.
    inline std::vector<std::size_t> epoch_order(std::size_t n, nn::Rng& rng) {
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i)
            idx[i] = i;
        std::shuffle(idx.begin(), idx.end(), rng);
        return idx;
    }

    namespace detail {
        inline nn::Rng data_rng(std::uint64_t seed) { return nn::Rng(seed ^ 0x9e3779b97f4a7c15ULL); }

        struct Stepper {
            optim::Adam<float> adam;
            std::int64_t total;
            double lr0;
            double clip;

            void operator()(std::int64_t step) {
                if (clip > 0.0)
                    optim::clip_grad_norm(adam.params(), clip);
                adam.step(optim::cosine_lr(step, total, lr0));
                adam.zero_grad();
            }
        };

        inline void log_row(History& h, std::int64_t step, int every, std::int64_t total, double l_r, double l_i,
                            double l_total) {
            if (every <= 0 || step % every == 0 || step + 1 == total)
                h.rows.push_back({step, l_r, l_i, l_total});
        }

        struct Timer {
            std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
            double seconds() const {
                return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            }
        };

        /// Crops the same random square window from every tensor (no-op when crop == 0 or full size).
        inline std::vector<Tensor<float>> random_crop(const std::vector<Tensor<float>>& ts, int crop, nn::Rng& rng) {
            const std::int64_t h = ts.front().dim(2), w = ts.front().dim(3);
            if (crop == 0 || (crop == h && crop == w))
                return ts;
            if (crop > h || crop > w)
                throw ConfigError("crop " + std::to_string(crop) + " larger than image " + to_string(ts.front().shape()));
            std::uniform_int_distribution<std::int64_t> dy(0, h - crop), dx(0, w - crop);
            const std::int64_t y0 = dy(rng), x0 = dx(rng);
            std::vector<Tensor<float>> out;
            for (const auto& t : ts)
                out.push_back(ops::crop_spatial(t, y0, x0, crop, crop));
            return out;
        }
    } // namespace detail

    // --------------------------------------------------------------------------------------------
    // Phases

    /// Phase 1: L1 between the coarse result and ground truth. Perceptual loss is not used.
    inline acca::AccaWeights<float> train_acca(const Dataset& data, const TrainConfig& cfg, History* history = nullptr) {
        cfg.validate();
        check_dataset(data, "train_acca");
        const auto acfg = cfg.acca();
        acca::check_image(data.front().low.shape(), acfg);
        nn::Rng init_rng(cfg.seed);
        auto w = acca::AccaWeights<float>::init(acfg, init_rng);
        auto rng = detail::data_rng(cfg.seed);

        const std::int64_t per_epoch = (static_cast<std::int64_t>(data.size()) + cfg.acca_batch - 1) / cfg.acca_batch;
        const std::int64_t total = per_epoch * cfg.acca_epochs;
        detail::Stepper stepper{optim::Adam<float>(w.params()), total, cfg.lr0, cfg.clip_norm};
        History h;
        h.phase = "acca";
        h.notes.push_back("objective: L1 only; perceptual term not used");
        detail::Timer timer;
        std::uniform_int_distribution<int> dih(0, 7);
        std::int64_t step = 0;
        for (int epoch = 0; epoch < cfg.acca_epochs; ++epoch) {
            const auto order = epoch_order(data.size(), rng);
            for (std::int64_t b = 0; b < per_epoch; ++b, ++step) {
                std::vector<Tensor<float>> lows, gts;
                for (std::int64_t i = b * cfg.acca_batch;
                     i < std::min<std::int64_t>((b + 1) * cfg.acca_batch, static_cast<std::int64_t>(data.size())); ++i) {
                    const auto& p = data[order[static_cast<std::size_t>(i)]];
                    const int d = cfg.augment ? dih(rng) : 0;
                    lows.push_back(d ? dihedral(p.low, d) : p.low);
                    gts.push_back(d ? dihedral(p.gt, d) : p.gt);
                }
                auto loss = losses::acca_loss(acca::acca_forward(stack_batch(lows), w, acfg), stack_batch(gts));
                backward(loss);
                const double l = loss.item();
                detail::log_row(h, step, cfg.log_every, total, l, 0.0, l);
                stepper(step);
            }
        }
        h.seconds = timer.seconds();
        if (history)
            *history = std::move(h);
        return w;
    }

    namespace detail {
        /// One restorer objective evaluation on a (possibly cropped) batch.
        inline Tensor<float> restorer_loss(const Tensor<float>& low, const Tensor<float>& coarse, const Tensor<float>& gt,
                                           const ldrm::Backbone<float>& net, const TrainConfig& cfg,
                                           losses::LossReport* report) {
            const auto lcfg = cfg.ldrm();
            auto out = ldrm::restore(low, coarse, net, lcfg);
            auto target = pyramid::decompose(gt, lcfg.levels, lcfg.codec);
            auto loss = losses::disentangled_loss(out.restored, target, out.coarse_bands, cfg.alpha, report);
            if (cfg.image_loss)
                loss = ops::add(loss, ops::l1_mean(out.output, gt));
            return loss;
        }

        /// Frozen-adjuster outputs per (pair, dihedral code), filled on first use.
        struct CoarseCache {
            const Dataset* data;
            const acca::AccaWeights<float>* weights;
            acca::AccaConfig cfg;
            std::map<std::pair<std::size_t, int>, Tensor<float>> entries;

            const Tensor<float>& get(std::size_t index, int transform) {
                const auto key = std::make_pair(index, transform);
                auto it = entries.find(key);
                if (it == entries.end()) {
                    NoGradGuard no_grad;
                    const auto& low = (*data)[index].low;
                    auto out = acca::acca_forward(transform ? dihedral(low, transform) : low, *weights, cfg);
                    it = entries.emplace(key, out).first;
                }
                return it->second;
            }
        };

        inline std::vector<std::uint8_t> param_bytes(const nn::ParamList<float>& params) {
            std::vector<std::uint8_t> out;
            for (const auto& [name, t] : params) {
                const auto* p = reinterpret_cast<const std::uint8_t*>(t.data().data());
                out.insert(out.end(), p, p + t.data().size() * sizeof(float));
            }
            return out;
        }

        inline std::unique_ptr<ldrm::Backbone<float>> train_restorer(const Dataset& data, acca::AccaWeights<float>* acca_w,
                                                                     bool train_acca_too, const TrainConfig& cfg,
                                                                     History& h) {
            const auto acfg = cfg.acca();
            const auto lcfg = cfg.ldrm();
            ldrm::check_pipeline_dims<float>(data.front().low.shape(), acfg, lcfg);
            nn::Rng init_rng(cfg.seed + 1);
            auto net = ldrm::make_backbone<float>(lcfg, init_rng);
            auto params = net->params();
            if (train_acca_too) {
                auto ap = acca_w->params();
                params.insert(params.end(), ap.begin(), ap.end());
            }
            auto rng = data_rng(cfg.seed + 1);
            const std::int64_t total = cfg.ldrm_iters;
            Stepper stepper{optim::Adam<float>(params), total, cfg.lr0, cfg.clip_norm};
            CoarseCache frozen_cache{&data, acca_w, acfg, {}};
            Timer timer;
            for (std::int64_t step = 0; step < total; ++step) {
                auto batch = sample_batch(data, cfg.ldrm_batch, cfg.augment, rng);
                // The coarse result is always computed on the full image so the global branch sees
                // the same context as at inference time; the crop is taken afterwards.
                Tensor<float> coarse;
                if (train_acca_too) {
                    coarse = acca::acca_forward(batch.low, *acca_w, acfg);
                } else {
                    std::vector<Tensor<float>> items;
                    for (std::size_t i = 0; i < batch.index.size(); ++i)
                        items.push_back(frozen_cache.get(batch.index[i], batch.transform[i]));
                    coarse = stack_batch(items);
                }
                auto views = random_crop({batch.low, coarse, batch.gt}, cfg.crop, rng);
                losses::LossReport rep;
                auto loss = restorer_loss(views[0], views[1], views[2], *net, cfg, &rep);
                backward(loss);
                log_row(h, step, cfg.log_every, total, rep.l_r, rep.l_i, loss.item());
                stepper(step);
            }
            h.seconds = timer.seconds();
            return net;
        }
    } // namespace detail

    /// Phase 2: the adjuster is frozen and must come out byte-identical.
    inline std::unique_ptr<ldrm::Backbone<float>> train_ldrm(const Dataset& data, const acca::AccaWeights<float>& acca_w,
                                                             const TrainConfig& cfg, History* history = nullptr) {
        cfg.validate();
        check_dataset(data, "train_ldrm");
        if (!acca_w.stem.weight.defined())
            throw ConfigError("train_ldrm: adjuster weights are required");
        const auto before = detail::param_bytes(acca_w.params());
        History h;
        h.phase = "ldrm";
        auto frozen = acca_w;
        auto net = detail::train_restorer(data, &frozen, false, cfg, h);
        if (detail::param_bytes(acca_w.params()) != before)
            throw ContractError("train_ldrm: frozen adjuster weights changed during training");
        if (history)
            *history = std::move(h);
        return net;
    }

    struct JointResult {
        acca::AccaWeights<float> acca;
        std::unique_ptr<ldrm::Backbone<float>> net;
    };

    /// Joint training of both stages, starting from a copy of `start`.
    inline JointResult train_end_to_end(const Dataset& data, const acca::AccaWeights<float>& start,
                                        const TrainConfig& cfg, History* history = nullptr) {
        cfg.validate();
        check_dataset(data, "train_end_to_end");
        if (!start.stem.weight.defined())
            throw ConfigError("train_end_to_end: adjuster weights are required");
        History h;
        h.phase = "e2e";
        JointResult r{start.clone(), nullptr};
        r.net = detail::train_restorer(data, &r.acca, true, cfg, h);
        if (history)
            *history = std::move(h);
        return r;
    }

    /// Single network on the image: output = I + backbone(I), L1 to ground truth.
    inline std::unique_ptr<ldrm::Backbone<float>> train_unified(const Dataset& data, const TrainConfig& cfg,
                                                                History* history = nullptr) {
        cfg.validate();
        check_dataset(data, "train_unified");
        nn::Rng init_rng(cfg.seed + 2);
        auto net = ldrm::BackboneRegistry<float>::instance().create(cfg.backbone, {3, 3, cfg.width, cfg.blocks}, init_rng);
        auto rng = detail::data_rng(cfg.seed + 2);
        const std::int64_t total = cfg.ldrm_iters;
        detail::Stepper stepper{optim::Adam<float>(net->params()), total, cfg.lr0, cfg.clip_norm};
        History h;
        h.phase = "unified";
        detail::Timer timer;
        for (std::int64_t step = 0; step < total; ++step) {
            auto batch = sample_batch(data, cfg.ldrm_batch, cfg.augment, rng);
            auto views = detail::random_crop({batch.low, batch.gt}, cfg.crop, rng);
            auto loss = ops::l1_mean(ldrm::unified_forward(views[0], *net), views[1]);
            backward(loss);
            const double l = loss.item();
            detail::log_row(h, step, cfg.log_every, total, l, 0.0, l);
            stepper(step);
        }
        h.seconds = timer.seconds();
        if (history)
            *history = std::move(h);
        return net;
    }

} // namespace freqdis::training
