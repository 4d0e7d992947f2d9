// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/error.hpp"
#include "freqdis/pyramid.hpp"
#include "freqdis/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>
#include <string>

// JSON mapping of TrainConfig. Every key is optional on input; unknown keys are rejected.

namespace freqdis::config {

    using Json = nlohmann::ordered_json;

    inline Json to_json(const training::TrainConfig& c) {
        Json j;
        j["phase"] = training::phase_name(c.phase);
        j["levels"] = c.levels;
        j["alpha"] = c.alpha;
        j["codec"] = std::string(pyramid::mode_name(c.codec));
        j["lr0"] = c.lr0;
        j["schedule"] = "cosine";
        j["acca_epochs"] = c.acca_epochs;
        j["acca_batch"] = c.acca_batch;
        j["ldrm_iters"] = c.ldrm_iters;
        j["ldrm_batch"] = c.ldrm_batch;
        j["crop"] = c.crop;
        j["channels"] = c.channels;
        j["window"] = c.window;
        j["sigmoid_gating"] = c.sigmoid_gating;
        j["per_channel_gamma"] = c.per_channel_gamma;
        j["backbone"] = c.backbone;
        j["width"] = c.width;
        j["blocks"] = c.blocks;
        j["seed"] = c.seed;
        j["freeze_acca"] = c.freeze_acca;
        j["augment"] = c.augment;
        j["clip_norm"] = c.clip_norm;
        j["image_loss"] = c.image_loss;
        j["log_every"] = c.log_every;
        return j;
    }

    namespace detail {
        template <class V>
        void read(const Json& j, const char* key, V& out) {
            if (!j.contains(key))
                return;
            try {
                out = j.at(key).get<V>();
            } catch (const nlohmann::json::exception&) {
                throw ConfigError(std::string("config key '") + key + "' has the wrong type");
            }
        }
    } // namespace detail

    /// Overlays `j` on `base`. Throws ConfigError on unknown keys, wrong types or invalid values.
    inline training::TrainConfig from_json(const Json& j, training::TrainConfig base = {}) {
        if (!j.is_object())
            throw ConfigError("config must be a JSON object");
        const auto known = to_json(base);
        for (const auto& [key, value] : j.items())
            if (!known.contains(key))
                throw ConfigError("unknown config key '" + key + "'");
        auto c = base;
        std::string phase = training::phase_name(c.phase), codec(pyramid::mode_name(c.codec)), schedule = "cosine";
        detail::read(j, "phase", phase);
        detail::read(j, "codec", codec);
        detail::read(j, "schedule", schedule);
        if (schedule != "cosine")
            throw ConfigError("unsupported schedule '" + schedule + "' (only cosine)");
        c.phase = training::parse_phase(phase);
        try {
            c.codec = pyramid::parse_mode(codec);
        } catch (const Error&) {
            throw ConfigError("unknown codec '" + codec + "'");
        }
        detail::read(j, "levels", c.levels);
        detail::read(j, "alpha", c.alpha);
        detail::read(j, "lr0", c.lr0);
        detail::read(j, "acca_epochs", c.acca_epochs);
        detail::read(j, "acca_batch", c.acca_batch);
        detail::read(j, "ldrm_iters", c.ldrm_iters);
        detail::read(j, "ldrm_batch", c.ldrm_batch);
        detail::read(j, "crop", c.crop);
        detail::read(j, "channels", c.channels);
        detail::read(j, "window", c.window);
        detail::read(j, "sigmoid_gating", c.sigmoid_gating);
        detail::read(j, "per_channel_gamma", c.per_channel_gamma);
        detail::read(j, "backbone", c.backbone);
        detail::read(j, "width", c.width);
        detail::read(j, "blocks", c.blocks);
        detail::read(j, "seed", c.seed);
        detail::read(j, "freeze_acca", c.freeze_acca);
        detail::read(j, "augment", c.augment);
        detail::read(j, "clip_norm", c.clip_norm);
        detail::read(j, "image_loss", c.image_loss);
        detail::read(j, "log_every", c.log_every);
        c.validate();
        return c;
    }

    inline training::TrainConfig load(const std::filesystem::path& path, training::TrainConfig base = {}) {
        std::ifstream in(path);
        if (!in)
            throw IoError("cannot open config '" + path.string() + "'");
        Json j;
        try {
            j = Json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("'" + path.string() + "': " + e.what());
        }
        return from_json(j, base);
    }

} // namespace freqdis::config
