// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/error.hpp"
#include "freqdis/nn.hpp"
#include "freqdis/tensor.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

// Weight file layout, all integers little-endian:
//
//   "FDLW" | u32 version | u32 count | count x { u16 name_len | name | u8 rank | rank x u32 dim | f32 data }

namespace freqdis::weights {

    inline constexpr char kMagic[4] = {'F', 'D', 'L', 'W'};
    inline constexpr std::uint32_t kVersion = 1;

    struct NamedTensor {
        std::string name;
        Shape shape;
        std::vector<float> data;
    };

    namespace detail {
        inline void put_u(std::string& out, std::uint64_t v, int bytes) {
            for (int i = 0; i < bytes; ++i)
                out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
        }

        class Reader {
        public:
            Reader(const std::string& buf, std::string origin) : buf_(buf), origin_(std::move(origin)) {}

            std::uint64_t u(int bytes) {
                need(static_cast<std::size_t>(bytes));
                std::uint64_t v = 0;
                for (int i = 0; i < bytes; ++i)
                    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
                pos_ += static_cast<std::size_t>(bytes);
                return v;
            }

            std::string bytes(std::size_t n) {
                need(n);
                auto s = buf_.substr(pos_, n);
                pos_ += n;
                return s;
            }

            bool done() const { return pos_ == buf_.size(); }

        private:
            void need(std::size_t n) const {
                if (pos_ + n > buf_.size())
                    throw IoError(origin_ + ": truncated weight file");
            }

            const std::string& buf_;
            std::string origin_;
            std::size_t pos_ = 0;
        };
    } // namespace detail

    inline std::string encode(const std::vector<NamedTensor>& tensors) {
        std::string out(kMagic, 4);
        detail::put_u(out, kVersion, 4);
        detail::put_u(out, tensors.size(), 4);
        for (const auto& t : tensors) {
            if (t.name.size() > 0xffff || t.shape.size() > 0xff)
                throw UsageError("weights: name or rank too large for '" + t.name + "'");
            if (static_cast<std::int64_t>(t.data.size()) != numel(t.shape))
                throw DimensionError("weights: '" + t.name + "' data does not match shape " + to_string(t.shape));
            detail::put_u(out, t.name.size(), 2);
            out += t.name;
            detail::put_u(out, t.shape.size(), 1);
            for (auto d : t.shape)
                detail::put_u(out, static_cast<std::uint64_t>(d), 4);
            for (float f : t.data)
                detail::put_u(out, std::bit_cast<std::uint32_t>(f), 4);
        }
        return out;
    }

    inline std::vector<NamedTensor> decode(const std::string& buf, const std::string& origin = "weights") {
        detail::Reader r(buf, origin);
        if (r.bytes(4) != std::string(kMagic, 4))
            throw IoError(origin + ": bad magic, not a weight file");
        const auto version = r.u(4);
        if (version != kVersion)
            throw IoError(origin + ": unsupported weight format version " + std::to_string(version));
        const auto count = r.u(4);
        std::vector<NamedTensor> out;
        for (std::uint64_t i = 0; i < count; ++i) {
            NamedTensor t;
            t.name = r.bytes(r.u(2));
            const auto rank = r.u(1);
            for (std::uint64_t k = 0; k < rank; ++k)
                t.shape.push_back(static_cast<std::int64_t>(r.u(4)));
            t.data.resize(static_cast<std::size_t>(numel(t.shape)));
            for (auto& f : t.data)
                f = std::bit_cast<float>(static_cast<std::uint32_t>(r.u(4)));
            out.push_back(std::move(t));
        }
        if (!r.done())
            throw IoError(origin + ": trailing bytes after last tensor");
        return out;
    }

    template <class T>
    std::vector<NamedTensor> snapshot(const nn::ParamList<T>& params) {
        std::vector<NamedTensor> out;
        for (const auto& [name, t] : params) {
            std::vector<float> v(t.data().begin(), t.data().end());
            out.push_back({name, t.shape(), std::move(v)});
        }
        return out;
    }

    template <class T>
    void save(const nn::ParamList<T>& params, const std::filesystem::path& path) {
        const auto bytes = encode(snapshot(params));
        std::ofstream out(path, std::ios::binary);
        if (!out)
            throw IoError("cannot open '" + path.string() + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out)
            throw IoError("write to '" + path.string() + "' failed");
    }

    inline std::vector<NamedTensor> read(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in)
            throw IoError("cannot open weight file '" + path.string() + "'");
        std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return decode(buf, path.string());
    }

    /// Copies stored values into `params` by name. Every parameter must be present with a matching
    /// shape; extra stored tensors are an error unless `allow_extra`.
    template <class T>
    void assign(const nn::ParamList<T>& params, const std::vector<NamedTensor>& stored, const std::string& origin,
                bool allow_extra = false) {
        std::map<std::string, const NamedTensor*> by_name;
        for (const auto& t : stored)
            by_name[t.name] = &t;
        for (const auto& [name, p] : params) {
            auto it = by_name.find(name);
            if (it == by_name.end())
                throw ConfigError(origin + ": missing tensor '" + name + "'");
            if (it->second->shape != p.shape())
                throw DimensionError(origin + ": tensor '" + name + "' has shape " + to_string(it->second->shape) +
                                     ", model expects " + to_string(p.shape()));
            auto dst = p.mutable_data();
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] = static_cast<T>(it->second->data[i]);
            by_name.erase(it);
        }
        if (!allow_extra && !by_name.empty())
            throw ConfigError(origin + ": unexpected tensor '" + by_name.begin()->first + "'");
    }

    template <class T>
    void load(const nn::ParamList<T>& params, const std::filesystem::path& path, bool allow_extra = false) {
        assign(params, read(path), path.string(), allow_extra);
    }

} // namespace freqdis::weights
