// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/error.hpp"
#include "freqdis/tensor.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cctype>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

// Image files <-> [1, 3, H, W] float tensors in [0, 1]. Pixel values are taken as linear;
// no transfer function or colour profile is applied.

namespace freqdis::io {

    namespace detail {
        inline std::string lower_ext(const std::filesystem::path& p) {
            auto e = p.extension().string();
            std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            return e;
        }

        struct FileCloser {
            void operator()(std::FILE* f) const {
                if (f)
                    std::fclose(f);
            }
        };
        using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

        inline FilePtr open(const std::filesystem::path& path, const char* mode) {
            FilePtr f(std::fopen(path.string().c_str(), mode));
            if (!f)
                throw IoError("cannot open '" + path.string() + "'");
            return f;
        }

        [[noreturn]] inline void png_error_fn(png_structp png, png_const_charp msg) {
            auto* text = static_cast<std::string*>(png_get_error_ptr(png));
            if (text)
                *text = msg;
            png_longjmp(png, 1);
        }
        inline void png_warning_fn(png_structp, png_const_charp) {}

        inline Tensor<float> read_png(const std::filesystem::path& path) {
            auto f = open(path, "rb");
            unsigned char sig[8] = {};
            if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
                throw IoError("'" + path.string() + "' is not a PNG file");
            std::string err;
            png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
            png_infop info = png ? png_create_info_struct(png) : nullptr;
            if (!info) {
                png_destroy_read_struct(&png, nullptr, nullptr);
                throw IoError("libpng initialisation failed");
            }
            std::vector<unsigned char> buf;
            std::vector<png_bytep> rows;
            png_uint_32 w = 0, h = 0;
            int depth = 0;
            if (setjmp(png_jmpbuf(png))) {
                png_destroy_read_struct(&png, &info, nullptr);
                throw IoError("'" + path.string() + "': " + (err.empty() ? "corrupt PNG" : err));
            }
            png_init_io(png, f.get());
            png_set_sig_bytes(png, 8);
            png_read_info(png, info);
            int color = 0;
            png_get_IHDR(png, info, &w, &h, &depth, &color, nullptr, nullptr, nullptr);
            if (color == PNG_COLOR_TYPE_PALETTE)
                png_set_palette_to_rgb(png);
            if (color == PNG_COLOR_TYPE_GRAY && depth < 8)
                png_set_expand_gray_1_2_4_to_8(png);
            if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
                png_set_gray_to_rgb(png);
            if (color & PNG_COLOR_MASK_ALPHA)
                png_set_strip_alpha(png);
            if (depth == 16)
                png_set_swap(png); // little-endian samples in memory
            png_read_update_info(png, info);
            depth = png_get_bit_depth(png, info);
            const std::size_t rowbytes = png_get_rowbytes(png, info);
            buf.resize(rowbytes * h);
            rows.resize(h);
            for (png_uint_32 y = 0; y < h; ++y)
                rows[y] = buf.data() + y * rowbytes;
            png_read_image(png, rows.data());
            png_read_end(png, nullptr);
            png_destroy_read_struct(&png, &info, nullptr);

            const std::size_t hw = static_cast<std::size_t>(w) * h;
            std::vector<float> out(3 * hw);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    for (std::size_t c = 0; c < 3; ++c) {
                        const std::size_t i = (y * w + x) * 3 + c;
                        float v;
                        if (depth == 16) {
                            std::uint16_t s = static_cast<std::uint16_t>(buf[2 * i] | (buf[2 * i + 1] << 8));
                            v = static_cast<float>(s) / 65535.0f;
                        } else {
                            v = static_cast<float>(buf[i]) / 255.0f;
                        }
                        out[c * hw + y * w + x] = v;
                    }
            return Tensor<float>({1, 3, static_cast<std::int64_t>(h), static_cast<std::int64_t>(w)}, std::move(out));
        }

        inline void write_png(const Tensor<float>& img, const std::filesystem::path& path, int depth) {
            const auto h = static_cast<png_uint_32>(img.dim(2)), w = static_cast<png_uint_32>(img.dim(3));
            const std::size_t hw = static_cast<std::size_t>(w) * h, bps = depth == 16 ? 2 : 1;
            std::vector<unsigned char> buf(hw * 3 * bps);
            const float maxv = depth == 16 ? 65535.0f : 255.0f;
            const auto& d = img.data();
            for (std::size_t p = 0; p < hw; ++p)
                for (std::size_t c = 0; c < 3; ++c) {
                    const float v = std::clamp(d[c * hw + p], 0.0f, 1.0f);
                    const auto q = static_cast<unsigned>(std::lround(v * maxv));
                    if (depth == 16) {
                        buf[(p * 3 + c) * 2] = static_cast<unsigned char>(q >> 8);
                        buf[(p * 3 + c) * 2 + 1] = static_cast<unsigned char>(q & 0xff);
                    } else {
                        buf[p * 3 + c] = static_cast<unsigned char>(q);
                    }
                }
            auto f = open(path, "wb");
            std::string err;
            png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_error_fn, png_warning_fn);
            png_infop info = png ? png_create_info_struct(png) : nullptr;
            if (!info) {
                png_destroy_write_struct(&png, nullptr);
                throw IoError("libpng initialisation failed");
            }
            std::vector<png_bytep> rows(h);
            for (png_uint_32 y = 0; y < h; ++y)
                rows[y] = buf.data() + y * w * 3 * bps;
            if (setjmp(png_jmpbuf(png))) {
                png_destroy_write_struct(&png, &info);
                throw IoError("'" + path.string() + "': " + (err.empty() ? "PNG write failed" : err));
            }
            png_init_io(png, f.get());
            png_set_IHDR(png, info, w, h, depth, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                         PNG_FILTER_TYPE_DEFAULT);
            png_write_info(png, info);
            png_write_image(png, rows.data());
            png_write_end(png, nullptr);
            png_destroy_write_struct(&png, &info);
        }

        inline void skip_ppm_space(std::istream& in) {
            for (;;) {
                int c = in.peek();
                if (c == '#') {
                    std::string line;
                    std::getline(in, line);
                } else if (std::isspace(c)) {
                    in.get();
                } else {
                    return;
                }
            }
        }

        inline Tensor<float> read_ppm(const std::filesystem::path& path) {
            std::ifstream in(path, std::ios::binary);
            if (!in)
                throw IoError("cannot open '" + path.string() + "'");
            std::string magic;
            in >> magic;
            if (magic != "P6")
                throw IoError("'" + path.string() + "': only binary P6 PPM is supported");
            long w = 0, h = 0, maxval = 0;
            skip_ppm_space(in);
            in >> w;
            skip_ppm_space(in);
            in >> h;
            skip_ppm_space(in);
            in >> maxval;
            if (!in || w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
                throw IoError("'" + path.string() + "': bad PPM header");
            in.get();
            const std::size_t hw = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
            const std::size_t bps = maxval > 255 ? 2 : 1;
            std::vector<unsigned char> buf(hw * 3 * bps);
            if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
                throw IoError("'" + path.string() + "': truncated PPM data");
            std::vector<float> out(3 * hw);
            for (std::size_t p = 0; p < hw; ++p)
                for (std::size_t c = 0; c < 3; ++c) {
                    const std::size_t i = p * 3 + c;
                    const unsigned v = bps == 2 ? (buf[2 * i] << 8) | buf[2 * i + 1] : buf[i];
                    out[c * hw + p] = static_cast<float>(v) / static_cast<float>(maxval);
                }
            return Tensor<float>({1, 3, h, w}, std::move(out));
        }

        inline void write_ppm(const Tensor<float>& img, const std::filesystem::path& path) {
            const std::int64_t h = img.dim(2), w = img.dim(3);
            const std::size_t hw = static_cast<std::size_t>(h * w);
            std::vector<unsigned char> buf(hw * 3);
            for (std::size_t p = 0; p < hw; ++p)
                for (std::size_t c = 0; c < 3; ++c)
                    buf[p * 3 + c] =
                        static_cast<unsigned char>(std::lround(std::clamp(img.data()[c * hw + p], 0.0f, 1.0f) * 255.0f));
            std::ofstream out(path, std::ios::binary);
            if (!out)
                throw IoError("cannot open '" + path.string() + "' for writing");
            out << "P6\n" << w << " " << h << "\n255\n";
            out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
            if (!out)
                throw IoError("write to '" + path.string() + "' failed");
        }
    } // namespace detail

    /// PNG (8/16-bit, any colour type) or binary PPM, by extension.
    inline Tensor<float> load_image(const std::filesystem::path& path) {
        if (!std::filesystem::exists(path))
            throw IoError("no such file '" + path.string() + "'");
        const auto ext = detail::lower_ext(path);
        if (ext == ".png")
            return detail::read_png(path);
        if (ext == ".ppm" || ext == ".pnm")
            return detail::read_ppm(path);
        throw IoError("'" + path.string() + "': unsupported image format (use .png or .ppm)");
    }

    /// Values are clamped to [0, 1] and quantised. `depth` (8 or 16) applies to PNG only.
    inline void save_image(const Tensor<float>& img, const std::filesystem::path& path, int depth = 8) {
        if (img.rank() != 4 || img.dim(0) != 1 || img.dim(1) != 3)
            throw DimensionError("save_image: expected [1, 3, H, W], got " + to_string(img.shape()));
        if (depth != 8 && depth != 16)
            throw UsageError("save_image: bit depth must be 8 or 16");
        const auto ext = detail::lower_ext(path);
        if (ext == ".png")
            return detail::write_png(img, path, depth);
        if (ext == ".ppm" || ext == ".pnm")
            return detail::write_ppm(img, path);
        throw IoError("'" + path.string() + "': unsupported image format (use .png or .ppm)");
    }

    /// Smallest multiple of `m` that is >= v.
    inline std::int64_t round_up(std::int64_t v, std::int64_t m) { return (v + m - 1) / m * m; }

    /// Reflect-101 pads the bottom and right edges of [N, C, H, W] to (h, w).
    template <class T>
    Tensor<T> pad_to(const Tensor<T>& img, std::int64_t h, std::int64_t w) {
        const std::int64_t n = img.dim(0), c = img.dim(1), ih = img.dim(2), iw = img.dim(3);
        if (h < ih || w < iw)
            throw DimensionError("pad_to: target smaller than image");
        if ((h > ih && ih < 2) || (w > iw && iw < 2))
            throw DimensionError("pad_to: image " + to_string(img.shape()) + " too small to reflect-pad");
        auto reflect = [](std::int64_t i, std::int64_t len) {
            if (len == 1)
                return std::int64_t{0};
            const std::int64_t period = 2 * (len - 1);
            i %= period;
            return i < len ? i : period - i;
        };
        std::vector<T> out(static_cast<std::size_t>(n * c * h * w));
        const auto& d = img.data();
        for (std::int64_t p = 0; p < n * c; ++p)
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x = 0; x < w; ++x)
                    out[static_cast<std::size_t>((p * h + y) * w + x)] =
                        d[static_cast<std::size_t>((p * ih + reflect(y, ih)) * iw + reflect(x, iw))];
        return Tensor<T>({n, c, h, w}, std::move(out));
    }

    /// Top-left (h, w) crop.
    template <class T>
    Tensor<T> crop(const Tensor<T>& img, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w) {
        const std::int64_t n = img.dim(0), c = img.dim(1), ih = img.dim(2), iw = img.dim(3);
        if (y0 < 0 || x0 < 0 || y0 + h > ih || x0 + w > iw || h <= 0 || w <= 0)
            throw DimensionError("crop: window outside image " + to_string(img.shape()));
        std::vector<T> out(static_cast<std::size_t>(n * c * h * w));
        const auto& d = img.data();
        for (std::int64_t p = 0; p < n * c; ++p)
            for (std::int64_t y = 0; y < h; ++y)
                std::copy_n(d.begin() + (p * ih + y0 + y) * iw + x0, w, out.begin() + (p * h + y) * w);
        return Tensor<T>({n, c, h, w}, std::move(out));
    }

} // namespace freqdis::io
