// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/acca.hpp"
#include "freqdis/ldrm.hpp"
#include "freqdis/ops.hpp"
#include "freqdis/pyramid.hpp"
#include "freqdis/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

namespace freqdis::eval {

    // --------------------------------------------------------------------------------------------
    // Hashing

    inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
    inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

    inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= kFnvPrime;
        }
        return h;
    }

    inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = kFnvOffset) { return fnv1a(s.data(), s.size(), h); }

    inline std::string hex64(std::uint64_t v) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
        return buf;
    }

    // --------------------------------------------------------------------------------------------
    // Synthetic pairs

    struct Range {
        double lo = 0.0;
        double hi = 0.0;

        double draw(std::mt19937_64& rng) const {
            if (lo == hi)
                return lo;
            return std::uniform_real_distribution<double>(lo, hi)(rng);
        }
    };

    struct SynthSpec {
        Range gamma_dark{2.0, 3.5};
        Range gain{0.1, 0.4};
        Range noise_sigma{0.01, 0.05}; // Gaussian, added after darkening
        std::uint64_t seed = 7;

        void validate() const {
            if (gamma_dark.lo <= 0.0 || gain.lo < 0.0 || noise_sigma.lo < 0.0 || gamma_dark.hi < gamma_dark.lo ||
                gain.hi < gain.lo || noise_sigma.hi < noise_sigma.lo)
                throw ConfigError("synth: ranges must be ordered and non-negative (gamma positive)");
        }
    };

    /// Per-(seed, index, stream) generator; distinct streams decorrelate content from degradation.
    inline std::mt19937_64 pair_rng(std::uint64_t seed, std::uint64_t index, std::uint64_t stream) {
        std::uint64_t key[3] = {seed, index, stream};
        return std::mt19937_64(fnv1a(key, sizeof key));
    }

    namespace detail {
        struct Canvas {
            std::int64_t h, w;
            std::vector<double> px; // planar RGB

            double& at(int c, std::int64_t y, std::int64_t x) { return px[static_cast<std::size_t>((c * h + y) * w + x)]; }
        };

        inline void paint_gradient(Canvas& cv, std::mt19937_64& rng) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            double c0[3], c1[3];
            for (int c = 0; c < 3; ++c) {
                c0[c] = u(rng);
                c1[c] = u(rng);
            }
            const double ang = u(rng) * 2.0 * 3.141592653589793;
            const double dx = std::cos(ang), dy = std::sin(ang);
            for (std::int64_t y = 0; y < cv.h; ++y)
                for (std::int64_t x = 0; x < cv.w; ++x) {
                    const double t = 0.5 + 0.5 * ((x / double(cv.w) - 0.5) * dx + (y / double(cv.h) - 0.5) * dy) * 1.41;
                    for (int c = 0; c < 3; ++c)
                        cv.at(c, y, x) = c0[c] + (c1[c] - c0[c]) * std::clamp(t, 0.0, 1.0);
                }
        }

        inline void paint_checker(Canvas& cv, std::mt19937_64& rng) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const std::int64_t period = 2 + static_cast<std::int64_t>(u(rng) * 14.0);
            double a[3], b[3];
            for (int c = 0; c < 3; ++c) {
                a[c] = u(rng);
                b[c] = u(rng);
            }
            const double blend = 0.4 + 0.6 * u(rng);
            for (std::int64_t y = 0; y < cv.h; ++y)
                for (std::int64_t x = 0; x < cv.w; ++x) {
                    const bool on = ((y / period) + (x / period)) % 2 == 0;
                    for (int c = 0; c < 3; ++c)
                        cv.at(c, y, x) = (1.0 - blend) * cv.at(c, y, x) + blend * (on ? a[c] : b[c]);
                }
        }

        /// Smoothed noise at a random scale added on top of the canvas.
        inline void paint_texture(Canvas& cv, std::mt19937_64& rng) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const std::int64_t cell = 2 + static_cast<std::int64_t>(u(rng) * 10.0);
            const std::int64_t gh = cv.h / cell + 2, gw = cv.w / cell + 2;
            const double amp = 0.05 + 0.25 * u(rng);
            std::vector<double> grid(static_cast<std::size_t>(3 * gh * gw));
            for (auto& g : grid)
                g = u(rng) - 0.5;
            for (std::int64_t y = 0; y < cv.h; ++y)
                for (std::int64_t x = 0; x < cv.w; ++x) {
                    const double fy = y / double(cell), fx = x / double(cell);
                    const auto iy = static_cast<std::int64_t>(fy), ix = static_cast<std::int64_t>(fx);
                    const double ty = fy - iy, tx = fx - ix;
                    for (int c = 0; c < 3; ++c) {
                        auto g = [&](std::int64_t yy, std::int64_t xx) { return grid[static_cast<std::size_t>((c * gh + yy) * gw + xx)]; };
                        const double v = (1 - ty) * ((1 - tx) * g(iy, ix) + tx * g(iy, ix + 1)) +
                                         ty * ((1 - tx) * g(iy + 1, ix) + tx * g(iy + 1, ix + 1));
                        cv.at(c, y, x) += amp * v;
                    }
                }
        }

        /// Filled random convex-ish polygon (star-shaped around its centre).
        inline void paint_polygon(Canvas& cv, std::mt19937_64& rng) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            const int verts = 3 + static_cast<int>(u(rng) * 5.0);
            const double cy = u(rng) * cv.h, cx = u(rng) * cv.w;
            const double r0 = (0.1 + 0.3 * u(rng)) * std::min(cv.h, cv.w);
            std::vector<double> ang(static_cast<std::size_t>(verts)), rad(static_cast<std::size_t>(verts));
            for (int i = 0; i < verts; ++i) {
                ang[static_cast<std::size_t>(i)] = u(rng) * 2.0 * 3.141592653589793;
                rad[static_cast<std::size_t>(i)] = r0 * (0.6 + 0.4 * u(rng));
            }
            std::sort(ang.begin(), ang.end());
            double col[3];
            for (double& c : col)
                c = u(rng);
            auto inside = [&](double y, double x) {
                // Point-in-polygon by crossing number over the vertex ring.
                bool in = false;
                for (int i = 0, j = verts - 1; i < verts; j = i++) {
                    const double yi = cy + rad[i] * std::sin(ang[i]), xi = cx + rad[i] * std::cos(ang[i]);
                    const double yj = cy + rad[j] * std::sin(ang[j]), xj = cx + rad[j] * std::cos(ang[j]);
                    if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi)
                        in = !in;
                }
                return in;
            };
            for (std::int64_t y = 0; y < cv.h; ++y)
                for (std::int64_t x = 0; x < cv.w; ++x)
                    if (inside(y + 0.5, x + 0.5))
                        for (int c = 0; c < 3; ++c)
                            cv.at(c, y, x) = col[c];
        }
    } // namespace detail

    /// Procedural clean image in [0, 1]: a gradient base plus a random mix of checkerboard,
    /// smoothed-noise texture and polygons.
    inline Tensor<float> clean_image(std::int64_t h, std::int64_t w, std::uint64_t seed, std::uint64_t index) {
        if (h <= 0 || w <= 0)
            throw ConfigError("clean_image: size must be positive");
        auto rng = pair_rng(seed, index, 0);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        detail::Canvas cv{h, w, std::vector<double>(static_cast<std::size_t>(3 * h * w))};
        detail::paint_gradient(cv, rng);
        if (u(rng) < 0.35)
            detail::paint_checker(cv, rng);
        const int polys = static_cast<int>(u(rng) * 5.0);
        for (int i = 0; i < polys; ++i)
            detail::paint_polygon(cv, rng);
        if (u(rng) < 0.7)
            detail::paint_texture(cv, rng);
        std::vector<float> out(cv.px.size());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<float>(std::clamp(cv.px[i], 0.0, 1.0));
        return Tensor<float>({1, 3, h, w}, std::move(out));
    }

    struct SynthPair {
        Tensor<float> low;
        Tensor<float> gt;
    };

    /// low = clip(gain * clean^gamma + noise, 0, 1); gt = clean.
    inline SynthPair synth_pair(const Tensor<float>& clean, const SynthSpec& spec, std::uint64_t index) {
        spec.validate();
        for (float v : clean.data())
            if (v < 0.0f || v > 1.0f)
                throw ConfigError("synth_pair: clean image must lie in [0, 1]");
        auto rng = pair_rng(spec.seed, index, 1);
        const double gamma = spec.gamma_dark.draw(rng);
        const double gain = spec.gain.draw(rng);
        const double sigma = spec.noise_sigma.draw(rng);
        std::normal_distribution<double> noise(0.0, 1.0);
        std::vector<float> low(clean.vec().size());
        for (std::size_t i = 0; i < low.size(); ++i) {
            double v = gain * std::pow(static_cast<double>(clean.data()[i]), gamma);
            if (sigma > 0.0)
                v += sigma * noise(rng);
            low[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
        return {Tensor<float>(clean.shape(), std::move(low)), clean.detach()};
    }

    /// `count` procedural pairs of size x size, named pair_0000 ...
    inline training::Dataset synth_dataset(int count, std::int64_t size, const SynthSpec& spec) {
        training::Dataset out;
        for (int i = 0; i < count; ++i) {
            auto clean = clean_image(size, size, spec.seed, static_cast<std::uint64_t>(i));
            auto p = synth_pair(clean, spec, static_cast<std::uint64_t>(i));
            char name[32];
            std::snprintf(name, sizeof name, "pair_%04d", i);
            out.push_back({name, p.low, p.gt});
        }
        return out;
    }

    inline std::uint64_t dataset_hash(const training::Dataset& data) {
        std::uint64_t h = kFnvOffset;
        for (const auto& p : data) {
            h = fnv1a(p.low.data().data(), p.low.data().size() * sizeof(float), h);
            h = fnv1a(p.gt.data().data(), p.gt.data().size() * sizeof(float), h);
        }
        return h;
    }

    // --------------------------------------------------------------------------------------------
    // Metrics

    inline constexpr double kPsnrCap = 99.0;

    inline double psnr(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0) {
        if (a.shape() != b.shape())
            throw DimensionError("psnr: shapes " + to_string(a.shape()) + " vs " + to_string(b.shape()));
        double se = 0.0;
        for (std::size_t i = 0; i < a.data().size(); ++i) {
            const double d = static_cast<double>(a.data()[i]) - static_cast<double>(b.data()[i]);
            se += d * d;
        }
        const double mse = se / static_cast<double>(a.data().size());
        if (mse == 0.0)
            return kPsnrCap;
        return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
    }

    inline constexpr int kSsimWindow = 11;
    inline constexpr double kSsimSigma = 1.5;

    namespace detail {
        /// BT.601 luma of every image in an [N, 3, H, W] batch.
        inline std::vector<double> luma(const Tensor<float>& t, std::int64_t i) {
            const std::int64_t hw = t.dim(2) * t.dim(3);
            const float* p = t.data().data() + i * 3 * hw;
            std::vector<double> y(static_cast<std::size_t>(hw));
            for (std::int64_t k = 0; k < hw; ++k)
                y[static_cast<std::size_t>(k)] = 0.299 * p[k] + 0.587 * p[hw + k] + 0.114 * p[2 * hw + k];
            return y;
        }

        /// Valid-mode separable Gaussian filtering of an h x w plane.
        inline std::vector<double> filter_valid(const std::vector<double>& x, std::int64_t h, std::int64_t w,
                                                const std::vector<double>& g) {
            const auto k = static_cast<std::int64_t>(g.size());
            const std::int64_t oh = h - k + 1, ow = w - k + 1;
            std::vector<double> tmp(static_cast<std::size_t>(h * ow)), out(static_cast<std::size_t>(oh * ow));
            for (std::int64_t y = 0; y < h; ++y)
                for (std::int64_t x0 = 0; x0 < ow; ++x0) {
                    double acc = 0.0;
                    for (std::int64_t t = 0; t < k; ++t)
                        acc += g[static_cast<std::size_t>(t)] * x[static_cast<std::size_t>(y * w + x0 + t)];
                    tmp[static_cast<std::size_t>(y * ow + x0)] = acc;
                }
            for (std::int64_t y0 = 0; y0 < oh; ++y0)
                for (std::int64_t x0 = 0; x0 < ow; ++x0) {
                    double acc = 0.0;
                    for (std::int64_t t = 0; t < k; ++t)
                        acc += g[static_cast<std::size_t>(t)] * tmp[static_cast<std::size_t>((y0 + t) * ow + x0)];
                    out[static_cast<std::size_t>(y0 * ow + x0)] = acc;
                }
            return out;
        }
    } // namespace detail

    /// Single-scale SSIM on BT.601 luma: 11x11 Gaussian window (sigma 1.5), valid region,
    /// C1 = (0.01 peak)^2, C2 = (0.03 peak)^2; mean over the map (and over the batch).
    inline double ssim(const Tensor<float>& a, const Tensor<float>& b, double peak = 1.0) {
        if (a.shape() != b.shape())
            throw DimensionError("ssim: shapes " + to_string(a.shape()) + " vs " + to_string(b.shape()));
        if (a.rank() != 4 || a.dim(1) != 3)
            throw DimensionError("ssim: expected [N, 3, H, W], got " + to_string(a.shape()));
        const std::int64_t h = a.dim(2), w = a.dim(3);
        if (h < kSsimWindow || w < kSsimWindow)
            throw DimensionError("ssim: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than the " +
                                 std::to_string(kSsimWindow) + "x" + std::to_string(kSsimWindow) + " window");
        std::vector<double> g(kSsimWindow);
        double gs = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double d = i - kSsimWindow / 2;
            g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
            gs += g[static_cast<std::size_t>(i)];
        }
        for (auto& v : g)
            v /= gs;
        const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
        double total = 0.0;
        std::size_t count = 0;
        for (std::int64_t i = 0; i < a.dim(0); ++i) {
            const auto x = detail::luma(a, i), y = detail::luma(b, i);
            std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
            for (std::size_t k = 0; k < x.size(); ++k) {
                xx[k] = x[k] * x[k];
                yy[k] = y[k] * y[k];
                xy[k] = x[k] * y[k];
            }
            const auto mx = detail::filter_valid(x, h, w, g), my = detail::filter_valid(y, h, w, g);
            const auto sxx = detail::filter_valid(xx, h, w, g), syy = detail::filter_valid(yy, h, w, g);
            const auto sxy = detail::filter_valid(xy, h, w, g);
            for (std::size_t k = 0; k < mx.size(); ++k) {
                const double vx = sxx[k] - mx[k] * mx[k], vy = syy[k] - my[k] * my[k], cxy = sxy[k] - mx[k] * my[k];
                total += ((2 * mx[k] * my[k] + c1) * (2 * cxy + c2)) /
                         ((mx[k] * mx[k] + my[k] * my[k] + c1) * (vx + vy + c2));
                ++count;
            }
        }
        return total / static_cast<double>(count);
    }

    // --------------------------------------------------------------------------------------------
    // Reports

    struct EvalRow {
        std::string name;
        double psnr = 0.0;
        double ssim = 0.0;
    };

    struct EvalReport {
        double psnr_mean = 0.0;
        double ssim_mean = 0.0;
        std::vector<EvalRow> rows;
        std::string fingerprint;

        void write_csv(const std::string& path) const {
            std::ofstream out(path);
            if (!out)
                throw IoError("cannot write report '" + path + "'");
            out << "# fingerprint " << fingerprint << "\n";
            out << "name,psnr,ssim\n";
            out.precision(6);
            out << std::fixed;
            for (const auto& r : rows)
                out << r.name << ',' << r.psnr << ',' << r.ssim << '\n';
            out << "mean," << psnr_mean << ',' << ssim_mean << '\n';
        }
    };

    /// Maps a [1, 3, H, W] low-light image to an enhanced image of the same shape.
    using Enhancer = std::function<Tensor<float>(const Tensor<float>&)>;

    /// Worker count from FREQDIS_THREADS (default 1); results are independent of the count.
    inline int default_threads() {
        if (const char* env = std::getenv("FREQDIS_THREADS")) {
            try {
                return std::max(1, std::stoi(env));
            } catch (...) {
                throw ConfigError(std::string("FREQDIS_THREADS must be an integer, got '") + env + "'");
            }
        }
        return 1;
    }

    /// Scores `fn` over every pair; output is clamped to [0, 1] before scoring.
    inline EvalReport evaluate(const training::Dataset& data, const Enhancer& fn, const std::string& fingerprint = "",
                               int threads = 1) {
        EvalReport rep;
        rep.rows.resize(data.size());
        auto work = [&](std::size_t begin, std::size_t stride) {
            NoGradGuard no_grad;
            for (std::size_t i = begin; i < data.size(); i += stride) {
                auto out = ops::clamp(fn(data[i].low), 0.0f, 1.0f);
                rep.rows[i] = {data[i].name, psnr(out, data[i].gt), ssim(out, data[i].gt)};
            }
        };
        const auto n = static_cast<std::size_t>(std::max(1, threads));
        if (n == 1) {
            work(0, 1);
        } else {
            std::vector<std::thread> pool;
            std::vector<std::exception_ptr> errors(n);
            for (std::size_t t = 0; t < n; ++t)
                pool.emplace_back([&, t] {
                    try {
                        work(t, n);
                    } catch (...) {
                        errors[t] = std::current_exception();
                    }
                });
            for (auto& th : pool)
                th.join();
            for (auto& e : errors)
                if (e)
                    std::rethrow_exception(e);
        }
        for (const auto& r : rep.rows) {
            rep.psnr_mean += r.psnr;
            rep.ssim_mean += r.ssim;
        }
        if (!rep.rows.empty()) {
            rep.psnr_mean /= static_cast<double>(rep.rows.size());
            rep.ssim_mean /= static_cast<double>(rep.rows.size());
        }
        rep.fingerprint = fingerprint.empty() ? hex64(dataset_hash(data)) : fingerprint;
        return rep;
    }

    inline double median(std::vector<double> v) {
        if (v.empty())
            throw UsageError("median of an empty list");
        std::sort(v.begin(), v.end());
        const std::size_t m = v.size() / 2;
        return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    }

    // --------------------------------------------------------------------------------------------
    // Ablations

    /// One trained configuration scored on one seed.
    struct AblationCell {
        std::string config;
        std::uint64_t seed = 0;
        double psnr = 0.0;
        double ssim = 0.0;
        double train_seconds = 0.0;
    };

    struct AblationTable {
        std::string suite;
        std::vector<std::string> configs; // row order
        std::vector<AblationCell> cells;

        std::vector<double> psnr_of(const std::string& config) const {
            std::vector<double> v;
            for (const auto& c : cells)
                if (c.config == config)
                    v.push_back(c.psnr);
            return v;
        }

        double median_psnr(const std::string& config) const {
            auto v = psnr_of(config);
            if (v.empty())
                throw ConfigError("ablation '" + suite + "': no results for '" + config + "'");
            return median(v);
        }

        double median_ssim(const std::string& config) const {
            std::vector<double> v;
            for (const auto& c : cells)
                if (c.config == config)
                    v.push_back(c.ssim);
            return median(v);
        }

        /// One row per configuration: median PSNR/SSIM plus per-seed PSNR.
        std::string summary_csv() const {
            std::ostringstream out;
            out.precision(4);
            out << std::fixed;
            out << "config,median_psnr,median_ssim,per_seed_psnr\n";
            for (const auto& cfg : configs) {
                out << cfg << ',' << median_psnr(cfg) << ',' << median_ssim(cfg) << ',';
                bool first = true;
                for (double p : psnr_of(cfg)) {
                    out << (first ? "" : " ") << p;
                    first = false;
                }
                out << '\n';
            }
            return out.str();
        }

        std::string cells_csv() const {
            std::ostringstream out;
            out.precision(4);
            out << std::fixed;
            out << "config,seed,psnr,ssim,train_seconds\n";
            for (const auto& c : cells)
                out << c.config << ',' << c.seed << ',' << c.psnr << ',' << c.ssim << ',' << c.train_seconds << '\n';
            return out.str();
        }
    };

    /// A trained model set for one configuration, or nothing when weights are missing.
    using ModelSource = std::function<std::optional<Enhancer>(std::uint64_t seed)>;

    /// Scores every (configuration, seed); a configuration without weights is a config error.
    inline AblationTable ablation_report(const std::string& suite, const training::Dataset& test,
                                         const std::vector<std::pair<std::string, ModelSource>>& configs,
                                         const std::vector<std::uint64_t>& seeds, int threads = 1) {
        AblationTable t;
        t.suite = suite;
        for (const auto& [name, source] : configs) {
            t.configs.push_back(name);
            for (auto seed : seeds) {
                auto fn = source(seed);
                if (!fn)
                    throw ConfigError("ablation '" + suite + "': missing weights for '" + name + "' seed " +
                                      std::to_string(seed));
                auto rep = evaluate(test, *fn, "", threads);
                t.cells.push_back({name, seed, rep.psnr_mean, rep.ssim_mean, 0.0});
            }
        }
        return t;
    }

    inline const std::vector<std::string>& suite_names() {
        static const std::vector<std::string> names{"li", "k", "alpha", "freeze"};
        return names;
    }

    /// Trains and caches every model an ablation suite needs. Models for one seed share the
    /// phase-1 adjuster; restorers are keyed by (seed, levels, alpha).
    class Experiment {
    public:
        Experiment(training::Dataset train, training::Dataset test, training::TrainConfig base, int threads = 1)
            : train_(std::move(train)), test_(std::move(test)), base_(std::move(base)), threads_(threads) {
            training::check_dataset(train_, "experiment");
            training::check_dataset(test_, "experiment");
        }

        /// Called after each model is trained: (label, seed, seconds).
        std::function<void(const std::string&, std::uint64_t, double)> on_trained;

        const training::Dataset& test() const { return test_; }
        const training::TrainConfig& base() const { return base_; }

        const acca::AccaWeights<float>& adjuster(std::uint64_t seed) {
            auto it = acca_.find(seed);
            if (it == acca_.end()) {
                auto cfg = with_seed(seed);
                training::History h;
                auto w = training::train_acca(train_, cfg, &h);
                notify("acca", seed, h.seconds);
                it = acca_.emplace(seed, std::move(w)).first;
            }
            return it->second;
        }

        const ldrm::Backbone<float>& restorer(std::uint64_t seed, int levels, double alpha) {
            const auto key = std::make_tuple(seed, levels, alpha);
            auto it = ldrm_.find(key);
            if (it == ldrm_.end()) {
                auto cfg = with_seed(seed);
                cfg.levels = levels;
                cfg.alpha = alpha;
                const auto& a = adjuster(seed);
                training::History h;
                auto net = training::train_ldrm(train_, a, cfg, &h);
                notify("ldrm K=" + std::to_string(levels) + " alpha=" + format_alpha(alpha), seed, h.seconds);
                it = ldrm_.emplace(key, std::move(net)).first;
            }
            return *it->second;
        }

        const training::JointResult& joint(std::uint64_t seed) {
            auto it = e2e_.find(seed);
            if (it == e2e_.end()) {
                auto cfg = with_seed(seed);
                cfg.freeze_acca = false;
                training::History h;
                auto r = training::train_end_to_end(train_, adjuster(seed), cfg, &h);
                notify("e2e", seed, h.seconds);
                it = e2e_.emplace(seed, std::move(r)).first;
            }
            return it->second;
        }

        const ldrm::Backbone<float>& unified(std::uint64_t seed) {
            auto it = unified_.find(seed);
            if (it == unified_.end()) {
                training::History h;
                auto net = training::train_unified(train_, with_seed(seed), &h);
                notify("unified", seed, h.seconds);
                it = unified_.emplace(seed, std::move(net)).first;
            }
            return *it->second;
        }

        Enhancer coarse_enhancer(std::uint64_t seed) {
            const auto* a = &adjuster(seed);
            const auto acfg = base_.acca();
            return [a, acfg](const Tensor<float>& x) { return acca::acca_forward(x, *a, acfg); };
        }

        Enhancer full_enhancer(std::uint64_t seed, int levels, double alpha) {
            const auto* a = &adjuster(seed);
            const auto* net = &restorer(seed, levels, alpha);
            auto cfg = base_;
            cfg.levels = levels;
            return [a, net, cfg](const Tensor<float>& x) {
                return ldrm::enhance(x, *a, cfg.acca(), *net, cfg.ldrm()).output;
            };
        }

        Enhancer joint_enhancer(std::uint64_t seed) {
            const auto* r = &joint(seed);
            auto cfg = base_;
            return [r, cfg](const Tensor<float>& x) {
                return ldrm::enhance(x, r->acca, cfg.acca(), *r->net, cfg.ldrm()).output;
            };
        }

        Enhancer unified_enhancer(std::uint64_t seed) {
            const auto* net = &unified(seed);
            return [net](const Tensor<float>& x) { return ldrm::unified_forward(x, *net); };
        }

        /// Configurations of a named suite: li, k, alpha or freeze.
        std::vector<std::pair<std::string, ModelSource>> suite(const std::string& name) {
            std::vector<std::pair<std::string, ModelSource>> out;
            const int k = base_.levels;
            const double alpha = base_.alpha;
            auto src = [](auto f) -> ModelSource { return [f](std::uint64_t s) { return std::optional<Enhancer>(f(s)); }; };
            if (name == "li") {
                out.emplace_back("unified", src([this](auto s) { return unified_enhancer(s); }));
                out.emplace_back("coarse_only", src([this](auto s) { return coarse_enhancer(s); }));
                out.emplace_back("full_without_li", src([this, k](auto s) { return full_enhancer(s, k, 0.0); }));
                out.emplace_back("full_with_li", src([this, k, alpha](auto s) { return full_enhancer(s, k, alpha); }));
            } else if (name == "freeze") {
                out.emplace_back("frozen", src([this, k, alpha](auto s) { return full_enhancer(s, k, alpha); }));
                out.emplace_back("end_to_end", src([this](auto s) { return joint_enhancer(s); }));
            } else if (name == "k") {
                for (int kk : {3, 4, 5, 6})
                    out.emplace_back("K=" + std::to_string(kk),
                                     src([this, kk, alpha](auto s) { return full_enhancer(s, kk, alpha); }));
            } else if (name == "alpha") {
                for (double a : {0.0, 0.5, 1.0, 2.0})
                    out.emplace_back("alpha=" + format_alpha(a),
                                     src([this, k, a](auto s) { return full_enhancer(s, k, a); }));
            } else {
                throw UsageError("unknown ablation suite '" + name + "' (expected li, k, alpha or freeze)");
            }
            return out;
        }

        AblationTable run(const std::string& name, const std::vector<std::uint64_t>& seeds) {
            return ablation_report(name, test_, suite(name), seeds, threads_);
        }

        static std::string format_alpha(double a) {
            std::ostringstream s;
            s << a;
            return s.str();
        }

    private:
        training::TrainConfig with_seed(std::uint64_t seed) const {
            auto c = base_;
            c.seed = seed;
            return c;
        }

        void notify(const std::string& what, std::uint64_t seed, double seconds) const {
            if (on_trained)
                on_trained(what, seed, seconds);
        }

        training::Dataset train_, test_;
        training::TrainConfig base_;
        int threads_;
        std::map<std::uint64_t, acca::AccaWeights<float>> acca_;
        std::map<std::tuple<std::uint64_t, int, double>, std::unique_ptr<ldrm::Backbone<float>>> ldrm_;
        std::map<std::uint64_t, training::JointResult> e2e_;
        std::map<std::uint64_t, std::unique_ptr<ldrm::Backbone<float>>> unified_;
    };

} // namespace freqdis::eval
