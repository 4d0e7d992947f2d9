// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/tensor.hpp"

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

// Differentiable operations on NCHW tensors. Every op validates shapes, rejects non-finite
// results and records a backward closure when any input requires a gradient.

namespace freqdis::ops {

    enum class PadMode { zero, reflect };

    enum class BinaryOp { add, sub, mul };

    struct Conv2dOptions {
        int stride = 1;
        int padding = 0;
        PadMode pad_mode = PadMode::zero;
        int groups = 1;
    };

    namespace detail {
        using freqdis::detail::count_macs;
        using freqdis::detail::grad_of;
        using freqdis::detail::make_result;

        template <class T>
        using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

        inline void require_rank(const Shape& s, std::size_t rank, const char* op) {
            if (s.size() != rank)
                throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                                     to_string(s));
        }

        /// Reflect-101 index (edge sample not repeated). Requires |overshoot| < n.
        inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
            if (n == 1)
                return 0;
            while (i < 0 || i >= n) {
                if (i < 0)
                    i = -i;
                if (i >= n)
                    i = 2 * (n - 1) - i;
            }
            return i;
        }

        /// For each (output position, tap) the source index along one axis, or -1 for a zero tap.
        struct AxisMap {
            std::int64_t out = 0;
            std::int64_t taps = 0;
            int stride = 1;
            std::vector<std::int64_t> src;
            // Per tap, the output range [lo, hi) where src == o * stride + offset (no padding involved).
            std::vector<std::int64_t> lo, hi, offset;

            std::int64_t at(std::int64_t o, std::int64_t k) const { return src[static_cast<std::size_t>(o * taps + k)]; }

            void finish() {
                lo.assign(static_cast<std::size_t>(taps), 0);
                hi.assign(static_cast<std::size_t>(taps), 0);
                offset.assign(static_cast<std::size_t>(taps), 0);
                for (std::int64_t k = 0; k < taps; ++k) {
                    const auto uk = static_cast<std::size_t>(k);
                    // Largest run of outputs whose source follows the affine rule.
                    std::int64_t best_lo = 0, best_len = 0;
                    for (std::int64_t o = 0; o < out;) {
                        const std::int64_t off = at(o, k) - o * stride;
                        std::int64_t e = o;
                        while (e < out && at(e, k) >= 0 && at(e, k) - e * stride == off)
                            ++e;
                        if (at(o, k) >= 0 && e - o > best_len) {
                            best_lo = o;
                            best_len = e - o;
                            offset[uk] = off;
                        }
                        o = e > o ? e : o + 1;
                    }
                    lo[uk] = best_lo;
                    hi[uk] = best_lo + best_len;
                }
            }
        };

        inline AxisMap padded_axis(std::int64_t in, std::int64_t k, int stride, int pad, PadMode mode) {
            AxisMap m;
            m.taps = k;
            m.stride = stride;
            m.out = (in + 2 * pad - k) / stride + 1;
            m.src.resize(static_cast<std::size_t>(m.out * k));
            for (std::int64_t o = 0; o < m.out; ++o) {
                for (std::int64_t t = 0; t < k; ++t) {
                    std::int64_t i = o * stride - pad + t;
                    if (i < 0 || i >= in)
                        i = mode == PadMode::reflect ? reflect_index(i, in) : -1;
                    m.src[static_cast<std::size_t>(o * k + t)] = i;
                }
            }
            m.finish();
            return m;
        }

        // Stride-1 taps centred on the output pixel, cut off at the border of its window.
        inline AxisMap window_axis(std::int64_t in, std::int64_t k, std::int64_t window) {
            AxisMap m;
            m.taps = k;
            m.out = in;
            m.src.resize(static_cast<std::size_t>(in * k));
            const std::int64_t half = k / 2;
            for (std::int64_t o = 0; o < in; ++o) {
                for (std::int64_t t = 0; t < k; ++t) {
                    std::int64_t i = o + t - half;
                    bool ok = i >= 0 && i < in && (i / window) == (o / window);
                    m.src[static_cast<std::size_t>(o * k + t)] = ok ? i : -1;
                }
            }
            m.finish();
            return m;
        }

        template <class T>
        void im2col(const T* x, std::int64_t channels, std::int64_t h, std::int64_t w, const AxisMap& ym,
                    const AxisMap& xm, T* col) {
            const std::int64_t p = ym.out * xm.out;
            for (std::int64_t c = 0; c < channels; ++c) {
                const T* plane = x + c * h * w;
                for (std::int64_t ky = 0; ky < ym.taps; ++ky) {
                    for (std::int64_t kx = 0; kx < xm.taps; ++kx) {
                        T* row = col + ((c * ym.taps + ky) * xm.taps + kx) * p;
                        for (std::int64_t oy = 0; oy < ym.out; ++oy) {
                            const std::int64_t sy = ym.at(oy, ky);
                            T* dst = row + oy * xm.out;
                            if (sy < 0) {
                                std::fill(dst, dst + xm.out, T(0));
                                continue;
                            }
                            const T* src_row = plane + sy * w;
                            const auto ukx = static_cast<std::size_t>(kx);
                            const std::int64_t lo = xm.lo[ukx], hi = xm.hi[ukx], off = xm.offset[ukx];
                            for (std::int64_t ox = 0; ox < lo; ++ox) {
                                const std::int64_t sx = xm.at(ox, kx);
                                dst[ox] = sx < 0 ? T(0) : src_row[sx];
                            }
                            if (xm.stride == 1) {
                                std::copy(src_row + lo + off, src_row + hi + off, dst + lo);
                            } else {
                                for (std::int64_t ox = lo; ox < hi; ++ox)
                                    dst[ox] = src_row[ox * xm.stride + off];
                            }
                            for (std::int64_t ox = hi; ox < xm.out; ++ox) {
                                const std::int64_t sx = xm.at(ox, kx);
                                dst[ox] = sx < 0 ? T(0) : src_row[sx];
                            }
                        }
                    }
                }
            }
        }

        template <class T>
        void col2im(const T* col, std::int64_t channels, std::int64_t h, std::int64_t w, const AxisMap& ym,
                    const AxisMap& xm, T* gx) {
            const std::int64_t p = ym.out * xm.out;
            for (std::int64_t c = 0; c < channels; ++c) {
                T* plane = gx + c * h * w;
                for (std::int64_t ky = 0; ky < ym.taps; ++ky) {
                    for (std::int64_t kx = 0; kx < xm.taps; ++kx) {
                        const T* row = col + ((c * ym.taps + ky) * xm.taps + kx) * p;
                        for (std::int64_t oy = 0; oy < ym.out; ++oy) {
                            const std::int64_t sy = ym.at(oy, ky);
                            if (sy < 0)
                                continue;
                            const T* src = row + oy * xm.out;
                            T* dst_row = plane + sy * w;
                            const auto ukx = static_cast<std::size_t>(kx);
                            const std::int64_t lo = xm.lo[ukx], hi = xm.hi[ukx], off = xm.offset[ukx];
                            for (std::int64_t ox = 0; ox < lo; ++ox) {
                                const std::int64_t sx = xm.at(ox, kx);
                                if (sx >= 0)
                                    dst_row[sx] += src[ox];
                            }
                            for (std::int64_t ox = lo; ox < hi; ++ox)
                                dst_row[ox * xm.stride + off] += src[ox];
                            for (std::int64_t ox = hi; ox < xm.out; ++ox) {
                                const std::int64_t sx = xm.at(ox, kx);
                                if (sx >= 0)
                                    dst_row[sx] += src[ox];
                            }
                        }
                    }
                }
            }
        }

        template <class T>
        Tensor<T> conv_core(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, AxisMap ym, AxisMap xm,
                            int groups, std::string_view name) {
            const auto& xs = x.shape();
            const auto& ws = w.shape();
            const std::int64_t n = xs[0], cin = xs[1], h = xs[2], wd = xs[3];
            const std::int64_t cout = ws[0], cin_g = ws[1], kh = ws[2], kw = ws[3];
            const std::int64_t cout_g = cout / groups;
            const std::int64_t kc = cin_g * kh * kw;
            const std::int64_t ho = ym.out, wo = xm.out, p = ho * wo;

            std::vector<T> out(static_cast<std::size_t>(n * cout * p));
            std::vector<T> col(static_cast<std::size_t>(kc * p));
            for (std::int64_t in = 0; in < n; ++in) {
                for (std::int64_t g = 0; g < groups; ++g) {
                    const T* xg = x.data().data() + (in * cin + g * cin_g) * h * wd;
                    im2col(xg, cin_g, h, wd, ym, xm, col.data());
                    Eigen::Map<const RowMat<T>> wmat(w.data().data() + g * cout_g * kc, cout_g, kc);
                    Eigen::Map<const RowMat<T>> cmat(col.data(), kc, p);
                    Eigen::Map<RowMat<T>> omat(out.data() + (in * cout + g * cout_g) * p, cout_g, p);
                    omat.noalias() = wmat * cmat;
                }
                if (b.defined()) {
                    for (std::int64_t co = 0; co < cout; ++co) {
                        T* o = out.data() + (in * cout + co) * p;
                        const T bv = b.data()[static_cast<std::size_t>(co)];
                        for (std::int64_t i = 0; i < p; ++i)
                            o[i] += bv;
                    }
                }
            }
            count_macs(static_cast<std::uint64_t>(n * cout * kc * p));

            std::vector<std::shared_ptr<Node<T>>> inputs{x.node_ptr(), w.node_ptr()};
            if (b.defined())
                inputs.push_back(b.node_ptr());
            return make_result<T>(
                Shape{n, cout, ho, wo}, std::move(out), name, std::move(inputs),
                [=](Node<T>& self) {
                    const auto& xn = self.inputs[0];
                    const auto& wn = self.inputs[1];
                    T* gx = grad_of(xn);
                    T* gw = grad_of(wn);
                    T* gb = self.inputs.size() > 2 ? grad_of(self.inputs[2]) : nullptr;
                    const T* go = self.grad.data();
                    std::vector<T> colbuf(static_cast<std::size_t>(kc * p));
                    for (std::int64_t in = 0; in < n; ++in) {
                        for (std::int64_t g = 0; g < groups; ++g) {
                            Eigen::Map<const RowMat<T>> gomat(go + (in * cout + g * cout_g) * p, cout_g, p);
                            if (gw) {
                                const T* xg = xn->data.data() + (in * cin + g * cin_g) * h * wd;
                                im2col(xg, cin_g, h, wd, ym, xm, colbuf.data());
                                Eigen::Map<const RowMat<T>> cmat(colbuf.data(), kc, p);
                                Eigen::Map<RowMat<T>> gwmat(gw + g * cout_g * kc, cout_g, kc);
                                gwmat.noalias() += gomat * cmat.transpose();
                            }
                            if (gx) {
                                Eigen::Map<const RowMat<T>> wmat(wn->data.data() + g * cout_g * kc, cout_g, kc);
                                Eigen::Map<RowMat<T>> gcol(colbuf.data(), kc, p);
                                gcol.noalias() = wmat.transpose() * gomat;
                                col2im(colbuf.data(), cin_g, h, wd, ym, xm, gx + (in * cin + g * cin_g) * h * wd);
                            }
                        }
                        if (gb) {
                            for (std::int64_t co = 0; co < cout; ++co) {
                                const T* o = go + (in * cout + co) * p;
                                T acc = T(0);
                                for (std::int64_t i = 0; i < p; ++i)
                                    acc += o[i];
                                gb[co] += acc;
                            }
                        }
                    }
                });
        }

        template <class T>
        void check_conv_args(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int groups, const char* op) {
            require_rank(x.shape(), 4, op);
            require_rank(w.shape(), 4, op);
            if (groups <= 0 || x.dim(1) % groups != 0 || w.dim(0) % groups != 0)
                throw ConfigError(std::string(op) + ": groups=" + std::to_string(groups) + " must divide input channels " +
                                  std::to_string(x.dim(1)) + " and output channels " + std::to_string(w.dim(0)));
            if (w.dim(1) * groups != x.dim(1))
                throw DimensionError(std::string(op) + ": weight " + to_string(w.shape()) + " expects " +
                                     std::to_string(w.dim(1) * groups) + " input channels, got " +
                                     to_string(x.shape()));
            if (b.defined() && (b.rank() != 1 || b.dim(0) != w.dim(0)))
                throw DimensionError(std::string(op) + ": bias shape " + to_string(b.shape()) + " does not match " +
                                     std::to_string(w.dim(0)) + " output channels");
        }

        /// Index of b for every element of a under the trailing-one broadcast rule.
        inline std::vector<std::int64_t> broadcast_index(const Shape& a, const Shape& b) {
            std::vector<std::int64_t> idx(static_cast<std::size_t>(numel(a)));
            std::vector<std::int64_t> bstride(a.size(), 0);
            std::int64_t s = 1;
            for (std::size_t d = a.size(); d-- > 0;) {
                bstride[d] = b[d] == 1 ? 0 : s;
                s *= b[d];
            }
            std::vector<std::int64_t> counter(a.size(), 0);
            std::int64_t bi = 0;
            for (std::size_t i = 0; i < idx.size(); ++i) {
                idx[i] = bi;
                for (std::size_t d = a.size(); d-- > 0;) {
                    ++counter[d];
                    bi += bstride[d];
                    if (counter[d] < a[d])
                        break;
                    bi -= bstride[d] * a[d];
                    counter[d] = 0;
                }
            }
            return idx;
        }

        inline bool broadcastable(const Shape& a, const Shape& b) {
            if (numel(b) == 1)
                return true;
            if (a.size() != b.size())
                return false;
            for (std::size_t d = 0; d < a.size(); ++d)
                if (b[d] != a[d] && b[d] != 1)
                    return false;
            return true;
        }

        template <class T, class Fwd, class Dfdx>
        Tensor<T> unary(const Tensor<T>& x, std::string_view name, Fwd fwd, Dfdx dfdx) {
            std::vector<T> out(x.vec().size());
            for (std::size_t i = 0; i < out.size(); ++i)
                out[i] = fwd(x.vec()[i]);
            return make_result<T>(x.shape(), std::move(out), name, {x.node_ptr()}, [=](Node<T>& self) {
                const auto& xn = self.inputs[0];
                T* gx = grad_of(xn);
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    gx[i] += self.grad[i] * dfdx(xn->data[i], self.data[i]);
            });
        }

        /// Per-axis bilinear sampling table, align-corners=false with half-pixel centres.
        struct LerpAxis {
            std::vector<std::int64_t> i0, i1;
            std::vector<double> w1;
        };

        inline LerpAxis lerp_axis(std::int64_t in, std::int64_t out) {
            LerpAxis a;
            a.i0.resize(static_cast<std::size_t>(out));
            a.i1.resize(static_cast<std::size_t>(out));
            a.w1.resize(static_cast<std::size_t>(out));
            const double scale = static_cast<double>(in) / static_cast<double>(out);
            for (std::int64_t o = 0; o < out; ++o) {
                double src = std::max(0.0, (static_cast<double>(o) + 0.5) * scale - 0.5);
                auto i0 = std::min<std::int64_t>(static_cast<std::int64_t>(src), in - 1);
                auto i1 = std::min<std::int64_t>(i0 + 1, in - 1);
                a.i0[static_cast<std::size_t>(o)] = i0;
                a.i1[static_cast<std::size_t>(o)] = i1;
                a.w1[static_cast<std::size_t>(o)] = src - static_cast<double>(i0);
            }
            return a;
        }

        // One 1-D reflect-padded correlation pass along the last (axis=3) or row (axis=2) axis.
        template <class T>
        void blur_pass(const T* src, T* dst, std::int64_t planes, std::int64_t h, std::int64_t w,
                       std::span<const double> taps, int axis, bool adjoint) {
            const auto r = static_cast<std::int64_t>(taps.size() / 2);
            const std::int64_t len = axis == 3 ? w : h;
            for (std::int64_t pl = 0; pl < planes; ++pl) {
                const T* s = src + pl * h * w;
                T* d = dst + pl * h * w;
                for (std::int64_t y = 0; y < h; ++y) {
                    for (std::int64_t x = 0; x < w; ++x) {
                        const std::int64_t pos = axis == 3 ? x : y;
                        for (std::int64_t t = -r; t <= r; ++t) {
                            const std::int64_t q = reflect_index(pos + t, len);
                            const std::int64_t qi = axis == 3 ? y * w + q : q * w + x;
                            const T tap = static_cast<T>(taps[static_cast<std::size_t>(t + r)]);
                            if (adjoint)
                                d[qi] += tap * s[y * w + x];
                            else
                                d[y * w + x] += tap * s[qi];
                        }
                    }
                }
            }
        }
    } // namespace detail

    // ----------------------------------------------------------------------------------------
    // Elementwise

    /// Pointwise a (op) b. b must equal a's shape, be a scalar, or have size-1 dims where it broadcasts.
    template <class T>
    Tensor<T> elementwise(const Tensor<T>& a, const Tensor<T>& b, BinaryOp op) {
        using namespace detail;
        if (!broadcastable(a.shape(), b.shape()))
            throw DimensionError("elementwise: cannot broadcast " + to_string(b.shape()) + " onto " +
                                 to_string(a.shape()));
        const auto& av = a.vec();
        const auto& bv = b.vec();
        const bool same = b.shape() == a.shape();
        std::vector<std::int64_t> bidx;
        if (!same) {
            if (bv.size() == 1)
                bidx.assign(av.size(), 0);
            else
                bidx = broadcast_index(a.shape(), b.shape());
        }
        std::vector<T> out(av.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            const T bval = same ? bv[i] : bv[static_cast<std::size_t>(bidx[i])];
            switch (op) {
            case BinaryOp::add: out[i] = av[i] + bval; break;
            case BinaryOp::sub: out[i] = av[i] - bval; break;
            case BinaryOp::mul: out[i] = av[i] * bval; break;
            }
        }
        if (op == BinaryOp::mul)
            count_macs(out.size());
        const char* name = op == BinaryOp::add ? "add" : op == BinaryOp::sub ? "sub" : "mul";
        return make_result<T>(a.shape(), std::move(out), name, {a.node_ptr(), b.node_ptr()},
                              [op, same, bidx = std::move(bidx)](Node<T>& self) {
                                  const auto& an = self.inputs[0];
                                  const auto& bn = self.inputs[1];
                                  T* ga = grad_of(an);
                                  T* gb = grad_of(bn);
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                      const std::size_t j = same ? i : static_cast<std::size_t>(bidx[i]);
                                      const T g = self.grad[i];
                                      switch (op) {
                                      case BinaryOp::add:
                                          if (ga) ga[i] += g;
                                          if (gb) gb[j] += g;
                                          break;
                                      case BinaryOp::sub:
                                          if (ga) ga[i] += g;
                                          if (gb) gb[j] -= g;
                                          break;
                                      case BinaryOp::mul:
                                          if (ga) ga[i] += g * bn->data[j];
                                          if (gb) gb[j] += g * an->data[i];
                                          break;
                                      }
                                  }
                              });
    }

    template <class T>
    Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, BinaryOp::add); }
    template <class T>
    Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, BinaryOp::sub); }
    template <class T>
    Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return elementwise(a, b, BinaryOp::mul); }

    template <class T>
    Tensor<T> add_scalar(const Tensor<T>& x, T c) {
        return detail::unary(x, "add_scalar", [c](T v) { return v + c; }, [](T, T) { return T(1); });
    }

    template <class T>
    Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
        return detail::unary(x, "mul_scalar", [c](T v) { return v * c; }, [c](T, T) { return c; });
    }

    template <class T>
    Tensor<T> relu(const Tensor<T>& x) {
        return detail::unary(
            x, "relu", [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
    }

    template <class T>
    Tensor<T> tanh(const Tensor<T>& x) {
        return detail::unary(x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
    }

    template <class T>
    Tensor<T> sigmoid(const Tensor<T>& x) {
        return detail::unary(
            x, "sigmoid", [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
    }

    /// Clamp to [lo, hi]; gradient passes where lo <= x <= hi.
    template <class T>
    Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
        return detail::unary(
            x, "clamp", [lo, hi](T v) { return std::clamp(v, lo, hi); },
            [lo, hi](T v, T) { return (v >= lo && v <= hi) ? T(1) : T(0); });
    }

    template <class T>
    Tensor<T> clamp_min(const Tensor<T>& x, T lo) {
        return detail::unary(
            x, "clamp_min", [lo](T v) { return v < lo ? lo : v; }, [lo](T v, T) { return v >= lo ? T(1) : T(0); });
    }

    /// Default lower bound applied to the base of pow_gamma.
    inline constexpr double kPowEpsilon = 1e-4;

    /// Pointwise max(x, eps)^gamma. gamma is a scalar or broadcasts over x (e.g. [N,1,1,1] or [N,C,1,1]).
    template <class T>
    Tensor<T> pow_gamma(const Tensor<T>& x, const Tensor<T>& gamma, T eps = T(kPowEpsilon)) {
        using namespace detail;
        if (!broadcastable(x.shape(), gamma.shape()))
            throw DimensionError("pow_gamma: gamma " + to_string(gamma.shape()) + " does not broadcast onto " +
                                 to_string(x.shape()));
        for (T g : gamma.vec())
            if (!(g > T(0)))
                throw ConfigError("pow_gamma: gamma must be positive, got " + std::to_string(static_cast<double>(g)));
        std::vector<std::int64_t> gidx = gamma.numel() == 1 ? std::vector<std::int64_t>(x.vec().size(), 0)
                                                            : broadcast_index(x.shape(), gamma.shape());
        std::vector<T> out(x.vec().size());
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = std::pow(std::max(x.vec()[i], eps), gamma.vec()[static_cast<std::size_t>(gidx[i])]);
        return make_result<T>(x.shape(), std::move(out), "pow_gamma", {x.node_ptr(), gamma.node_ptr()},
                              [eps, gidx = std::move(gidx)](Node<T>& self) {
                                  const auto& xn = self.inputs[0];
                                  const auto& gn = self.inputs[1];
                                  T* gx = grad_of(xn);
                                  T* gg = grad_of(gn);
                                  for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                      const auto j = static_cast<std::size_t>(gidx[i]);
                                      const T v = xn->data[i];
                                      const T base = std::max(v, eps);
                                      const T y = self.data[i];
                                      if (gx && v >= eps)
                                          gx[i] += self.grad[i] * gn->data[j] * y / base;
                                      if (gg)
                                          gg[j] += self.grad[i] * y * std::log(base);
                                  }
                              });
    }

    // ----------------------------------------------------------------------------------------
    // Reductions and losses

    template <class T>
    Tensor<T> sum(const Tensor<T>& x) {
        T acc = T(0);
        for (T v : x.vec())
            acc += v;
        return detail::make_result<T>(Shape{1}, {acc}, "sum", {x.node_ptr()}, [](Node<T>& self) {
            T* gx = detail::grad_of(self.inputs[0]);
            for (std::size_t i = 0; i < self.inputs[0]->data.size(); ++i)
                gx[i] += self.grad[0];
        });
    }

    template <class T>
    Tensor<T> mean(const Tensor<T>& x) {
        return mul_scalar(sum(x), T(1) / static_cast<T>(x.numel()));
    }

    /// mean(|a - b|) with subgradient 0 where a == b.
    template <class T>
    Tensor<T> l1_mean(const Tensor<T>& a, const Tensor<T>& b) {
        if (a.shape() != b.shape())
            throw DimensionError("l1_mean: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
        const auto n = static_cast<T>(a.numel());
        T acc = T(0);
        for (std::size_t i = 0; i < a.vec().size(); ++i)
            acc += std::abs(a.vec()[i] - b.vec()[i]);
        return detail::make_result<T>(Shape{1}, {acc / n}, "l1_mean", {a.node_ptr(), b.node_ptr()},
                                      [n](Node<T>& self) {
                                          const auto& an = self.inputs[0];
                                          const auto& bn = self.inputs[1];
                                          T* ga = detail::grad_of(an);
                                          T* gb = detail::grad_of(bn);
                                          const T scale = self.grad[0] / n;
                                          for (std::size_t i = 0; i < an->data.size(); ++i) {
                                              const T d = an->data[i] - bn->data[i];
                                              const T s = d > T(0) ? scale : d < T(0) ? -scale : T(0);
                                              if (ga) ga[i] += s;
                                              if (gb) gb[i] -= s;
                                          }
                                      });
    }

    /// [N, C, H, W] -> [N, C]
    template <class T>
    Tensor<T> global_avg_pool(const Tensor<T>& x) {
        detail::require_rank(x.shape(), 4, "global_avg_pool");
        const std::int64_t n = x.dim(0), c = x.dim(1), p = x.dim(2) * x.dim(3);
        std::vector<T> out(static_cast<std::size_t>(n * c), T(0));
        for (std::int64_t i = 0; i < n * c; ++i) {
            T acc = T(0);
            for (std::int64_t k = 0; k < p; ++k)
                acc += x.vec()[static_cast<std::size_t>(i * p + k)];
            out[static_cast<std::size_t>(i)] = acc / static_cast<T>(p);
        }
        return detail::make_result<T>(Shape{n, c}, std::move(out), "global_avg_pool", {x.node_ptr()},
                                      [n, c, p](Node<T>& self) {
                                          T* gx = detail::grad_of(self.inputs[0]);
                                          for (std::int64_t i = 0; i < n * c; ++i) {
                                              const T g = self.grad[static_cast<std::size_t>(i)] / static_cast<T>(p);
                                              for (std::int64_t k = 0; k < p; ++k)
                                                  gx[i * p + k] += g;
                                          }
                                      });
    }

    /// x [N, F] times w[O, F]^T plus b[O] -> [N, O]
    template <class T>
    Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
        detail::require_rank(x.shape(), 2, "linear");
        detail::require_rank(w.shape(), 2, "linear");
        const std::int64_t n = x.dim(0), f = x.dim(1), o = w.dim(0);
        if (w.dim(1) != f || b.rank() != 1 || b.dim(0) != o)
            throw DimensionError("linear: incompatible shapes x" + to_string(x.shape()) + " w" + to_string(w.shape()) +
                                 " b" + to_string(b.shape()));
        std::vector<T> out(static_cast<std::size_t>(n * o));
        for (std::int64_t i = 0; i < n; ++i)
            for (std::int64_t j = 0; j < o; ++j) {
                T acc = b.vec()[static_cast<std::size_t>(j)];
                for (std::int64_t k = 0; k < f; ++k)
                    acc += x.vec()[static_cast<std::size_t>(i * f + k)] * w.vec()[static_cast<std::size_t>(j * f + k)];
                out[static_cast<std::size_t>(i * o + j)] = acc;
            }
        detail::count_macs(static_cast<std::uint64_t>(n * o * f));
        return detail::make_result<T>(
            Shape{n, o}, std::move(out), "linear", {x.node_ptr(), w.node_ptr(), b.node_ptr()},
            [n, f, o](Node<T>& self) {
                const auto& xn = self.inputs[0];
                const auto& wn = self.inputs[1];
                T* gx = detail::grad_of(xn);
                T* gw = detail::grad_of(wn);
                T* gb = detail::grad_of(self.inputs[2]);
                for (std::int64_t i = 0; i < n; ++i)
                    for (std::int64_t j = 0; j < o; ++j) {
                        const T g = self.grad[static_cast<std::size_t>(i * o + j)];
                        if (gb)
                            gb[j] += g;
                        for (std::int64_t k = 0; k < f; ++k) {
                            if (gx)
                                gx[i * f + k] += g * wn->data[static_cast<std::size_t>(j * f + k)];
                            if (gw)
                                gw[j * f + k] += g * xn->data[static_cast<std::size_t>(i * f + k)];
                        }
                    }
            });
    }

    // ----------------------------------------------------------------------------------------
    // Shape manipulation

    template <class T>
    Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
        if (numel(shape) != x.numel())
            throw DimensionError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape));
        return detail::make_result<T>(std::move(shape), x.vec(), "reshape", {x.node_ptr()}, [](Node<T>& self) {
            T* gx = detail::grad_of(self.inputs[0]);
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                gx[i] += self.grad[i];
        });
    }

    /// Concatenate rank-4 tensors along channels.
    template <class T>
    Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
        if (parts.empty())
            throw DimensionError("concat_channels: no inputs");
        const auto& s0 = parts.front().shape();
        detail::require_rank(s0, 4, "concat_channels");
        std::int64_t c_total = 0;
        for (const auto& p : parts) {
            detail::require_rank(p.shape(), 4, "concat_channels");
            if (p.dim(0) != s0[0] || p.dim(2) != s0[2] || p.dim(3) != s0[3])
                throw DimensionError("concat_channels: " + to_string(p.shape()) + " incompatible with " +
                                     to_string(s0));
            c_total += p.dim(1);
        }
        const std::int64_t n = s0[0], hw = s0[2] * s0[3];
        std::vector<T> out(static_cast<std::size_t>(n * c_total * hw));
        std::vector<std::int64_t> offsets;
        std::vector<std::shared_ptr<Node<T>>> inputs;
        std::int64_t off = 0;
        for (const auto& p : parts) {
            offsets.push_back(off);
            inputs.push_back(p.node_ptr());
            const std::int64_t c = p.dim(1);
            for (std::int64_t i = 0; i < n; ++i)
                std::copy_n(p.vec().begin() + i * c * hw, c * hw, out.begin() + (i * c_total + off) * hw);
            off += c;
        }
        return detail::make_result<T>(Shape{n, c_total, s0[2], s0[3]}, std::move(out), "concat_channels",
                                      std::move(inputs), [n, c_total, hw, offsets](Node<T>& self) {
                                          for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                                              T* g = detail::grad_of(self.inputs[k]);
                                              if (!g)
                                                  continue;
                                              const std::int64_t c = self.inputs[k]->shape[1];
                                              for (std::int64_t i = 0; i < n; ++i) {
                                                  const T* src = self.grad.data() + (i * c_total + offsets[k]) * hw;
                                                  T* dst = g + i * c * hw;
                                                  for (std::int64_t j = 0; j < c * hw; ++j)
                                                      dst[j] += src[j];
                                              }
                                          }
                                      });
    }

    /// Channels [begin, begin + count) of a rank-4 tensor.
    template <class T>
    Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t count) {
        detail::require_rank(x.shape(), 4, "slice_channels");
        const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
        if (begin < 0 || count <= 0 || begin + count > c)
            throw DimensionError("slice_channels: [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                                 ") out of range for " + to_string(x.shape()));
        std::vector<T> out(static_cast<std::size_t>(n * count * hw));
        for (std::int64_t i = 0; i < n; ++i)
            std::copy_n(x.vec().begin() + (i * c + begin) * hw, count * hw, out.begin() + i * count * hw);
        return detail::make_result<T>(Shape{n, count, x.dim(2), x.dim(3)}, std::move(out), "slice_channels",
                                      {x.node_ptr()}, [n, c, hw, begin, count](Node<T>& self) {
                                          T* g = detail::grad_of(self.inputs[0]);
                                          for (std::int64_t i = 0; i < n; ++i)
                                              for (std::int64_t j = 0; j < count * hw; ++j)
                                                  g[(i * c + begin) * hw + j] += self.grad[static_cast<std::size_t>(i * count * hw + j)];
                                      });
    }

    /// Spatial window [y0, y0 + h) x [x0, x0 + w) of [N, C, H, W].
    template <class T>
    Tensor<T> crop_spatial(const Tensor<T>& x, std::int64_t y0, std::int64_t x0, std::int64_t h, std::int64_t w) {
        detail::require_rank(x.shape(), 4, "crop_spatial");
        const std::int64_t planes = x.dim(0) * x.dim(1), ih = x.dim(2), iw = x.dim(3);
        if (y0 < 0 || x0 < 0 || h <= 0 || w <= 0 || y0 + h > ih || x0 + w > iw)
            throw DimensionError("crop_spatial: window outside " + to_string(x.shape()));
        std::vector<T> out(static_cast<std::size_t>(planes * h * w));
        for (std::int64_t p = 0; p < planes; ++p)
            for (std::int64_t y = 0; y < h; ++y)
                std::copy_n(x.vec().begin() + (p * ih + y0 + y) * iw + x0, w, out.begin() + (p * h + y) * w);
        return detail::make_result<T>(Shape{x.dim(0), x.dim(1), h, w}, std::move(out), "crop_spatial", {x.node_ptr()},
                                      [=](Node<T>& self) {
                                          T* g = detail::grad_of(self.inputs[0]);
                                          for (std::int64_t p = 0; p < planes; ++p)
                                              for (std::int64_t y = 0; y < h; ++y)
                                                  for (std::int64_t xx = 0; xx < w; ++xx)
                                                      g[(p * ih + y0 + y) * iw + x0 + xx] +=
                                                          self.grad[static_cast<std::size_t>((p * h + y) * w + xx)];
                                      });
    }

    // ----------------------------------------------------------------------------------------
    // Convolution and resampling

    /// Cross-correlation of x [N, Cin, H, W] with w [Cout, Cin/groups, kh, kw].
    template <class T>
    Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Conv2dOptions opt = {}) {
        detail::check_conv_args(x, w, b, opt.groups, "conv2d");
        if (opt.stride <= 0 || opt.padding < 0)
            throw ConfigError("conv2d: stride must be positive and padding non-negative");
        const std::int64_t h = x.dim(2), wd = x.dim(3), kh = w.dim(2), kw = w.dim(3);
        if (h + 2 * opt.padding < kh || wd + 2 * opt.padding < kw)
            throw DimensionError("conv2d: kernel " + to_string(w.shape()) + " larger than padded input " +
                                 to_string(x.shape()));
        if (opt.pad_mode == PadMode::reflect && (opt.padding >= h || opt.padding >= wd))
            throw DimensionError("conv2d: reflect padding " + std::to_string(opt.padding) + " needs spatial dims > pad, got " +
                                 to_string(x.shape()));
        auto ym = detail::padded_axis(h, kh, opt.stride, opt.padding, opt.pad_mode);
        auto xm = detail::padded_axis(wd, kw, opt.stride, opt.padding, opt.pad_mode);
        return detail::conv_core(x, w, b, std::move(ym), std::move(xm), opt.groups, "conv2d");
    }

    /// Stride-1 convolution restricted to non-overlapping window x window tiles: taps that
    /// would read outside the output pixel's own tile contribute zero, so every output tile
    /// is a function of the matching input tile only. Taps are centred at kernel index k/2.
    ///
    /// Evaluated per group as one product of a (Cout_g s^2) x (Cin_g s^2) tile operator with
    /// the matrix of gathered tiles.
    template <class T>
    Tensor<T> window_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int window, int groups = 1) {
        using detail::RowMat;
        detail::check_conv_args(x, w, b, groups, "window_conv2d");
        if (window <= 0 || x.dim(2) % window != 0 || x.dim(3) % window != 0)
            throw DimensionError("window_conv2d: spatial dims of " + to_string(x.shape()) + " not divisible by window " +
                                 std::to_string(window));
        if (w.dim(2) > window || w.dim(3) > window)
            throw ConfigError("window_conv2d: kernel larger than window");
        const std::int64_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
        const std::int64_t cout = w.dim(0), cin_g = w.dim(1), kh = w.dim(2), kw = w.dim(3);
        const std::int64_t cout_g = cout / groups, s = window, ss = s * s;
        const std::int64_t gh = h / s, gw = wd / s, cols = n * gh * gw;
        const std::int64_t rows_out = cout_g * ss, rows_in = cin_g * ss;

        // Tile operator entries shared by every group: (row, col) <- weight offset within the group.
        struct Entry {
            std::int64_t row, col, widx;
        };
        std::vector<Entry> entries;
        for (std::int64_t co = 0; co < cout_g; ++co)
            for (std::int64_t oy = 0; oy < s; ++oy)
                for (std::int64_t ox = 0; ox < s; ++ox)
                    for (std::int64_t ci = 0; ci < cin_g; ++ci)
                        for (std::int64_t ky = 0; ky < kh; ++ky)
                            for (std::int64_t kx = 0; kx < kw; ++kx) {
                                const std::int64_t iy = oy + ky - kh / 2, ix = ox + kx - kw / 2;
                                if (iy < 0 || iy >= s || ix < 0 || ix >= s)
                                    continue;
                                entries.push_back({(co * s + oy) * s + ox, (ci * s + iy) * s + ix,
                                                   ((co * cin_g + ci) * kh + ky) * kw + kx});
                            }

        // Tile matrix of channels [c0, c0 + c) of a [n, ctot, h, wd] buffer: row (ci, iy, ix),
        // column (image, tile row, tile column). `scatter` selects scatter-add instead of gather.
        auto tiles = [=](T* img, std::int64_t ctot, std::int64_t c0, std::int64_t c, T* mat, bool scatter) {
            for (std::int64_t in = 0; in < n; ++in)
                for (std::int64_t ci = 0; ci < c; ++ci)
                    for (std::int64_t y = 0; y < h; ++y) {
                        T* line = img + ((in * ctot + c0 + ci) * h + y) * wd;
                        const std::int64_t col0 = (in * gh + y / s) * gw;
                        for (std::int64_t ix = 0; ix < s; ++ix) {
                            T* row = mat + ((ci * s + y % s) * s + ix) * cols + col0;
                            if (scatter)
                                for (std::int64_t xg = 0; xg < gw; ++xg)
                                    line[xg * s + ix] += row[xg];
                            else
                                for (std::int64_t xg = 0; xg < gw; ++xg)
                                    row[xg] = line[xg * s + ix];
                        }
                    }
        };
        auto build_operator = [=](const T* wdata, std::int64_t g, RowMat<T>& m) {
            m.setZero(rows_out, rows_in);
            const T* wg = wdata + g * cout_g * cin_g * kh * kw;
            for (const auto& e : entries)
                m(e.row, e.col) = wg[e.widx];
        };

        std::vector<T> out(static_cast<std::size_t>(n * cout * h * wd), T(0));
        {
            RowMat<T> op, xin(rows_in, cols), yout(rows_out, cols);
            for (std::int64_t g = 0; g < groups; ++g) {
                build_operator(w.data().data(), g, op);
                tiles(const_cast<T*>(x.data().data()), cin, g * cin_g, cin_g, xin.data(), false);
                yout.noalias() = op * xin;
                tiles(out.data(), cout, g * cout_g, cout_g, yout.data(), true);
            }
        }
        if (b.defined()) {
            const std::int64_t p = h * wd;
            for (std::int64_t in = 0; in < n; ++in)
                for (std::int64_t co = 0; co < cout; ++co) {
                    T* o = out.data() + (in * cout + co) * p;
                    const T bv = b.data()[static_cast<std::size_t>(co)];
                    for (std::int64_t i = 0; i < p; ++i)
                        o[i] += bv;
                }
        }
        detail::count_macs(static_cast<std::uint64_t>(groups * rows_out * rows_in * cols));

        std::vector<std::shared_ptr<Node<T>>> inputs{x.node_ptr(), w.node_ptr()};
        if (b.defined())
            inputs.push_back(b.node_ptr());
        return detail::make_result<T>(
            Shape{n, cout, h, wd}, std::move(out), "window_conv2d",
            std::move(inputs), [=](Node<T>& self) {
                const auto& xn = self.inputs[0];
                const auto& wn = self.inputs[1];
                T* gx = detail::grad_of(xn);
                T* gwt = detail::grad_of(wn);
                T* gb = self.inputs.size() > 2 ? detail::grad_of(self.inputs[2]) : nullptr;
                T* go = self.grad.data();
                RowMat<T> op, xin(rows_in, cols), gy(rows_out, cols), gin;
                for (std::int64_t g = 0; g < groups; ++g) {
                    tiles(go, cout, g * cout_g, cout_g, gy.data(), false);
                    if (gwt) {
                        tiles(xn->data.data(), cin, g * cin_g, cin_g, xin.data(), false);
                        RowMat<T> gop = gy * xin.transpose();
                        T* gwg = gwt + g * cout_g * cin_g * kh * kw;
                        for (const auto& e : entries)
                            gwg[e.widx] += gop(e.row, e.col);
                    }
                    if (gx) {
                        build_operator(wn->data.data(), g, op);
                        gin.noalias() = op.transpose() * gy;
                        tiles(gx, cin, g * cin_g, cin_g, gin.data(), true);
                    }
                }
                if (gb) {
                    const std::int64_t p = h * wd;
                    for (std::int64_t in = 0; in < n; ++in)
                        for (std::int64_t co = 0; co < cout; ++co) {
                            const T* o = go + (in * cout + co) * p;
                            T acc = T(0);
                            for (std::int64_t i = 0; i < p; ++i)
                                acc += o[i];
                            gb[co] += acc;
                        }
                }
            });
    }

    /// Bilinear resize of [N, C, H, W] to [N, C, out_h, out_w], align-corners=false.
    template <class T>
    Tensor<T> resize_bilinear(const Tensor<T>& x, std::int64_t out_h, std::int64_t out_w) {
        detail::require_rank(x.shape(), 4, "resize_bilinear");
        if (out_h <= 0 || out_w <= 0)
            throw DimensionError("resize_bilinear: output size must be positive");
        const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
        auto ya = detail::lerp_axis(h, out_h);
        auto xa = detail::lerp_axis(w, out_w);
        std::vector<T> out(static_cast<std::size_t>(planes * out_h * out_w));
        for (std::int64_t p = 0; p < planes; ++p) {
            const T* src = x.vec().data() + p * h * w;
            T* dst = out.data() + p * out_h * out_w;
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
                const auto uy = static_cast<std::size_t>(oy);
                const T wy1 = static_cast<T>(ya.w1[uy]), wy0 = T(1) - wy1;
                const T* r0 = src + ya.i0[uy] * w;
                const T* r1 = src + ya.i1[uy] * w;
                for (std::int64_t ox = 0; ox < out_w; ++ox) {
                    const auto ux = static_cast<std::size_t>(ox);
                    const T wx1 = static_cast<T>(xa.w1[ux]), wx0 = T(1) - wx1;
                    const auto x0 = xa.i0[ux], x1 = xa.i1[ux];
                    dst[oy * out_w + ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
                }
            }
        }
        detail::count_macs(static_cast<std::uint64_t>(4 * planes * out_h * out_w));
        return detail::make_result<T>(Shape{x.dim(0), x.dim(1), out_h, out_w}, std::move(out), "resize_bilinear",
                                      {x.node_ptr()}, [=](Node<T>& self) {
                                          T* gx = detail::grad_of(self.inputs[0]);
                                          for (std::int64_t p = 0; p < planes; ++p) {
                                              T* g = gx + p * h * w;
                                              const T* go = self.grad.data() + p * out_h * out_w;
                                              for (std::int64_t oy = 0; oy < out_h; ++oy) {
                                                  const auto uy = static_cast<std::size_t>(oy);
                                                  const T wy1 = static_cast<T>(ya.w1[uy]), wy0 = T(1) - wy1;
                                                  T* r0 = g + ya.i0[uy] * w;
                                                  T* r1 = g + ya.i1[uy] * w;
                                                  for (std::int64_t ox = 0; ox < out_w; ++ox) {
                                                      const auto ux = static_cast<std::size_t>(ox);
                                                      const T wx1 = static_cast<T>(xa.w1[ux]), wx0 = T(1) - wx1;
                                                      const auto x0 = xa.i0[ux], x1 = xa.i1[ux];
                                                      const T v = go[oy * out_w + ox];
                                                      r0[x0] += wy0 * wx0 * v;
                                                      r0[x1] += wy0 * wx1 * v;
                                                      r1[x0] += wy1 * wx0 * v;
                                                      r1[x1] += wy1 * wx1 * v;
                                                  }
                                              }
                                          }
                                      });
    }

    /// Bilinear x2 upscale.
    template <class T>
    Tensor<T> upsample2(const Tensor<T>& x) {
        detail::require_rank(x.shape(), 4, "upsample2");
        return resize_bilinear(x, x.dim(2) * 2, x.dim(3) * 2);
    }

    /// Bilinear /2 downscale; with half-pixel centres each output is the mean of its 2x2 support.
    template <class T>
    Tensor<T> downsample2(const Tensor<T>& x) {
        detail::require_rank(x.shape(), 4, "downsample2");
        if (x.dim(2) % 2 != 0 || x.dim(3) % 2 != 0)
            throw DimensionError("downsample2: spatial dims must be even, got " + to_string(x.shape()));
        return resize_bilinear(x, x.dim(2) / 2, x.dim(3) / 2);
    }

    /// Separable blur with an odd-length 1-D kernel applied along rows and columns, reflect padding.
    template <class T>
    Tensor<T> separable_blur(const Tensor<T>& x, std::vector<double> taps) {
        detail::require_rank(x.shape(), 4, "separable_blur");
        if (taps.size() % 2 != 1)
            throw ConfigError("separable_blur: kernel length must be odd");
        const auto r = static_cast<std::int64_t>(taps.size() / 2);
        const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
        if (h <= r || w <= r)
            throw DimensionError("separable_blur: spatial dims of " + to_string(x.shape()) +
                                 " too small for reflect padding of " + std::to_string(r));
        std::vector<T> tmp(x.vec().size(), T(0));
        std::vector<T> out(x.vec().size(), T(0));
        detail::blur_pass<T>(x.vec().data(), tmp.data(), planes, h, w, taps, 3, false);
        detail::blur_pass<T>(tmp.data(), out.data(), planes, h, w, taps, 2, false);
        detail::count_macs(static_cast<std::uint64_t>(2 * taps.size()) * x.vec().size());
        return detail::make_result<T>(x.shape(), std::move(out), "separable_blur", {x.node_ptr()},
                                      [=, taps = std::move(taps)](Node<T>& self) {
                                          T* gx = detail::grad_of(self.inputs[0]);
                                          std::vector<T> gtmp(self.grad.size(), T(0));
                                          detail::blur_pass<T>(self.grad.data(), gtmp.data(), planes, h, w, taps, 2, true);
                                          detail::blur_pass<T>(gtmp.data(), gx, planes, h, w, taps, 3, true);
                                      });
    }

    // ----------------------------------------------------------------------------------------
    // Color and composition

    /// Left-multiplies every pixel's RGB vector by a 3x3 matrix. A is [3, 3] or [N, 3, 3];
    /// image is [N, 3, H, W].
    template <class T>
    Tensor<T> matmul3(const Tensor<T>& a, const Tensor<T>& image) {
        detail::require_rank(image.shape(), 4, "matmul3");
        if (image.dim(1) != 3)
            throw DimensionError("matmul3: color axis must have size 3, got " + to_string(image.shape()));
        const std::int64_t n = image.dim(0), p = image.dim(2) * image.dim(3);
        const bool batched = a.rank() == 3;
        if (!((a.rank() == 2 && a.dim(0) == 3 && a.dim(1) == 3) ||
              (batched && a.dim(0) == n && a.dim(1) == 3 && a.dim(2) == 3)))
            throw DimensionError("matmul3: matrix must be [3,3] or [N,3,3], got " + to_string(a.shape()));
        std::vector<T> out(image.vec().size());
        for (std::int64_t i = 0; i < n; ++i) {
            const T* m = a.vec().data() + (batched ? i * 9 : 0);
            const T* src = image.vec().data() + i * 3 * p;
            T* dst = out.data() + i * 3 * p;
            for (int r = 0; r < 3; ++r)
                for (std::int64_t k = 0; k < p; ++k)
                    dst[r * p + k] = m[r * 3] * src[k] + m[r * 3 + 1] * src[p + k] + m[r * 3 + 2] * src[2 * p + k];
        }
        detail::count_macs(static_cast<std::uint64_t>(9 * n * p));
        return detail::make_result<T>(image.shape(), std::move(out), "matmul3", {a.node_ptr(), image.node_ptr()},
                                      [n, p, batched](Node<T>& self) {
                                          const auto& an = self.inputs[0];
                                          const auto& xn = self.inputs[1];
                                          T* ga = detail::grad_of(an);
                                          T* gx = detail::grad_of(xn);
                                          for (std::int64_t i = 0; i < n; ++i) {
                                              const T* m = an->data.data() + (batched ? i * 9 : 0);
                                              T* gm = ga ? ga + (batched ? i * 9 : 0) : nullptr;
                                              const T* src = xn->data.data() + i * 3 * p;
                                              const T* go = self.grad.data() + i * 3 * p;
                                              for (int r = 0; r < 3; ++r)
                                                  for (int c = 0; c < 3; ++c) {
                                                      T acc = T(0);
                                                      for (std::int64_t k = 0; k < p; ++k) {
                                                          if (gx)
                                                              gx[i * 3 * p + c * p + k] += m[r * 3 + c] * go[r * p + k];
                                                          acc += go[r * p + k] * src[c * p + k];
                                                      }
                                                      if (gm)
                                                          gm[r * 3 + c] += acc;
                                                  }
                                          }
                                      });
    }

    /// Rank-1 three-way outer product o[i, j, c] = fh[i] * fw[j] * fc[c], shape [len(fh), len(fw), len(fc)].
    template <class T>
    Tensor<T> outer3(const Tensor<T>& fh, const Tensor<T>& fw, const Tensor<T>& fc) {
        if (fh.rank() != 1 || fw.rank() != 1 || fc.rank() != 1)
            throw DimensionError("outer3: factors must be 1-D, got " + to_string(fh.shape()) + ", " +
                                 to_string(fw.shape()) + ", " + to_string(fc.shape()));
        const std::int64_t a = fh.dim(0), b = fw.dim(0), c = fc.dim(0);
        std::vector<T> out(static_cast<std::size_t>(a * b * c));
        for (std::int64_t i = 0; i < a; ++i)
            for (std::int64_t j = 0; j < b; ++j) {
                const T hw = fh.vec()[static_cast<std::size_t>(i)] * fw.vec()[static_cast<std::size_t>(j)];
                for (std::int64_t k = 0; k < c; ++k)
                    out[static_cast<std::size_t>((i * b + j) * c + k)] = hw * fc.vec()[static_cast<std::size_t>(k)];
            }
        detail::count_macs(static_cast<std::uint64_t>(2 * a * b * c));
        return detail::make_result<T>(Shape{a, b, c}, std::move(out), "outer3",
                                      {fh.node_ptr(), fw.node_ptr(), fc.node_ptr()}, [a, b, c](Node<T>& self) {
                                          const auto& hn = self.inputs[0];
                                          const auto& wn = self.inputs[1];
                                          const auto& cn = self.inputs[2];
                                          T* gh = detail::grad_of(hn);
                                          T* gw = detail::grad_of(wn);
                                          T* gc = detail::grad_of(cn);
                                          for (std::int64_t i = 0; i < a; ++i)
                                              for (std::int64_t j = 0; j < b; ++j)
                                                  for (std::int64_t k = 0; k < c; ++k) {
                                                      const T g = self.grad[static_cast<std::size_t>((i * b + j) * c + k)];
                                                      const T vh = hn->data[static_cast<std::size_t>(i)];
                                                      const T vw = wn->data[static_cast<std::size_t>(j)];
                                                      const T vc = cn->data[static_cast<std::size_t>(k)];
                                                      if (gh) gh[i] += g * vw * vc;
                                                      if (gw) gw[j] += g * vh * vc;
                                                      if (gc) gc[k] += g * vh * vw;
                                                  }
                                      });
    }

    /// Batched window composition. fh, fw are [N, s, Gh, Gw], fc is [N, C, Gh, Gw]; the result
    /// [N, C, Gh*s, Gw*s] holds, inside window (gy, gx), o[c, i, j] = fh[i] * fw[j] * fc[c].
    template <class T>
    Tensor<T> compose_windows(const Tensor<T>& fh, const Tensor<T>& fw, const Tensor<T>& fc) {
        detail::require_rank(fh.shape(), 4, "compose_windows");
        detail::require_rank(fw.shape(), 4, "compose_windows");
        detail::require_rank(fc.shape(), 4, "compose_windows");
        const std::int64_t n = fh.dim(0), s = fh.dim(1), gh = fh.dim(2), gw = fh.dim(3), c = fc.dim(1);
        if (fw.shape() != fh.shape() || fc.dim(0) != n || fc.dim(2) != gh || fc.dim(3) != gw)
            throw DimensionError("compose_windows: factor shapes " + to_string(fh.shape()) + ", " +
                                 to_string(fw.shape()) + ", " + to_string(fc.shape()) + " disagree");
        const std::int64_t h = gh * s, w = gw * s, g = gh * gw;
        std::vector<T> out(static_cast<std::size_t>(n * c * h * w));
        const T* ph = fh.vec().data();
        const T* pw = fw.vec().data();
        const T* pc = fc.vec().data();
        for (std::int64_t b = 0; b < n; ++b)
            for (std::int64_t ch = 0; ch < c; ++ch)
                for (std::int64_t y = 0; y < h; ++y) {
                    const std::int64_t wy = y / s, i = y % s;
                    for (std::int64_t x = 0; x < w; ++x) {
                        const std::int64_t wx = x / s, j = x % s, cell = wy * gw + wx;
                        out[static_cast<std::size_t>(((b * c + ch) * h + y) * w + x)] =
                            ph[(b * s + i) * g + cell] * pw[(b * s + j) * g + cell] * pc[(b * c + ch) * g + cell];
                    }
                }
        detail::count_macs(static_cast<std::uint64_t>(2 * n * c * h * w));
        return detail::make_result<T>(Shape{n, c, h, w}, std::move(out), "compose_windows",
                                      {fh.node_ptr(), fw.node_ptr(), fc.node_ptr()}, [=](Node<T>& self) {
                                          const auto& hn = self.inputs[0];
                                          const auto& wn = self.inputs[1];
                                          const auto& cn = self.inputs[2];
                                          T* gph = detail::grad_of(hn);
                                          T* gpw = detail::grad_of(wn);
                                          T* gpc = detail::grad_of(cn);
                                          const T* vh = hn->data.data();
                                          const T* vw = wn->data.data();
                                          const T* vc = cn->data.data();
                                          for (std::int64_t b = 0; b < n; ++b)
                                              for (std::int64_t ch = 0; ch < c; ++ch)
                                                  for (std::int64_t y = 0; y < h; ++y) {
                                                      const std::int64_t wy = y / s, i = y % s;
                                                      for (std::int64_t x = 0; x < w; ++x) {
                                                          const std::int64_t wx = x / s, j = x % s, cell = wy * gw + wx;
                                                          const T go = self.grad[static_cast<std::size_t>(((b * c + ch) * h + y) * w + x)];
                                                          const auto ih = (b * s + i) * g + cell;
                                                          const auto iw = (b * s + j) * g + cell;
                                                          const auto ic = (b * c + ch) * g + cell;
                                                          if (gph) gph[ih] += go * vw[iw] * vc[ic];
                                                          if (gpw) gpw[iw] += go * vh[ih] * vc[ic];
                                                          if (gpc) gpc[ic] += go * vh[ih] * vw[iw];
                                                      }
                                                  }
                                      });
    }

} // namespace freqdis::ops
