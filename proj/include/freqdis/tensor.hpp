// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The freqdis Authors

#pragma once

#include "freqdis/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

namespace freqdis {

    using Shape = std::vector<std::int64_t>;

    inline std::int64_t numel(const Shape& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<>{});
    }

    inline std::string to_string(const Shape& shape) {
        std::ostringstream os;
        os << '[';
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i != 0)
                os << ", ";
            os << shape[i];
        }
        os << ']';
        return os.str();
    }

    namespace detail {
        inline thread_local bool grad_enabled = true;
        inline thread_local std::uint64_t next_seq = 0;

        // Multiply-accumulate instrumentation, see MacCounter.
        inline thread_local bool mac_counting = false;
        inline thread_local std::uint64_t mac_count = 0;

        inline void count_macs(std::uint64_t n) {
            if (mac_counting)
                mac_count += n;
        }
    } // namespace detail

    /// Disables graph recording on the current thread while alive.
    class NoGradGuard {
    public:
        NoGradGuard() : previous_(detail::grad_enabled) { detail::grad_enabled = false; }
        ~NoGradGuard() { detail::grad_enabled = previous_; }
        NoGradGuard(const NoGradGuard&) = delete;
        NoGradGuard& operator=(const NoGradGuard&) = delete;

    private:
        bool previous_;
    };

    inline bool grad_enabled() { return detail::grad_enabled; }

    /// Counts multiply-accumulates executed by tensor ops on this thread while alive.
    class MacCounter {
    public:
        MacCounter() : previous_(detail::mac_counting), saved_(detail::mac_count) {
            detail::mac_counting = true;
            detail::mac_count = 0;
        }
        ~MacCounter() {
            detail::mac_counting = previous_;
            detail::mac_count = saved_ + (previous_ ? detail::mac_count : 0);
        }
        MacCounter(const MacCounter&) = delete;
        MacCounter& operator=(const MacCounter&) = delete;

        std::uint64_t count() const { return detail::mac_count; }

    private:
        bool previous_;
        std::uint64_t saved_;
    };

    template <class T>
    struct Node {
        Shape shape;
        std::vector<T> data;
        std::vector<T> grad; // empty until something flows into it
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> inputs;
        std::function<void(Node&)> backward_fn;
        std::uint64_t seq = 0;
        std::string_view op = "leaf";

        void ensure_grad() {
            if (grad.empty())
                grad.assign(data.size(), T(0));
        }
    };

    /// Dense row-major tensor with optional participation in reverse-mode differentiation.
    ///
    /// A Tensor is a cheap handle; copies share the same node. Values produced by ops are
    /// never modified afterwards. Leaves (parameters) may be updated in place by optimizers.
    template <class T>
    class Tensor {
    public:
        using value_type = T;

        Tensor() = default;

        explicit Tensor(Shape shape, T fill = T(0)) {
            validate(shape);
            node_ = std::make_shared<Node<T>>();
            node_->data.assign(static_cast<std::size_t>(freqdis::numel(shape)), fill);
            node_->shape = std::move(shape);
            node_->seq = detail::next_seq++;
        }

        Tensor(Shape shape, std::vector<T> data) {
            validate(shape);
            if (static_cast<std::int64_t>(data.size()) != freqdis::numel(shape))
                throw DimensionError("tensor data has " + std::to_string(data.size()) + " elements, shape " +
                                     to_string(shape) + " needs " + std::to_string(freqdis::numel(shape)));
            node_ = std::make_shared<Node<T>>();
            node_->data = std::move(data);
            node_->shape = std::move(shape);
            node_->seq = detail::next_seq++;
        }

        static Tensor zeros(Shape shape) { return Tensor(std::move(shape), T(0)); }
        static Tensor ones(Shape shape) { return Tensor(std::move(shape), T(1)); }
        static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }
        static Tensor scalar(T value) { return Tensor(Shape{1}, value); }
        static Tensor from(Shape shape, std::initializer_list<T> values) {
            return Tensor(std::move(shape), std::vector<T>(values));
        }

        /// Wraps an already-constructed node; used by ops.
        static Tensor from_node(std::shared_ptr<Node<T>> node) {
            Tensor t;
            t.node_ = std::move(node);
            return t;
        }

        bool defined() const { return static_cast<bool>(node_); }
        const Shape& shape() const { return node().shape; }
        int rank() const { return static_cast<int>(node().shape.size()); }
        std::int64_t dim(int i) const {
            const auto& s = node().shape;
            if (i < 0)
                i += static_cast<int>(s.size());
            if (i < 0 || i >= static_cast<int>(s.size()))
                throw DimensionError("dim index out of range for shape " + to_string(s));
            return s[static_cast<std::size_t>(i)];
        }
        std::int64_t numel() const { return static_cast<std::int64_t>(node().data.size()); }

        std::span<const T> data() const { return node().data; }
        /// Writable view; only meaningful on leaves (inputs, parameters).
        std::span<T> mutable_data() const { return node_->data; }
        const std::vector<T>& vec() const { return node().data; }

        bool has_grad() const { return !node().grad.empty(); }
        /// Gradient buffer; all zeros when nothing has flowed back yet.
        std::vector<T> grad() const {
            if (node().grad.empty())
                return std::vector<T>(node().data.size(), T(0));
            return node().grad;
        }
        std::span<T> mutable_grad() const {
            node_->ensure_grad();
            return node_->grad;
        }
        void zero_grad() const { node_->grad.clear(); }

        bool requires_grad() const { return node().requires_grad; }
        const Tensor& set_requires_grad(bool on = true) const {
            node_->requires_grad = on;
            return *this;
        }

        T item() const {
            if (node().data.size() != 1)
                throw UsageError("item() on tensor of shape " + to_string(shape()));
            return node().data[0];
        }

        T operator[](std::size_t i) const { return node().data[i]; }

        /// 4-D element access (N, C, H, W).
        T at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
            const auto& s = node().shape;
            return node().data[static_cast<std::size_t>(((n * s[1] + c) * s[2] + y) * s[3] + x)];
        }

        /// New leaf holding a copy of the values, detached from any graph.
        Tensor detach() const { return Tensor(node().shape, node().data); }

        template <class U>
        Tensor<U> cast() const {
            std::vector<U> out(node().data.begin(), node().data.end());
            return Tensor<U>(node().shape, std::move(out));
        }

        Node<T>& node() const {
            if (!node_)
                throw UsageError("use of undefined tensor");
            return *node_;
        }
        const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

    private:
        static void validate(const Shape& shape) {
            if (shape.empty())
                throw DimensionError("tensor shape must have at least one dimension");
            for (auto d : shape)
                if (d <= 0)
                    throw DimensionError("tensor dimensions must be positive, got " + to_string(shape));
        }

        std::shared_ptr<Node<T>> node_;
    };

    /// Ordered record of the differentiable operations that produced a value.
    ///
    /// Nodes are stored in execution order; backward replays them in exact reverse.
    template <class T>
    class Tape {
    public:
        static Tape record(const Tensor<T>& root) {
            Tape tape;
            std::vector<Node<T>*> stack{&root.node()};
            std::unordered_set<Node<T>*> seen{&root.node()};
            while (!stack.empty()) {
                Node<T>* n = stack.back();
                stack.pop_back();
                if (!n->requires_grad)
                    continue;
                tape.nodes_.push_back(n);
                for (auto& in : n->inputs) {
                    if (in && seen.insert(in.get()).second)
                        stack.push_back(in.get());
                }
            }
            std::sort(tape.nodes_.begin(), tape.nodes_.end(),
                      [](const Node<T>* a, const Node<T>* b) { return a->seq < b->seq; });
            return tape;
        }

        std::span<Node<T>* const> nodes() const { return nodes_; }
        std::size_t size() const { return nodes_.size(); }

        /// Runs backward functions from the last recorded op to the first.
        void replay_backward(std::vector<Node<T>*>* visit_log = nullptr) const {
            for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
                Node<T>* n = *it;
                if (!n->backward_fn || n->grad.empty())
                    continue;
                if (visit_log)
                    visit_log->push_back(n);
                n->backward_fn(*n);
            }
        }

    private:
        std::vector<Node<T>*> nodes_;
    };

    /// Populates dLoss/dX on every requires_grad tensor reachable from a scalar loss.
    template <class T>
    void backward(const Tensor<T>& loss) {
        if (loss.numel() != 1)
            throw UsageError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
        if (!loss.requires_grad())
            throw UsageError("backward() on a loss that is not on the tape");
        auto tape = Tape<T>::record(loss);
        auto& root = loss.node();
        root.ensure_grad();
        root.grad[0] += T(1);
        tape.replay_backward();
    }

    namespace detail {
        /// True when no element is NaN or infinite (all-ones exponent field).
        template <class T>
        bool all_finite(const std::vector<T>& data) {
            using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
            constexpr Bits exp_mask = sizeof(T) == 4 ? static_cast<Bits>(0x7f800000u) : static_cast<Bits>(0x7ff0000000000000ull);
            Bits bad = 0;
            for (const T& v : data) {
                const Bits b = std::bit_cast<Bits>(v);
                bad |= static_cast<Bits>((b & exp_mask) == exp_mask);
            }
            return bad == 0;
        }

        /// Creates an op result and, when recording, wires it into the graph.
        template <class T>
        Tensor<T> make_result(Shape shape, std::vector<T> data, std::string_view op,
                              std::vector<std::shared_ptr<Node<T>>> inputs, std::function<void(Node<T>&)> backward_fn) {
            if (!all_finite(data))
                throw NumericError("non-finite value produced by " + std::string(op));
            Tensor<T> out(std::move(shape), std::move(data));
            bool track = grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const auto& n) {
                             return n && n->requires_grad;
                         });
            if (track) {
                auto& node = out.node();
                node.requires_grad = true;
                node.inputs = std::move(inputs);
                node.backward_fn = std::move(backward_fn);
                node.op = op;
            }
            return out;
        }

        /// Gradient buffer of an input, or nullptr when it does not need one.
        template <class T>
        T* grad_of(const std::shared_ptr<Node<T>>& n) {
            if (!n || !n->requires_grad)
                return nullptr;
            n->ensure_grad();
            return n->grad.data();
        }
    } // namespace detail

} // namespace freqdis
