#pragma once

// Dense f64 tensors plus the tape that records differentiable operations.
//
// A Tensor is a cheap handle onto shared storage. Operations never mutate
// their inputs; the only mutable state is the gradient buffer and, for
// parameters, the optimizer's in-place update of the data.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace haaseg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until a gradient is accumulated
    bool requires_grad = false;
};
} // namespace detail

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
    static Tensor scalar(double value) { return Tensor(Shape{1}, value); }

    bool defined() const noexcept { return node_ != nullptr; }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    std::size_t numel() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    // In-place writes are reserved for initialization and optimizer updates.
    std::span<double> mutable_data() { return node_->data; }
    double item() const;
    double at(std::initializer_list<std::size_t> index) const;

    bool requires_grad() const { return node_ && node_->requires_grad; }
    Tensor& set_requires_grad(bool flag);

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const double> grad() const { return node_->grad; }
    std::span<double> mutable_grad();
    void zero_grad();
    void clear_grad() { node_->grad.clear(); }

    /// Deep copy of the values, detached from any tape.
    Tensor clone() const;

    detail::TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of backward closures. Ops append to the tape that is
/// current on the calling thread (see Tape::Scope); without a current tape
/// nothing is recorded and outputs never require gradients.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    class Scope {
    public:
        explicit Scope(Tape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        Tape* previous_;
    };

    /// Suspends recording on this thread for its lifetime.
    class Pause {
    public:
        Pause();
        ~Pause();
        Pause(const Pause&) = delete;
        Pause& operator=(const Pause&) = delete;

    private:
        Tape* previous_;
    };

    static Tape* current() noexcept;

    void record(BackwardFn fn) { entries_.push_back(std::move(fn)); }
    std::size_t size() const noexcept { return entries_.size(); }
    void clear() { entries_.clear(); }

    /// Seeds d(loss)/d(loss) = 1 and replays the tape in reverse. Gradients
    /// accumulate by summation into every requires_grad tensor reached.
    void backward(const Tensor& loss);

private:
    std::vector<BackwardFn> entries_;
};

/// True when a tape is active and at least one input requires a gradient;
/// in that case the output is marked requires_grad.
bool wants_grad(Tensor& out, std::initializer_list<const Tensor*> inputs);

/// Gradient buffer of `t`, allocated (zeroed) on first use.
std::span<double> grad_of(detail::TensorNode& t);

} // namespace haaseg
