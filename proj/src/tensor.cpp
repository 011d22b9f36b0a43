#include "haaseg/tensor.hpp"

#include "haaseg/errors.hpp"

#include <algorithm>
#include <ranges>

namespace haaseg {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape)
        n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

static void validate_shape(const Shape& shape) {
    if (shape.empty())
        throw ShapeError("tensor shape must have at least one extent");
    for (auto e : shape)
        if (e == 0)
            throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
}

Tensor::Tensor(Shape shape, double fill) : node_(std::make_shared<detail::TensorNode>()) {
    validate_shape(shape);
    node_->data.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : node_(std::make_shared<detail::TensorNode>()) {
    validate_shape(shape);
    if (shape_numel(shape) != data.size())
        throw ShapeError("shape " + shape_str(shape) + " needs " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(data.size()));
    node_->shape = std::move(shape);
    node_->data = std::move(data);
}

double Tensor::item() const {
    if (numel() != 1)
        throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
    if (index.size() != rank())
        throw ShapeError("index rank does not match tensor " + shape_str(shape()));
    std::size_t flat = 0;
    std::size_t axis = 0;
    for (auto i : index) {
        if (i >= node_->shape[axis])
            throw ShapeError("index out of range for tensor " + shape_str(shape()));
        flat = flat * node_->shape[axis] + i;
        ++axis;
    }
    return node_->data[flat];
}

Tensor& Tensor::set_requires_grad(bool flag) {
    node_->requires_grad = flag;
    if (!flag)
        node_->grad.clear();
    return *this;
}

std::span<double> Tensor::mutable_grad() { return grad_of(*node_); }

void Tensor::zero_grad() {
    if (!node_->grad.empty())
        std::ranges::fill(node_->grad, 0.0);
}

Tensor Tensor::clone() const { return Tensor(shape(), node_->data); }

namespace {
thread_local Tape* current_tape = nullptr;
}

Tape::Scope::Scope(Tape& tape) : previous_(current_tape) { current_tape = &tape; }
Tape::Scope::~Scope() { current_tape = previous_; }
Tape::Pause::Pause() : previous_(current_tape) { current_tape = nullptr; }
Tape::Pause::~Pause() { current_tape = previous_; }

Tape* Tape::current() noexcept { return current_tape; }

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward() needs a scalar loss, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    if (!loss.requires_grad())
        return;
    grad_of(*loss.node())[0] += 1.0;
    for (auto& fn : entries_ | std::views::reverse)
        fn();
}

bool wants_grad(Tensor& out, std::initializer_list<const Tensor*> inputs) {
    if (Tape::current() == nullptr)
        return false;
    const bool any = std::ranges::any_of(inputs, [](const Tensor* t) { return t && t->requires_grad(); });
    if (any)
        out.set_requires_grad(true);
    return any;
}

std::span<double> grad_of(detail::TensorNode& t) {
    if (t.grad.empty())
        t.grad.assign(t.data.size(), 0.0);
    return t.grad;
}

} // namespace haaseg
