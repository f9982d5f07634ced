#pragma once

// Dense double-precision matrices with a reverse-mode gradient tape.
//
// Every tensor is two-dimensional (rows x cols); scalars are 1x1 and vectors
// are single rows. An operation is recorded on the thread's active Tape only
// when at least one input requires a gradient, so parameter reads outside a
// TapeScope are side-effect free and safe to share between threads.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace susa {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class Tape;

namespace detail {
struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until a gradient flows in
    bool requires_grad = false;
    Tape* tape = nullptr;
    std::size_t tape_index = 0;

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};
using NodePtr = std::shared_ptr<Node>;
}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    static Tensor scalar(double value);
    static Tensor row(std::vector<double> values);
    // Leaf that accumulates gradients across backward passes.
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t rows() const { return node_->shape.rows; }
    std::size_t cols() const { return node_->shape.cols; }
    std::size_t size() const { return node_->data.size(); }

    std::span<const double> data() const { return node_->data; }
    std::span<double> mutable_data() { return node_->data; }
    double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
    double item() const;

    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool on_tape() const { return node_ && node_->tape != nullptr; }
    bool has_grad() const { return node_ && !node_->grad.empty(); }
    // Zero-filled view when no gradient has flowed in yet.
    std::vector<double> grad() const;
    void zero_grad();

    // Same values, no gradient, no tape attachment.
    Tensor detach() const;

    const detail::NodePtr& impl() const { return node_; }
    explicit Tensor(detail::NodePtr node) : node_(std::move(node)) {}

private:
    detail::NodePtr node_;
};

// Ordered record of operations; creation order is a valid topological order.
class Tape {
public:
    using BackwardFn = std::function<void(const detail::Node& out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    ~Tape();

    std::size_t size() const { return entries_.size(); }
    void record(const Tensor& out, BackwardFn fn);

    // Populates grad on every tape node and leaf reachable from `loss`.
    // Intermediate gradients are reset first, so repeated calls are
    // deterministic; leaf gradients accumulate.
    void backward(const Tensor& loss);
    void clear();

private:
    struct Entry {
        detail::NodePtr out;
        BackwardFn fn;
    };
    std::vector<Entry> entries_;
};

// Activates a tape on the current thread for its lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

Tape* active_tape();
void backward(const Tensor& loss);

// ---- operation catalog ----------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// b must match a's shape, or be a 1 x cols row added to every row.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double s);
// s is a 1x1 tensor.
Tensor scalar_mul(const Tensor& a, const Tensor& s);
// Divides every element by the 1x1 tensor s.
Tensor scalar_div(const Tensor& a, const Tensor& s);
Tensor add_scalar(const Tensor& a, double s);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
// Multiplies row i of a (m x n) by s[i] (s is m x 1).
Tensor scale_rows(const Tensor& a, const Tensor& s);
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor mean(const Tensor& a, int axis);
// Gradient routes to the first argmax on ties.
Tensor max(const Tensor& a, int axis);
Tensor softmax(const Tensor& a, int axis);
Tensor log_softmax(const Tensor& a, int axis);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sum(const Tensor& a);
// Row-wise normalization; gamma/beta (1 x cols) may be undefined for the
// pre-affine form.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
// (n x d), (l x d) -> n x l cosine matrix; a zero row has similarity 0.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
// logits 1 x K (or K x 1) -> scalar -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, std::size_t target);
// logits m x K -> scalar sum over rows of -log softmax(row)[targets[row]].
Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets);
Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows);
Tensor reshape(const Tensor& a, Shape shape);
// out(r,c) = table[index[r*cols + c]] for a 1 x B table.
Tensor take(const Tensor& table, std::span<const std::size_t> index, Shape shape);

// ---- gradient checking ----------------------------------------------------

struct GradCheckOptions {
    double eps = 1e-5;
    double tol = 1e-4;
    // Relative error denominator floor: |a - n| / max(|a|, |n|, abs_floor).
    double abs_floor = 1e-6;
    // When nonzero, only this many randomly chosen elements (over all inputs)
    // are perturbed.
    std::size_t sample = 0;
    std::uint64_t seed = 0;
    // Explicit (input, element) pairs; overrides `sample` when non-empty.
    std::vector<std::pair<std::size_t, std::size_t>> elements;
};

struct GradCheckReport {
    std::vector<double> max_rel_error;  // per input
    std::size_t checked = 0;
    bool passed = true;
    double worst() const;
};

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

// Inputs are perturbed in place and restored; they should be parameters.
GradCheckReport grad_check(const ScalarFn& f, std::span<Tensor> inputs, const GradCheckOptions& opts = {});

}  // namespace susa
