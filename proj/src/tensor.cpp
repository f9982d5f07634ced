#include "susa/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <limits>
#include <numeric>

#include "susa/rng.hpp"

namespace susa {

using detail::Node;
using detail::NodePtr;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap cmap(const Node& n) { return ConstMap(n.data.data(), Eigen::Index(n.shape.rows), Eigen::Index(n.shape.cols)); }
ConstMap cgrad(const Node& n) { return ConstMap(n.grad.data(), Eigen::Index(n.shape.rows), Eigen::Index(n.shape.cols)); }
MutMap mgrad(Node& n) {
    n.ensure_grad();
    return MutMap(n.grad.data(), Eigen::Index(n.shape.rows), Eigen::Index(n.shape.cols));
}

thread_local Tape* g_active = nullptr;

NodePtr make_node(Shape shape) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->data.assign(shape.size(), 0.0);
    return n;
}

[[noreturn]] void shape_fail(const char* op, const std::string& detail) {
    throw ShapeError(fmt::format("{}: {}", op, detail));
}

template <typename... Ts>
Tape* recorder(const Ts&... inputs) {
    if (g_active == nullptr) return nullptr;
    bool any = (inputs.requires_grad() || ...);
    return any ? g_active : nullptr;
}

Tensor finish(NodePtr out, Tape* tape, Tape::BackwardFn fn) {
    Tensor t(std::move(out));
    if (tape != nullptr) tape->record(t, std::move(fn));
    return t;
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) shape_fail(op, "undefined tensor");
}

// Iterates the lines of a matrix along `axis` (1 = rows, 0 = columns).
struct Lines {
    std::size_t count, length, outer_stride, inner_stride;
    static Lines of(Shape s, int axis, const char* op) {
        if (axis == 1) return {s.rows, s.cols, s.cols, 1};
        if (axis == 0) return {s.cols, s.rows, 1, s.cols};
        shape_fail(op, fmt::format("axis must be 0 or 1, got {}", axis));
    }
    std::size_t at(std::size_t line, std::size_t k) const { return line * outer_stride + k * inner_stride; }
};

}  // namespace

std::string Shape::str() const { return fmt::format("{}x{}", rows, cols); }

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape) { return Tensor(make_node(shape)); }

Tensor Tensor::full(Shape shape, double value) {
    auto n = make_node(shape);
    std::fill(n->data.begin(), n->data.end(), value);
    return Tensor(n);
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    if (values.size() != shape.size())
        shape_fail("Tensor::from", fmt::format("{} values for shape {}", values.size(), shape.str()));
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->data = std::move(values);
    return Tensor(n);
}

Tensor Tensor::scalar(double value) { return from({1, 1}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
    Shape s{1, values.size()};
    return from(s, std::move(values));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t = from(shape, std::move(values));
    t.node_->requires_grad = true;
    return t;
}

double Tensor::item() const {
    if (size() != 1) shape_fail("item", fmt::format("tensor of shape {} is not a scalar", shape().str()));
    return node_->data[0];
}

std::vector<double> Tensor::grad() const {
    if (!node_) return {};
    if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() {
    if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from(shape(), node_->data); }

// ---- Tape -----------------------------------------------------------------

Tape::~Tape() { clear(); }

void Tape::clear() {
    for (auto& e : entries_) e.out->tape = nullptr;
    entries_.clear();
}

void Tape::record(const Tensor& out, BackwardFn fn) {
    auto& node = out.impl();
    node->requires_grad = true;
    node->tape = this;
    node->tape_index = entries_.size();
    entries_.push_back({node, std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
    require_defined(loss, "backward");
    const auto& ln = loss.impl();
    if (ln->shape.size() != 1) shape_fail("backward", fmt::format("loss must be a scalar, got {}", ln->shape.str()));
    if (ln->tape != this) throw std::invalid_argument("backward: loss is not recorded on this tape");
    const std::size_t last = ln->tape_index;
    for (std::size_t i = 0; i <= last; ++i) entries_[i].out->grad.clear();
    ln->ensure_grad();
    ln->grad[0] = 1.0;
    for (std::size_t i = last + 1; i-- > 0;) {
        auto& e = entries_[i];
        if (e.out->grad.empty()) continue;
        e.fn(*e.out);
    }
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active) { g_active = &tape; }
TapeScope::~TapeScope() { g_active = previous_; }

Tape* active_tape() { return g_active; }

void backward(const Tensor& loss) {
    require_defined(loss, "backward");
    if (loss.impl()->tape == nullptr) throw std::invalid_argument("backward: loss is not recorded on any tape");
    loss.impl()->tape->backward(loss);
}

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    if (a.cols() != b.rows()) shape_fail("matmul", fmt::format("cannot multiply {} by {}", a.shape().str(), b.shape().str()));
    auto out = make_node({a.rows(), b.cols()});
    MutMap(out->data.data(), Eigen::Index(a.rows()), Eigen::Index(b.cols())).noalias() = cmap(*a.impl()) * cmap(*b.impl());
    Tape* tape = recorder(a, b);
    return finish(out, tape, [an = a.impl(), bn = b.impl()](const Node& o) {
        if (an->requires_grad) mgrad(*an).noalias() += cgrad(o) * cmap(*bn).transpose();
        if (bn->requires_grad) mgrad(*bn).noalias() += cmap(*an).transpose() * cgrad(o);
    });
}

Tensor transpose(const Tensor& a) {
    require_defined(a, "transpose");
    auto out = make_node({a.cols(), a.rows()});
    MutMap(out->data.data(), Eigen::Index(a.cols()), Eigen::Index(a.rows())) = cmap(*a.impl()).transpose();
    return finish(out, recorder(a), [an = a.impl()](const Node& o) { mgrad(*an) += cgrad(o).transpose(); });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_defined(a, "add");
    require_defined(b, "add");
    const bool row_bias = b.rows() == 1 && b.cols() == a.cols() && a.rows() != 1;
    if (!(a.shape() == b.shape()) && !row_bias)
        shape_fail("add", fmt::format("shapes {} and {} are incompatible", a.shape().str(), b.shape().str()));
    auto out = make_node(a.shape());
    const auto& ad = a.impl()->data;
    const auto& bd = b.impl()->data;
    const std::size_t cols = a.cols();
    for (std::size_t i = 0; i < ad.size(); ++i) out->data[i] = ad[i] + bd[row_bias ? i % cols : i];
    return finish(out, recorder(a, b), [an = a.impl(), bn = b.impl(), row_bias, cols](const Node& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[row_bias ? i % cols : i] += o.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_defined(a, "sub");
    require_defined(b, "sub");
    if (!(a.shape() == b.shape()))
        shape_fail("sub", fmt::format("shapes {} and {} differ", a.shape().str(), b.shape().str()));
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.impl()->data[i] - b.impl()->data[i];
    return finish(out, recorder(a, b), [an = a.impl(), bn = b.impl()](const Node& o) {
        if (an->requires_grad) mgrad(*an) += cgrad(o);
        if (bn->requires_grad) mgrad(*bn) -= cgrad(o);
    });
}

Tensor scalar_mul(const Tensor& a, double s) {
    require_defined(a, "scalar_mul");
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.impl()->data[i] * s;
    return finish(out, recorder(a), [an = a.impl(), s](const Node& o) { mgrad(*an) += s * cgrad(o); });
}

Tensor scalar_mul(const Tensor& a, const Tensor& s) {
    require_defined(a, "scalar_mul");
    require_defined(s, "scalar_mul");
    if (s.size() != 1) shape_fail("scalar_mul", fmt::format("scale must be 1x1, got {}", s.shape().str()));
    const double sv = s.impl()->data[0];
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.impl()->data[i] * sv;
    return finish(out, recorder(a, s), [an = a.impl(), sn = s.impl()](const Node& o) {
        const double sv = sn->data[0];
        if (an->requires_grad) mgrad(*an) += sv * cgrad(o);
        if (sn->requires_grad) {
            sn->ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * an->data[i];
            sn->grad[0] += acc;
        }
    });
}

Tensor scalar_div(const Tensor& a, const Tensor& s) {
    require_defined(a, "scalar_div");
    require_defined(s, "scalar_div");
    if (s.size() != 1) shape_fail("scalar_div", fmt::format("divisor must be 1x1, got {}", s.shape().str()));
    const double sv = s.impl()->data[0];
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.impl()->data[i] / sv;
    return finish(out, recorder(a, s), [an = a.impl(), sn = s.impl()](const Node& o) {
        const double sv = sn->data[0];
        if (an->requires_grad) mgrad(*an) += cgrad(o) / sv;
        if (sn->requires_grad) {
            sn->ensure_grad();
            double acc = 0.0;
            for (std::size_t i = 0; i < o.grad.size(); ++i) acc += o.grad[i] * an->data[i];
            sn->grad[0] -= acc / (sv * sv);
        }
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    require_defined(a, "add_scalar");
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.impl()->data[i] + s;
    return finish(out, recorder(a), [an = a.impl()](const Node& o) { mgrad(*an) += cgrad(o); });
}

Tensor elementwise_mul(const Tensor& a, const Tensor& b) {
    require_defined(a, "elementwise_mul");
    require_defined(b, "elementwise_mul");
    if (!(a.shape() == b.shape()))
        shape_fail("elementwise_mul", fmt::format("shapes {} and {} differ", a.shape().str(), b.shape().str()));
    auto out = make_node(a.shape());
    for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = a.impl()->data[i] * b.impl()->data[i];
    return finish(out, recorder(a, b), [an = a.impl(), bn = b.impl()](const Node& o) {
        if (an->requires_grad) mgrad(*an) += cgrad(o).cwiseProduct(cmap(*bn));
        if (bn->requires_grad) mgrad(*bn) += cgrad(o).cwiseProduct(cmap(*an));
    });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
    require_defined(a, "scale_rows");
    require_defined(s, "scale_rows");
    if (s.rows() != a.rows() || s.cols() != 1)
        shape_fail("scale_rows", fmt::format("scale {} does not match rows of {}", s.shape().str(), a.shape().str()));
    auto out = make_node(a.shape());
    const std::size_t cols = a.cols();
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < cols; ++c) out->data[r * cols + c] = a.impl()->data[r * cols + c] * s.impl()->data[r];
    return finish(out, recorder(a, s), [an = a.impl(), sn = s.impl(), cols](const Node& o) {
        const std::size_t rows = an->shape.rows;
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) an->grad[r * cols + c] += o.grad[r * cols + c] * sn->data[r];
        }
        if (sn->requires_grad) {
            sn->ensure_grad();
            for (std::size_t r = 0; r < rows; ++r) {
                double acc = 0.0;
                for (std::size_t c = 0; c < cols; ++c) acc += o.grad[r * cols + c] * an->data[r * cols + c];
                sn->grad[r] += acc;
            }
        }
    });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
    if (parts.empty()) shape_fail("concat", "no inputs");
    if (axis != 0 && axis != 1) shape_fail("concat", fmt::format("axis must be 0 or 1, got {}", axis));
    Shape s = parts[0].shape();
    bool any_grad = false;
    for (std::size_t i = 1; i < parts.size(); ++i) {
        require_defined(parts[i], "concat");
        const Shape& p = parts[i].shape();
        if (axis == 0) {
            if (p.cols != s.cols) shape_fail("concat", fmt::format("axis 0 column mismatch {} vs {}", s.str(), p.str()));
            s.rows += p.rows;
        } else {
            if (p.rows != s.rows) shape_fail("concat", fmt::format("axis 1 row mismatch {} vs {}", s.str(), p.str()));
            s.cols += p.cols;
        }
    }
    std::vector<NodePtr> nodes;
    nodes.reserve(parts.size());
    for (const auto& p : parts) {
        nodes.push_back(p.impl());
        any_grad = any_grad || p.requires_grad();
    }
    auto out = make_node(s);
    if (axis == 0) {
        std::size_t off = 0;
        for (const auto& n : nodes) {
            std::copy(n->data.begin(), n->data.end(), out->data.begin() + std::ptrdiff_t(off));
            off += n->data.size();
        }
    } else {
        std::size_t col_off = 0;
        for (const auto& n : nodes) {
            for (std::size_t r = 0; r < s.rows; ++r)
                for (std::size_t c = 0; c < n->shape.cols; ++c) out->data[r * s.cols + col_off + c] = n->data[r * n->shape.cols + c];
            col_off += n->shape.cols;
        }
    }
    Tape* tape = (any_grad && g_active) ? g_active : nullptr;
    return finish(out, tape, [nodes = std::move(nodes), axis](const Node& o) {
        if (axis == 0) {
            std::size_t off = 0;
            for (const auto& n : nodes) {
                if (n->requires_grad) {
                    n->ensure_grad();
                    for (std::size_t i = 0; i < n->data.size(); ++i) n->grad[i] += o.grad[off + i];
                }
                off += n->data.size();
            }
        } else {
            std::size_t col_off = 0;
            const std::size_t total = o.shape.cols;
            for (const auto& n : nodes) {
                const std::size_t nc = n->shape.cols;
                if (n->requires_grad) {
                    n->ensure_grad();
                    for (std::size_t r = 0; r < o.shape.rows; ++r)
                        for (std::size_t c = 0; c < nc; ++c) n->grad[r * nc + c] += o.grad[r * total + col_off + c];
                }
                col_off += nc;
            }
        }
    });
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
    return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor mean(const Tensor& a, int axis) {
    require_defined(a, "mean");
    // axis 0 averages over rows -> 1 x cols; axis 1 averages over columns -> rows x 1.
    const Lines lines = Lines::of(a.shape(), axis == 0 ? 0 : 1, "mean");
    if (lines.length == 0) shape_fail("mean", "empty axis");
    Shape s = axis == 0 ? Shape{1, a.cols()} : Shape{a.rows(), 1};
    auto out = make_node(s);
    const auto& d = a.impl()->data;
    const double inv = 1.0 / double(lines.length);
    for (std::size_t l = 0; l < lines.count; ++l) {
        double acc = 0.0;
        for (std::size_t k = 0; k < lines.length; ++k) acc += d[lines.at(l, k)];
        out->data[l] = acc * inv;
    }
    return finish(out, recorder(a), [an = a.impl(), lines, inv](const Node& o) {
        an->ensure_grad();
        for (std::size_t l = 0; l < lines.count; ++l)
            for (std::size_t k = 0; k < lines.length; ++k) an->grad[lines.at(l, k)] += o.grad[l] * inv;
    });
}

Tensor max(const Tensor& a, int axis) {
    require_defined(a, "max");
    const Lines lines = Lines::of(a.shape(), axis, "max");
    if (lines.length == 0) shape_fail("max", "empty axis");
    Shape s = axis == 0 ? Shape{1, a.cols()} : Shape{a.rows(), 1};
    auto out = make_node(s);
    std::vector<std::size_t> arg(lines.count);
    const auto& d = a.impl()->data;
    for (std::size_t l = 0; l < lines.count; ++l) {
        std::size_t best = lines.at(l, 0);
        for (std::size_t k = 1; k < lines.length; ++k)
            if (d[lines.at(l, k)] > d[best]) best = lines.at(l, k);
        arg[l] = best;
        out->data[l] = d[best];
    }
    return finish(out, recorder(a), [an = a.impl(), arg = std::move(arg)](const Node& o) {
        an->ensure_grad();
        for (std::size_t l = 0; l < arg.size(); ++l) an->grad[arg[l]] += o.grad[l];
    });
}

Tensor softmax(const Tensor& a, int axis) {
    require_defined(a, "softmax");
    const Lines lines = Lines::of(a.shape(), axis, "softmax");
    auto out = make_node(a.shape());
    const auto& d = a.impl()->data;
    for (std::size_t l = 0; l < lines.count; ++l) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < lines.length; ++k) mx = std::max(mx, d[lines.at(l, k)]);
        double z = 0.0;
        for (std::size_t k = 0; k < lines.length; ++k) {
            const double e = std::exp(d[lines.at(l, k)] - mx);
            out->data[lines.at(l, k)] = e;
            z += e;
        }
        for (std::size_t k = 0; k < lines.length; ++k) out->data[lines.at(l, k)] /= z;
    }
    return finish(out, recorder(a), [an = a.impl(), lines](const Node& o) {
        an->ensure_grad();
        for (std::size_t l = 0; l < lines.count; ++l) {
            double dot = 0.0;
            for (std::size_t k = 0; k < lines.length; ++k) dot += o.grad[lines.at(l, k)] * o.data[lines.at(l, k)];
            for (std::size_t k = 0; k < lines.length; ++k) {
                const std::size_t i = lines.at(l, k);
                an->grad[i] += o.data[i] * (o.grad[i] - dot);
            }
        }
    });
}

Tensor log_softmax(const Tensor& a, int axis) {
    require_defined(a, "log_softmax");
    const Lines lines = Lines::of(a.shape(), axis, "log_softmax");
    auto out = make_node(a.shape());
    const auto& d = a.impl()->data;
    for (std::size_t l = 0; l < lines.count; ++l) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < lines.length; ++k) mx = std::max(mx, d[lines.at(l, k)]);
        double z = 0.0;
        for (std::size_t k = 0; k < lines.length; ++k) z += std::exp(d[lines.at(l, k)] - mx);
        const double lz = std::log(z);
        for (std::size_t k = 0; k < lines.length; ++k) out->data[lines.at(l, k)] = d[lines.at(l, k)] - mx - lz;
    }
    return finish(out, recorder(a), [an = a.impl(), lines](const Node& o) {
        an->ensure_grad();
        for (std::size_t l = 0; l < lines.count; ++l) {
            double gs = 0.0;
            for (std::size_t k = 0; k < lines.length; ++k) gs += o.grad[lines.at(l, k)];
            for (std::size_t k = 0; k < lines.length; ++k) {
                const std::size_t i = lines.at(l, k);
                an->grad[i] += o.grad[i] - std::exp(o.data[i]) * gs;
            }
        }
    });
}

namespace {
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
    require_defined(a, op);
    auto out = make_node(a.shape());
    const auto& d = a.impl()->data;
    for (std::size_t i = 0; i < d.size(); ++i) out->data[i] = fwd(d[i]);
    // deriv(x, y) gives dy/dx from the input and output values.
    return finish(out, recorder(a), [an = a.impl(), deriv](const Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i] * deriv(an->data[i], o.data[i]);
    });
}
}  // namespace

Tensor tanh(const Tensor& a) {
    return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        a, "sigmoid",
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& a) {
    return unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
    return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sum(const Tensor& a) {
    require_defined(a, "sum");
    auto out = make_node({1, 1});
    double acc = 0.0;
    for (double v : a.impl()->data) acc += v;
    out->data[0] = acc;
    return finish(out, recorder(a), [an = a.impl()](const Node& o) {
        an->ensure_grad();
        for (double& g : an->grad) g += o.grad[0];
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_defined(x, "layer_norm");
    const std::size_t rows = x.rows();
    const std::size_t cols = x.cols();
    const bool affine = gamma.defined();
    if (affine && (gamma.size() != cols || !beta.defined() || beta.size() != cols))
        shape_fail("layer_norm", fmt::format("affine parameters must be 1x{}", cols));
    auto out = make_node(x.shape());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(rows);
    const auto& d = x.impl()->data;
    for (std::size_t r = 0; r < rows; ++r) {
        double mu = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mu += d[r * cols + c];
        mu /= double(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double z = d[r * cols + c] - mu;
            var += z * z;
        }
        var /= double(cols);
        inv_std[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            xhat[i] = (d[i] - mu) * inv_std[r];
            out->data[i] = affine ? xhat[i] * gamma.impl()->data[c] + beta.impl()->data[c] : xhat[i];
        }
    }
    Tape* tape = affine ? recorder(x, gamma, beta) : recorder(x);
    NodePtr gn = affine ? gamma.impl() : nullptr;
    NodePtr bn = affine ? beta.impl() : nullptr;
    return finish(out, tape,
                  [xn = x.impl(), gn, bn, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, cols](const Node& o) {
                      std::vector<double> dxhat(cols);
                      if (gn && gn->requires_grad) gn->ensure_grad();
                      if (bn && bn->requires_grad) bn->ensure_grad();
                      if (xn->requires_grad) xn->ensure_grad();
                      for (std::size_t r = 0; r < rows; ++r) {
                          double s1 = 0.0, s2 = 0.0;
                          for (std::size_t c = 0; c < cols; ++c) {
                              const std::size_t i = r * cols + c;
                              const double g = o.grad[i];
                              if (gn && gn->requires_grad) gn->grad[c] += g * xhat[i];
                              if (bn && bn->requires_grad) bn->grad[c] += g;
                              dxhat[c] = gn ? g * gn->data[c] : g;
                              s1 += dxhat[c];
                              s2 += dxhat[c] * xhat[i];
                          }
                          if (!xn->requires_grad) continue;
                          const double n = double(cols);
                          for (std::size_t c = 0; c < cols; ++c) {
                              const std::size_t i = r * cols + c;
                              xn->grad[i] += inv_std[r] / n * (n * dxhat[c] - s1 - xhat[i] * s2);
                          }
                      }
                  });
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
    require_defined(a, "cosine_similarity");
    require_defined(b, "cosine_similarity");
    if (a.cols() != b.cols())
        shape_fail("cosine_similarity", fmt::format("row widths differ: {} vs {}", a.shape().str(), b.shape().str()));
    const std::size_t n = a.rows(), l = b.rows(), d = a.cols();
    auto out = make_node({n, l});
    auto norms = [d](const std::vector<double>& v, std::size_t rows) {
        std::vector<double> r(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            double acc = 0.0;
            for (std::size_t c = 0; c < d; ++c) acc += v[i * d + c] * v[i * d + c];
            r[i] = std::sqrt(acc);
        }
        return r;
    };
    std::vector<double> na = norms(a.impl()->data, n);
    std::vector<double> nb = norms(b.impl()->data, l);
    RowMat dots = cmap(*a.impl()) * cmap(*b.impl()).transpose();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < l; ++j)
            out->data[i * l + j] = (na[i] == 0.0 || nb[j] == 0.0) ? 0.0 : dots(Eigen::Index(i), Eigen::Index(j)) / (na[i] * nb[j]);
    return finish(out, recorder(a, b), [an = a.impl(), bn = b.impl(), na = std::move(na), nb = std::move(nb), n, l, d](const Node& o) {
        if (an->requires_grad) an->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            if (na[i] == 0.0) continue;
            for (std::size_t j = 0; j < l; ++j) {
                if (nb[j] == 0.0) continue;
                const double g = o.grad[i * l + j];
                if (g == 0.0) continue;
                const double s = o.data[i * l + j];
                const double inv = 1.0 / (na[i] * nb[j]);
                for (std::size_t c = 0; c < d; ++c) {
                    const double ai = an->data[i * d + c];
                    const double bj = bn->data[j * d + c];
                    if (an->requires_grad) an->grad[i * d + c] += g * (bj * inv - s * ai / (na[i] * na[i]));
                    if (bn->requires_grad) bn->grad[j * d + c] += g * (ai * inv - s * bj / (nb[j] * nb[j]));
                }
            }
        }
    });
}

Tensor cross_entropy(const Tensor& logits, std::size_t target) {
    require_defined(logits, "cross_entropy");
    if (logits.rows() != 1 && logits.cols() != 1)
        shape_fail("cross_entropy", fmt::format("logits must be a vector, got {}", logits.shape().str()));
    const std::size_t k = logits.size();
    if (target >= k) shape_fail("cross_entropy", fmt::format("target {} out of range for {} logits", target, k));
    const auto& d = logits.impl()->data;
    const double mx = *std::max_element(d.begin(), d.end());
    std::vector<double> p(k);
    double z = 0.0;
    for (std::size_t i = 0; i < k; ++i) z += (p[i] = std::exp(d[i] - mx));
    for (double& v : p) v /= z;
    auto out = make_node({1, 1});
    out->data[0] = -(d[target] - mx - std::log(z));
    return finish(out, recorder(logits), [ln = logits.impl(), p = std::move(p), target](const Node& o) {
        ln->ensure_grad();
        for (std::size_t i = 0; i < p.size(); ++i) ln->grad[i] += o.grad[0] * (p[i] - (i == target ? 1.0 : 0.0));
    });
}

Tensor cross_entropy_rows(const Tensor& logits, std::span<const std::size_t> targets) {
    require_defined(logits, "cross_entropy_rows");
    const std::size_t m = logits.rows(), k = logits.cols();
    if (targets.size() != m) shape_fail("cross_entropy_rows", fmt::format("{} targets for {} rows", targets.size(), m));
    const auto& d = logits.impl()->data;
    std::vector<double> p(m * k);
    double total = 0.0;
    for (std::size_t r = 0; r < m; ++r) {
        if (targets[r] >= k) shape_fail("cross_entropy_rows", fmt::format("target {} out of range for {} classes", targets[r], k));
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, d[r * k + c]);
        double z = 0.0;
        for (std::size_t c = 0; c < k; ++c) z += (p[r * k + c] = std::exp(d[r * k + c] - mx));
        for (std::size_t c = 0; c < k; ++c) p[r * k + c] /= z;
        total += -(d[r * k + targets[r]] - mx - std::log(z));
    }
    auto out = make_node({1, 1});
    out->data[0] = total;
    std::vector<std::size_t> tg(targets.begin(), targets.end());
    return finish(out, recorder(logits), [ln = logits.impl(), p = std::move(p), tg = std::move(tg), k](const Node& o) {
        ln->ensure_grad();
        for (std::size_t r = 0; r < tg.size(); ++r)
            for (std::size_t c = 0; c < k; ++c) ln->grad[r * k + c] += o.grad[0] * (p[r * k + c] - (c == tg[r] ? 1.0 : 0.0));
    });
}

Tensor select_rows(const Tensor& a, std::span<const std::size_t> rows) {
    require_defined(a, "select_rows");
    const std::size_t cols = a.cols();
    for (auto r : rows)
        if (r >= a.rows()) shape_fail("select_rows", fmt::format("row {} out of range for {}", r, a.shape().str()));
    auto out = make_node({rows.size(), cols});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(a.impl()->data.begin() + std::ptrdiff_t(rows[i] * cols), cols, out->data.begin() + std::ptrdiff_t(i * cols));
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return finish(out, recorder(a), [an = a.impl(), idx = std::move(idx), cols](const Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t c = 0; c < cols; ++c) an->grad[idx[i] * cols + c] += o.grad[i * cols + c];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    require_defined(a, "reshape");
    if (shape.size() != a.size()) shape_fail("reshape", fmt::format("cannot reshape {} to {}", a.shape().str(), shape.str()));
    auto out = make_node(shape);
    out->data = a.impl()->data;
    return finish(out, recorder(a), [an = a.impl()](const Node& o) {
        an->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) an->grad[i] += o.grad[i];
    });
}

Tensor take(const Tensor& table, std::span<const std::size_t> index, Shape shape) {
    require_defined(table, "take");
    if (index.size() != shape.size()) shape_fail("take", fmt::format("{} indices for shape {}", index.size(), shape.str()));
    auto out = make_node(shape);
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= table.size()) shape_fail("take", fmt::format("index {} out of range for table {}", index[i], table.shape().str()));
        out->data[i] = table.impl()->data[index[i]];
    }
    std::vector<std::size_t> idx(index.begin(), index.end());
    return finish(out, recorder(table), [tn = table.impl(), idx = std::move(idx)](const Node& o) {
        tn->ensure_grad();
        for (std::size_t i = 0; i < idx.size(); ++i) tn->grad[idx[i]] += o.grad[i];
    });
}

// ---- gradient checking ----------------------------------------------------

double GradCheckReport::worst() const {
    double w = 0.0;
    for (double e : max_rel_error) w = std::max(w, e);
    return w;
}

GradCheckReport grad_check(const ScalarFn& f, std::span<Tensor> inputs, const GradCheckOptions& opts) {
    GradCheckReport report;
    report.max_rel_error.assign(inputs.size(), 0.0);

    std::vector<std::vector<double>> analytic(inputs.size());
    {
        for (auto& in : inputs) in.zero_grad();
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = f(std::span<const Tensor>(inputs.data(), inputs.size()));
        if (loss.size() != 1) shape_fail("grad_check", fmt::format("function must return a scalar, got {}", loss.shape().str()));
        if (loss.on_tape()) tape.backward(loss);
        for (std::size_t i = 0; i < inputs.size(); ++i) analytic[i] = inputs[i].grad();
    }

    std::vector<std::pair<std::size_t, std::size_t>> elems = opts.elements;
    if (elems.empty())
        for (std::size_t i = 0; i < inputs.size(); ++i)
            for (std::size_t e = 0; e < inputs[i].size(); ++e) elems.emplace_back(i, e);
    if (opts.elements.empty() && opts.sample > 0 && opts.sample < elems.size()) {
        Rng rng(derive(opts.seed, {tag("grad_check")}));
        shuffle(elems, rng);
        elems.resize(opts.sample);
    }

    auto eval = [&]() {
        Tape* saved = g_active;
        g_active = nullptr;
        double v = f(std::span<const Tensor>(inputs.data(), inputs.size())).item();
        g_active = saved;
        return v;
    };
    for (auto [i, e] : elems) {
        auto data = inputs[i].mutable_data();
        const double x = data[e];
        data[e] = x + opts.eps;
        const double fp = eval();
        data[e] = x - opts.eps;
        const double fm = eval();
        data[e] = x;
        const double num = (fp - fm) / (2.0 * opts.eps);
        const double ana = analytic[i][e];
        const double denom = std::max({std::abs(ana), std::abs(num), opts.abs_floor});
        const double rel = std::abs(ana - num) / denom;
        report.max_rel_error[i] = std::max(report.max_rel_error[i], rel);
        ++report.checked;
    }
    report.passed = report.worst() < opts.tol;
    return report;
}

}  // namespace susa
