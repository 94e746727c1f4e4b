#include "umi/diff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "umi/errors.hpp"

namespace umi::diff {

std::string to_string(const Shape& s) {
    return "(" + std::to_string(s.rows) + "x" + std::to_string(s.cols) + ")";
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : shape_{rows, cols}, values_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values)
    : shape_{rows, cols}, values_(std::move(values)) {
    if (values_.size() != rows * cols) {
        throw ShapeError("tensor " + to_string(shape_) + " given " +
                         std::to_string(values_.size()) + " values");
    }
}

Tensor Tensor::row(std::vector<double> v) {
    const auto n = v.size();
    return Tensor(1, n, std::move(v));
}

Tensor Tensor::column(std::vector<double> v) {
    const auto n = v.size();
    return Tensor(n, 1, std::move(v));
}

double Tensor::item() const {
    if (values_.size() != 1) throw NotScalar("tensor " + to_string(shape_) + " is not 1x1");
    return values_[0];
}

std::vector<double> Tensor::row_values(std::size_t r) const {
    auto first = values_.begin() + static_cast<std::ptrdiff_t>(r * shape_.cols);
    return {first, first + static_cast<std::ptrdiff_t>(shape_.cols)};
}

// ---------------------------------------------------------------------------
// Var

Shape Var::shape() const { return tape_->shape_of(*this); }
std::span<const double> Var::values() const { return tape_->values_of(*this); }

double Var::value(std::size_t r, std::size_t c) const {
    return values()[r * shape().cols + c];
}

double Var::item() const {
    if (shape().size() != 1) throw NotScalar("value " + to_string(shape()) + " is not 1x1");
    return values()[0];
}

Tensor Var::to_tensor() const {
    const auto v = values();
    return Tensor(shape().rows, shape().cols, std::vector<double>(v.begin(), v.end()));
}

// ---------------------------------------------------------------------------
// Tape

Var Tape::push(Shape shape, std::vector<double> value) {
    Node n;
    n.shape = shape;
    n.value = std::move(value);
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

void Tape::check_owner(Var v) const {
    if (v.tape_ != this) throw ShapeError("variable belongs to a different tape");
}

Var Tape::param(Tensor& t) {
    const auto v = t.values();
    Var out = push(t.shape(), std::vector<double>(v.begin(), v.end()));
    bindings_.emplace_back(out.id_, &t);
    return out;
}

Var Tape::constant(Tensor t) {
    const auto v = t.values();
    return push(t.shape(), std::vector<double>(v.begin(), v.end()));
}

Var Tape::matmul(Var a, Var b) {
    check_owner(a);
    check_owner(b);
    const Shape sa = shape_of(a), sb = shape_of(b);
    if (sa.cols != sb.rows) {
        throw ShapeError("matmul " + to_string(sa) + " * " + to_string(sb));
    }
    const std::size_t m = sa.rows, k = sa.cols, n = sb.cols;
    std::vector<double> out(m * n, 0.0);
    {
        const auto& av = node(a).value;
        const auto& bv = node(b).value;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = av[i * k + p];
                if (aip == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
            }
        }
    }
    Var c = push({m, n}, std::move(out));
    node(c).backward = [this, a, b, c, m, k, n] {
        const auto& g = nodes_[c.id_].grad;
        const auto& av = nodes_[a.id_].value;
        const auto& bv = nodes_[b.id_].value;
        auto& ga = nodes_[a.id_].grad;
        auto& gb = nodes_[b.id_].grad;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
                ga[i * k + p] += acc;
            }
        }
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const double aip = av[i * k + p];
                if (aip == 0.0) continue;
                for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
            }
        }
    };
    return c;
}

namespace {

std::size_t broadcast_dim(std::size_t a, std::size_t b, bool& ok) {
    if (a == b) return a;
    if (a == 1) return b;
    if (b == 1) return a;
    ok = false;
    return 0;
}

}  // namespace

template <class Fwd, class Bwd>
Var Tape::broadcast_binary(Var a, Var b, Fwd fwd, Bwd bwd, const char* name) {
    check_owner(a);
    check_owner(b);
    const Shape sa = shape_of(a), sb = shape_of(b);
    bool ok = true;
    const Shape so{broadcast_dim(sa.rows, sb.rows, ok), broadcast_dim(sa.cols, sb.cols, ok)};
    if (!ok) throw ShapeError(std::string(name) + " " + to_string(sa) + " vs " + to_string(sb));

    std::vector<double> out(so.size());
    {
        const auto& av = node(a).value;
        const auto& bv = node(b).value;
        for (std::size_t r = 0; r < so.rows; ++r) {
            const std::size_t ra = sa.rows == 1 ? 0 : r, rb = sb.rows == 1 ? 0 : r;
            for (std::size_t c = 0; c < so.cols; ++c) {
                const std::size_t ca = sa.cols == 1 ? 0 : c, cb = sb.cols == 1 ? 0 : c;
                out[r * so.cols + c] = fwd(av[ra * sa.cols + ca], bv[rb * sb.cols + cb]);
            }
        }
    }
    Var o = push(so, std::move(out));
    node(o).backward = [this, a, b, o, sa, sb, so, bwd] {
        const auto& g = nodes_[o.id_].grad;
        const auto& av = nodes_[a.id_].value;
        const auto& bv = nodes_[b.id_].value;
        auto& ga = nodes_[a.id_].grad;
        auto& gb = nodes_[b.id_].grad;
        for (std::size_t r = 0; r < so.rows; ++r) {
            const std::size_t ra = sa.rows == 1 ? 0 : r, rb = sb.rows == 1 ? 0 : r;
            for (std::size_t c = 0; c < so.cols; ++c) {
                const std::size_t ca = sa.cols == 1 ? 0 : c, cb = sb.cols == 1 ? 0 : c;
                const std::size_t ia = ra * sa.cols + ca, ib = rb * sb.cols + cb;
                double da = 0.0, db = 0.0;
                bwd(av[ia], bv[ib], g[r * so.cols + c], da, db);
                ga[ia] += da;
                gb[ib] += db;
            }
        }
    };
    return o;
}

Var Tape::add(Var a, Var b) {
    return broadcast_binary(
        a, b, [](double x, double y) { return x + y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = g;
        },
        "add");
}

Var Tape::sub(Var a, Var b) {
    return broadcast_binary(
        a, b, [](double x, double y) { return x - y; },
        [](double, double, double g, double& da, double& db) {
            da = g;
            db = -g;
        },
        "sub");
}

Var Tape::mul(Var a, Var b) {
    return broadcast_binary(
        a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g * y;
            db = g * x;
        },
        "mul");
}

Var Tape::div(Var a, Var b) {
    for (double y : values_of(b)) {
        if (y == 0.0) throw DomainError("division by zero");
    }
    return broadcast_binary(
        a, b, [](double x, double y) { return x / y; },
        [](double x, double y, double g, double& da, double& db) {
            da = g / y;
            db = -g * x / (y * y);
        },
        "div");
}

template <class Fwd, class Bwd>
Var Tape::unary(Var a, Fwd fwd, Bwd bwd) {
    check_owner(a);
    const Shape s = shape_of(a);
    std::vector<double> out(s.size());
    {
        const auto& av = node(a).value;
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i]);
    }
    Var o = push(s, std::move(out));
    node(o).backward = [this, a, o, bwd] {
        const auto& g = nodes_[o.id_].grad;
        const auto& x = nodes_[a.id_].value;
        const auto& y = nodes_[o.id_].value;
        auto& ga = nodes_[a.id_].grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += bwd(x[i], y[i], g[i]);
    };
    return o;
}

Var Tape::scale(Var a, double k) {
    return unary(a, [k](double x) { return k * x; },
                 [k](double, double, double g) { return k * g; });
}

Var Tape::relu(Var a) {
    return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                 [](double x, double, double g) { return x > 0.0 ? g : 0.0; });
}

Var Tape::tanh(Var a) {
    return unary(a, [](double x) { return std::tanh(x); },
                 [](double, double y, double g) { return g * (1.0 - y * y); });
}

Var Tape::exp(Var a) {
    return unary(a, [](double x) { return std::exp(x); },
                 [](double, double y, double g) { return g * y; });
}

Var Tape::log(Var a) {
    for (double x : values_of(a)) {
        if (!(x > 0.0)) throw DomainError("log of non-positive value " + std::to_string(x));
    }
    return unary(a, [](double x) { return std::log(x); },
                 [](double x, double, double g) { return g / x; });
}

Var Tape::transpose(Var a) {
    check_owner(a);
    const Shape s = shape_of(a);
    std::vector<double> out(s.size());
    {
        const auto& av = node(a).value;
        for (std::size_t r = 0; r < s.rows; ++r)
            for (std::size_t c = 0; c < s.cols; ++c) out[c * s.rows + r] = av[r * s.cols + c];
    }
    Var o = push({s.cols, s.rows}, std::move(out));
    node(o).backward = [this, a, o, s] {
        const auto& g = nodes_[o.id_].grad;
        auto& ga = nodes_[a.id_].grad;
        for (std::size_t r = 0; r < s.rows; ++r)
            for (std::size_t c = 0; c < s.cols; ++c) ga[r * s.cols + c] += g[c * s.rows + r];
    };
    return o;
}

Var Tape::slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
    check_owner(a);
    const Shape s = shape_of(a);
    if (r0 >= r1 || c0 >= c1 || r1 > s.rows || c1 > s.cols) {
        throw ShapeError("slice [" + std::to_string(r0) + "," + std::to_string(r1) + ")x[" +
                         std::to_string(c0) + "," + std::to_string(c1) + ") of " + to_string(s));
    }
    const Shape so{r1 - r0, c1 - c0};
    std::vector<double> out(so.size());
    {
        const auto& av = node(a).value;
        for (std::size_t r = 0; r < so.rows; ++r)
            for (std::size_t c = 0; c < so.cols; ++c)
                out[r * so.cols + c] = av[(r + r0) * s.cols + (c + c0)];
    }
    Var o = push(so, std::move(out));
    node(o).backward = [this, a, o, s, so, r0, c0] {
        const auto& g = nodes_[o.id_].grad;
        auto& ga = nodes_[a.id_].grad;
        for (std::size_t r = 0; r < so.rows; ++r)
            for (std::size_t c = 0; c < so.cols; ++c)
                ga[(r + r0) * s.cols + (c + c0)] += g[r * so.cols + c];
    };
    return o;
}

Var Tape::concat(std::span<const Var> parts, Axis axis) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    std::vector<Var> ps(parts.begin(), parts.end());
    Shape so = shape_of(ps[0]);
    check_owner(ps[0]);
    for (std::size_t i = 1; i < ps.size(); ++i) {
        check_owner(ps[i]);
        const Shape s = shape_of(ps[i]);
        if (axis == Axis::Rows) {
            if (s.cols != so.cols) throw ShapeError("concat rows " + to_string(so) + " + " + to_string(s));
            so.rows += s.rows;
        } else {
            if (s.rows != so.rows) throw ShapeError("concat cols " + to_string(so) + " + " + to_string(s));
            so.cols += s.cols;
        }
    }
    std::vector<double> out(so.size());
    std::size_t offset = 0;
    for (const Var& p : ps) {
        const Shape s = shape_of(p);
        const auto& pv = node(p).value;
        for (std::size_t r = 0; r < s.rows; ++r) {
            for (std::size_t c = 0; c < s.cols; ++c) {
                const std::size_t idx =
                    axis == Axis::Rows ? (r + offset) * so.cols + c : r * so.cols + c + offset;
                out[idx] = pv[r * s.cols + c];
            }
        }
        offset += axis == Axis::Rows ? s.rows : s.cols;
    }
    Var o = push(so, std::move(out));
    node(o).backward = [this, ps = std::move(ps), o, so, axis] {
        const auto& g = nodes_[o.id_].grad;
        std::size_t off = 0;
        for (const Var& p : ps) {
            const Shape s = nodes_[p.id_].shape;
            auto& gp = nodes_[p.id_].grad;
            for (std::size_t r = 0; r < s.rows; ++r) {
                for (std::size_t c = 0; c < s.cols; ++c) {
                    const std::size_t idx =
                        axis == Axis::Rows ? (r + off) * so.cols + c : r * so.cols + c + off;
                    gp[r * s.cols + c] += g[idx];
                }
            }
            off += axis == Axis::Rows ? s.rows : s.cols;
        }
    };
    return o;
}

Var Tape::softmax_row(Var a) {
    check_owner(a);
    const Shape s = shape_of(a);
    std::vector<double> out(s.size());
    {
        const auto& av = node(a).value;
        for (std::size_t r = 0; r < s.rows; ++r) {
            const double* x = av.data() + r * s.cols;
            double* y = out.data() + r * s.cols;
            const double mx = *std::max_element(x, x + s.cols);
            if (!std::isfinite(mx)) throw DomainError("softmax row without a finite entry");
            double z = 0.0;
            for (std::size_t c = 0; c < s.cols; ++c) z += (y[c] = std::exp(x[c] - mx));
            for (std::size_t c = 0; c < s.cols; ++c) y[c] /= z;
        }
    }
    Var o = push(s, std::move(out));
    node(o).backward = [this, a, o, s] {
        const auto& g = nodes_[o.id_].grad;
        const auto& y = nodes_[o.id_].value;
        auto& ga = nodes_[a.id_].grad;
        for (std::size_t r = 0; r < s.rows; ++r) {
            double dot = 0.0;
            for (std::size_t c = 0; c < s.cols; ++c) dot += g[r * s.cols + c] * y[r * s.cols + c];
            for (std::size_t c = 0; c < s.cols; ++c) {
                const std::size_t i = r * s.cols + c;
                ga[i] += y[i] * (g[i] - dot);
            }
        }
    };
    return o;
}

Var Tape::log_softmax_row(Var a) {
    check_owner(a);
    const Shape s = shape_of(a);
    std::vector<double> out(s.size());
    {
        const auto& av = node(a).value;
        for (std::size_t r = 0; r < s.rows; ++r) {
            const double* x = av.data() + r * s.cols;
            const double mx = *std::max_element(x, x + s.cols);
            if (!std::isfinite(mx)) throw DomainError("log-softmax row without a finite entry");
            double z = 0.0;
            for (std::size_t c = 0; c < s.cols; ++c) z += std::exp(x[c] - mx);
            const double lse = mx + std::log(z);
            for (std::size_t c = 0; c < s.cols; ++c) out[r * s.cols + c] = x[c] - lse;
        }
    }
    Var o = push(s, std::move(out));
    node(o).backward = [this, a, o, s] {
        const auto& g = nodes_[o.id_].grad;
        const auto& y = nodes_[o.id_].value;
        auto& ga = nodes_[a.id_].grad;
        for (std::size_t r = 0; r < s.rows; ++r) {
            double gs = 0.0;
            for (std::size_t c = 0; c < s.cols; ++c) gs += g[r * s.cols + c];
            for (std::size_t c = 0; c < s.cols; ++c) {
                const std::size_t i = r * s.cols + c;
                ga[i] += g[i] - std::exp(y[i]) * gs;
            }
        }
    };
    return o;
}

Var Tape::sum(Var a) {
    check_owner(a);
    const auto& av = node(a).value;
    const double total = std::accumulate(av.begin(), av.end(), 0.0);
    Var o = push({1, 1}, {total});
    node(o).backward = [this, a, o] {
        const double g = nodes_[o.id_].grad[0];
        for (double& x : nodes_[a.id_].grad) x += g;
    };
    return o;
}

Var Tape::row_sum(Var a) {
    check_owner(a);
    const Shape s = shape_of(a);
    std::vector<double> out(s.rows, 0.0);
    {
        const auto& av = node(a).value;
        for (std::size_t r = 0; r < s.rows; ++r)
            for (std::size_t c = 0; c < s.cols; ++c) out[r] += av[r * s.cols + c];
    }
    Var o = push({s.rows, 1}, std::move(out));
    node(o).backward = [this, a, o, s] {
        const auto& g = nodes_[o.id_].grad;
        auto& ga = nodes_[a.id_].grad;
        for (std::size_t r = 0; r < s.rows; ++r)
            for (std::size_t c = 0; c < s.cols; ++c) ga[r * s.cols + c] += g[r];
    };
    return o;
}

Var Tape::col_sum(Var a) {
    check_owner(a);
    const Shape s = shape_of(a);
    std::vector<double> out(s.cols, 0.0);
    {
        const auto& av = node(a).value;
        for (std::size_t r = 0; r < s.rows; ++r)
            for (std::size_t c = 0; c < s.cols; ++c) out[c] += av[r * s.cols + c];
    }
    Var o = push({1, s.cols}, std::move(out));
    node(o).backward = [this, a, o, s] {
        const auto& g = nodes_[o.id_].grad;
        auto& ga = nodes_[a.id_].grad;
        for (std::size_t r = 0; r < s.rows; ++r)
            for (std::size_t c = 0; c < s.cols; ++c) ga[r * s.cols + c] += g[c];
    };
    return o;
}

Var Tape::mean(Var a) {
    const double n = static_cast<double>(shape_of(a).size());
    return scale(sum(a), 1.0 / n);
}

Var Tape::row_mean(Var a) {
    const double n = static_cast<double>(shape_of(a).cols);
    return scale(row_sum(a), 1.0 / n);
}

Var Tape::std(Var a) {
    check_owner(a);
    const auto& av = node(a).value;
    const double n = static_cast<double>(av.size());
    const double mu = std::accumulate(av.begin(), av.end(), 0.0) / n;
    double var = 0.0;
    for (double x : av) var += (x - mu) * (x - mu);
    var /= n;
    Var o = push({1, 1}, {std::sqrt(var + kStdEpsilon)});
    node(o).backward = [this, a, o, mu, n] {
        const double g = nodes_[o.id_].grad[0];
        const double sd = nodes_[o.id_].value[0];
        const auto& x = nodes_[a.id_].value;
        auto& ga = nodes_[a.id_].grad;
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * (x[i] - mu) / (n * sd);
    };
    return o;
}

Var Tape::row_std(Var a) {
    check_owner(a);
    const Shape s = shape_of(a);
    const double n = static_cast<double>(s.cols);
    std::vector<double> mu(s.rows, 0.0), out(s.rows, 0.0);
    {
        const auto& av = node(a).value;
        for (std::size_t r = 0; r < s.rows; ++r) {
            for (std::size_t c = 0; c < s.cols; ++c) mu[r] += av[r * s.cols + c];
            mu[r] /= n;
            double var = 0.0;
            for (std::size_t c = 0; c < s.cols; ++c) {
                const double d = av[r * s.cols + c] - mu[r];
                var += d * d;
            }
            out[r] = std::sqrt(var / n + kStdEpsilon);
        }
    }
    Var o = push({s.rows, 1}, std::move(out));
    node(o).backward = [this, a, o, s, n, mu = std::move(mu)] {
        const auto& g = nodes_[o.id_].grad;
        const auto& sd = nodes_[o.id_].value;
        const auto& x = nodes_[a.id_].value;
        auto& ga = nodes_[a.id_].grad;
        for (std::size_t r = 0; r < s.rows; ++r) {
            const double k = g[r] / (n * sd[r]);
            for (std::size_t c = 0; c < s.cols; ++c) {
                const std::size_t i = r * s.cols + c;
                ga[i] += k * (x[i] - mu[r]);
            }
        }
    };
    return o;
}

void Tape::backward(Var loss) {
    check_owner(loss);
    if (shape_of(loss).size() != 1) {
        throw NotScalar("backward from non-scalar " + to_string(shape_of(loss)));
    }
    for (Node& n : nodes_) n.grad.assign(n.value.size(), 0.0);
    nodes_[loss.id_].grad[0] = 1.0;
    for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        if (nodes_[i].backward) nodes_[i].backward();
    }
    for (auto& [id, tensor] : bindings_) {
        if (!tensor->has_grad()) tensor->zero_grad();
        auto dst = tensor->grad();
        const auto& src = nodes_[id].grad;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    }
}

}  // namespace umi::diff
