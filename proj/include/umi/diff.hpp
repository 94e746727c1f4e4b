#pragma once

// Dense 2-D tensors with tape-based reverse-mode differentiation.
//
// Every tensor is a row-major matrix; scalars are 1x1 and vectors are 1xn or
// nx1. A Tape records primitives in creation order, which is already a
// topological order, so backward() is a single reverse sweep.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace umi::diff {

struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor(1, 1, v); }
    static Tensor row(std::vector<double> v);
    static Tensor column(std::vector<double> v);

    const Shape& shape() const { return shape_; }
    std::size_t rows() const { return shape_.rows; }
    std::size_t cols() const { return shape_.cols; }
    std::size_t size() const { return values_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_.cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * shape_.cols + c]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    double item() const;

    // grad is absent until the tensor takes part in a backward pass or
    // zero_grad() is called.
    bool has_grad() const { return !grad_.empty(); }
    std::span<double> grad() { return grad_; }
    std::span<const double> grad() const { return grad_; }
    void zero_grad() { grad_.assign(values_.size(), 0.0); }
    void clear_grad() { grad_.clear(); }

    std::vector<double> row_values(std::size_t r) const;

private:
    Shape shape_;
    std::vector<double> values_;
    std::vector<double> grad_;
};

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;

    Tape& tape() const { return *tape_; }
    std::uint32_t id() const { return id_; }
    Shape shape() const;
    std::size_t rows() const { return shape().rows; }
    std::size_t cols() const { return shape().cols; }
    std::span<const double> values() const;
    double value(std::size_t r = 0, std::size_t c = 0) const;
    double item() const;
    Tensor to_tensor() const;

private:
    friend class Tape;
    Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::uint32_t id_ = 0;
};

enum class Axis { Rows, Cols };

class Tape {
public:
    static constexpr double kStdEpsilon = 1e-12;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf bound to a parameter; backward() accumulates into t.grad().
    // The tensor must outlive every backward() call on this tape.
    Var param(Tensor& t);
    Var constant(Tensor t);
    Var constant(double v) { return constant(Tensor::scalar(v)); }

    Var matmul(Var a, Var b);

    // Elementwise with broadcasting: each dimension must match or be 1.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var scale(Var a, double k);

    Var transpose(Var a);
    Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);
    Var concat(std::span<const Var> parts, Axis axis);
    Var concat(std::initializer_list<Var> parts, Axis axis) {
        return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
    }

    Var relu(Var a);
    Var tanh(Var a);
    Var exp(Var a);
    Var log(Var a);

    // Row-wise softmax; -inf entries receive zero probability.
    Var softmax_row(Var a);
    Var log_softmax_row(Var a);

    Var sum(Var a);
    Var row_sum(Var a);  // m x n -> m x 1
    Var col_sum(Var a);  // m x n -> 1 x n
    Var mean(Var a);
    Var row_mean(Var a);

    // Population standard deviation, sqrt(var + kStdEpsilon).
    Var std(Var a);
    Var row_std(Var a);

    void backward(Var loss);

    std::size_t size() const { return nodes_.size(); }
    Shape shape_of(Var v) const { return nodes_[v.id_].shape; }
    std::span<const double> values_of(Var v) const { return nodes_[v.id_].value; }

private:
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad;
        std::function<void()> backward;
    };

    Var push(Shape shape, std::vector<double> value);
    void check_owner(Var v) const;
    Node& node(Var v) { return nodes_[v.id_]; }
    std::vector<double>& grad_of(Var v) { return nodes_[v.id_].grad; }

    template <class Fwd, class Bwd>
    Var broadcast_binary(Var a, Var b, Fwd fwd, Bwd bwd, const char* name);
    template <class Fwd, class Bwd>
    Var unary(Var a, Fwd fwd, Bwd bwd);

    std::vector<Node> nodes_;
    std::vector<std::pair<std::uint32_t, Tensor*>> bindings_;
};

inline Var operator+(Var a, Var b) { return a.tape().add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape().sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape().mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape().div(a, b); }
inline Var operator*(Var a, double k) { return a.tape().scale(a, k); }
inline Var operator*(double k, Var a) { return a.tape().scale(a, k); }
inline Var operator-(Var a) { return a.tape().scale(a, -1.0); }

}  // namespace umi::diff
