#pragma once

#include <array>
#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

namespace regrasp::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense row-major tensor of doubles. Values are validated to be finite at
/// construction; instances are treated as immutable once handed to a Tape.
class Tensor {
public:
    Tensor();  // scalar zero
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor zeros(Shape shape);
    static Tensor ones(Shape shape);
    static Tensor full(Shape shape, double v);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool is_scalar() const { return data_.size() == 1; }
    bool requires_grad() const { return requires_grad_; }
    void set_requires_grad(bool b) { requires_grad_ = b; }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& mutable_data() { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    // 2-D access; no bounds checks beyond debug asserts.
    double at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
    double& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }

    std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    double value() const;  // scalar only

private:
    Shape shape_;
    std::vector<double> data_;
    bool requires_grad_ = false;
};

class Tape;

/// Handle to a node on a Tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    const Shape& shape() const;
    double scalar_value() const { return value().value(); }
};

/// Gradients of a scalar output with respect to every grad-requiring leaf,
/// keyed by node id. Leaves that do not influence the output map to zeros.
class GradientMap {
public:
    const Tensor& at(const Var& v) const;
    bool contains(const Var& v) const { return grads_.count(v.id) != 0; }
    std::size_t size() const { return grads_.size(); }
    void set(int id, Tensor t) { grads_[id] = std::move(t); }

private:
    std::unordered_map<int, Tensor> grads_;
};

/// Reverse-mode tape. Nodes are recorded in topological order (parents
/// always precede children); backward() sweeps the tape once in reverse.
/// Single-threaded per tape.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self, const Tensor& grad_out,
                                          std::vector<Tensor>& buf, std::vector<char>& has)>;

    Var leaf(Tensor t);
    Var constant(Tensor t);
    Var scalar(double v) { return constant(Tensor::scalar(v)); }

    Var record(Tensor value, std::vector<int> parents, BackwardFn backward);

    const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
    bool is_leaf(int id) const { return nodes_[static_cast<std::size_t>(id)].is_leaf; }
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// Backpropagate from a scalar output. Deterministic for a fixed tape;
    /// may be called repeatedly with identical results.
    GradientMap backward(const Var& output);

private:
    struct Node {
        Tensor value;
        std::vector<int> parents;
        BackwardFn backward;
        bool needs_grad = false;
        bool is_leaf = false;
    };
    // Deque keeps node references stable while ops append new nodes.
    std::deque<Node> nodes_;
};

namespace detail {
void accum(std::vector<Tensor>& buf, std::vector<char>& has, int id, const Shape& shape,
           const std::vector<double>& g);
}

// ---- primitive operations -------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var neg(Var a);

Var matmul(Var a, Var b);      // (n,k)x(k,m)->(n,m) or (n,k)x(k)->(n)
Var transpose(Var a);          // rank-2 only
Var reshape(Var a, Shape s);
Var concat(const std::vector<Var>& parts);            // rank<=1 parts -> 1-D
Var gather(Var a, std::vector<std::size_t> indices);  // flat indices -> 1-D

Var sum(Var a);
Var mean(Var a);
Var min_all(Var a);   // ties broken toward the lowest flat index
Var min_rows(Var a);  // (n,m) -> (n), per-row min, lowest-index ties

Var relu(Var a);
Var tanh(Var a);
Var sqrt(Var a);   // subgradient 0 at x == 0
Var square(Var a);
Var abs(Var a);    // subgradient 0 at x == 0
Var sin(Var a);
Var cos(Var a);
Var l2_norm(Var a);  // sqrt(sum x^2); subgradient 0 at the origin

/// D[i][j] = sum_k (P[i][k]-Q[j][k])^2, accumulated in coordinate order so
/// values match a straightforward per-pair oracle bit for bit.
Var pairwise_sqdist(Var p, Var q);

/// Column means of an (n,k) matrix computed with per-column sorted
/// summation, so the value is invariant to row permutations.
Var sorted_mean_rows(Var pts);

// ---- scalar-mixing conveniences --------------------------------------------

Var add(Var a, double b);
Var add(double a, Var b);
Var sub(Var a, double b);
Var sub(double a, Var b);
Var mul(Var a, double b);
Var mul(double a, Var b);
Var div(Var a, double b);
Var div(double a, Var b);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }
inline Var operator+(Var a, double b) { return add(a, b); }
inline Var operator+(double a, Var b) { return add(a, b); }
inline Var operator-(Var a, double b) { return sub(a, b); }
inline Var operator-(double a, Var b) { return sub(a, b); }
inline Var operator*(Var a, double b) { return mul(a, b); }
inline Var operator*(double a, Var b) { return mul(a, b); }
inline Var operator/(Var a, double b) { return div(a, b); }
inline Var operator/(double a, Var b) { return div(a, b); }

// ---- composites -------------------------------------------------------------

Var sum_sq(Var a);                    // sum(square(a))
Var l1_norm(Var a);                   // sum(abs(a))
Var max_with(Var a, double floor_v);  // elementwise max(a, floor)
Var add_rowvec(Var mat, Var row);     // (n,k) + broadcast row (k)

// ---- finite differences ------------------------------------------------------

/// A scalar-valued differentiable function of one tensor, expressed as a
/// tape computation over the given leaf.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
/// Throws if the function evaluates to a non-finite value, naming the
/// offending coordinate.
double finite_diff_check(const ScalarFn& f, const Tensor& x, double step);

}  // namespace regrasp::ad
