#include "regrasp/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace regrasp::ad {

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// ---- Tensor -----------------------------------------------------------------

Tensor::Tensor() : shape_{}, data_{0.0} {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : shape_(std::move(shape)), data_(std::move(data)), requires_grad_(requires_grad) {
    if (data_.size() != shape_size(shape_)) {
        throw std::invalid_argument("Tensor: data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_str(shape_));
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw std::invalid_argument("Tensor: non-finite value at flat index " + std::to_string(i));
        }
    }
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor({}, {v}, requires_grad); }

Tensor Tensor::zeros(Shape shape) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::ones(Shape shape) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 1.0));
}

Tensor Tensor::full(Shape shape, double v) {
    std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v));
}

double Tensor::value() const {
    if (!is_scalar()) throw std::invalid_argument("Tensor::value: tensor is not scalar");
    return data_[0];
}

// ---- Var --------------------------------------------------------------------

const Tensor& Var::value() const {
    if (!valid()) throw std::invalid_argument("Var: invalid handle");
    return tape->value(id);
}

const Shape& Var::shape() const { return value().shape(); }

const Tensor& GradientMap::at(const Var& v) const {
    auto it = grads_.find(v.id);
    if (it == grads_.end()) {
        throw std::invalid_argument("GradientMap: node " + std::to_string(v.id) +
                                    " is not a grad-requiring leaf");
    }
    return it->second;
}

// ---- Tape -------------------------------------------------------------------

Var Tape::leaf(Tensor t) {
    Node n;
    n.needs_grad = t.requires_grad();
    n.is_leaf = true;
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Tensor t) {
    t.set_requires_grad(false);
    Node n;
    n.is_leaf = true;
    n.value = std::move(t);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(Tensor value, std::vector<int> parents, BackwardFn backward) {
    const int self = static_cast<int>(nodes_.size());
    Node n;
    n.value = std::move(value);
    n.needs_grad = false;
    for (int p : parents) {
        if (p < 0 || p >= self) {
            throw std::logic_error("Tape: parent id out of order (internal error)");
        }
        n.needs_grad = n.needs_grad || nodes_[static_cast<std::size_t>(p)].needs_grad;
    }
    n.parents = std::move(parents);
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{this, self};
}

GradientMap Tape::backward(const Var& output) {
    if (output.tape != this || output.id < 0 || output.id >= static_cast<int>(nodes_.size())) {
        throw std::invalid_argument("Tape::backward: output is not a node of this tape");
    }
    if (!value(output.id).is_scalar()) {
        throw std::invalid_argument("Tape::backward: output must be scalar, got shape " +
                                    shape_str(value(output.id).shape()));
    }

    std::vector<Tensor> buf(nodes_.size());
    std::vector<char> has(nodes_.size(), 0);
    buf[static_cast<std::size_t>(output.id)] = Tensor::ones(value(output.id).shape());
    has[static_cast<std::size_t>(output.id)] = 1;

    for (int i = output.id; i >= 0; --i) {
        const Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!has[static_cast<std::size_t>(i)] || !n.needs_grad) continue;
        if (n.backward) n.backward(*this, i, buf[static_cast<std::size_t>(i)], buf, has);
    }

    GradientMap out;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        if (!n.is_leaf || !n.needs_grad) continue;
        if (has[i]) {
            out.set(static_cast<int>(i), std::move(buf[i]));
        } else {
            out.set(static_cast<int>(i), Tensor::zeros(n.value.shape()));
        }
    }
    return out;
}

namespace detail {

void accum(std::vector<Tensor>& buf, std::vector<char>& has, int id, const Shape& shape,
           const std::vector<double>& g) {
    auto& slot = buf[static_cast<std::size_t>(id)];
    if (!has[static_cast<std::size_t>(id)]) {
        slot = Tensor(shape, g);
        has[static_cast<std::size_t>(id)] = 1;
        return;
    }
    auto& d = slot.mutable_data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
}

}  // namespace detail

// ---- op helpers ----------------------------------------------------------------

namespace {

void check_same_tape(const Var& a, const Var& b, const char* op) {
    if (!a.valid() || !b.valid() || a.tape != b.tape) {
        throw std::invalid_argument(std::string(op) + ": operands must live on the same tape");
    }
}

// Elementwise binary with scalar broadcast on either side.
enum class BinKind { Add, Sub, Mul, Div };

Var binary_op(Var a, Var b, BinKind kind, const char* name) {
    check_same_tape(a, b, name);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool a_scalar = av.is_scalar();
    const bool b_scalar = bv.is_scalar();
    if (!a_scalar && !b_scalar && av.shape() != bv.shape()) {
        throw std::invalid_argument(std::string(name) + ": shape mismatch " + shape_str(av.shape()) +
                                    " vs " + shape_str(bv.shape()));
    }
    const Shape out_shape = a_scalar ? bv.shape() : av.shape();
    const std::size_t n = std::max(av.size(), bv.size());
    std::vector<double> out(n);
    auto ai = [&](std::size_t i) { return a_scalar ? av[0] : av[i]; };
    auto bi = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
    switch (kind) {
        case BinKind::Add: for (std::size_t i = 0; i < n; ++i) out[i] = ai(i) + bi(i); break;
        case BinKind::Sub: for (std::size_t i = 0; i < n; ++i) out[i] = ai(i) - bi(i); break;
        case BinKind::Mul: for (std::size_t i = 0; i < n; ++i) out[i] = ai(i) * bi(i); break;
        case BinKind::Div: for (std::size_t i = 0; i < n; ++i) out[i] = ai(i) / bi(i); break;
    }

    const int pa = a.id, pb = b.id;
    return a.tape->record(
        Tensor(out_shape, std::move(out)), {pa, pb},
        [pa, pb, kind, a_scalar, b_scalar](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf,
                                           std::vector<char>& has) {
            const Tensor& av = t.value(pa);
            const Tensor& bv = t.value(pb);
            const std::size_t n = g.size();
            auto ai = [&](std::size_t i) { return a_scalar ? av[0] : av[i]; };
            auto bi = [&](std::size_t i) { return b_scalar ? bv[0] : bv[i]; };
            if (t.needs_grad(pa)) {
                std::vector<double> ga(av.size(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    double v = 0.0;
                    switch (kind) {
                        case BinKind::Add: v = g[i]; break;
                        case BinKind::Sub: v = g[i]; break;
                        case BinKind::Mul: v = g[i] * bi(i); break;
                        case BinKind::Div: v = g[i] / bi(i); break;
                    }
                    ga[a_scalar ? 0 : i] += v;
                }
                detail::accum(buf, has, pa, av.shape(), ga);
            }
            if (t.needs_grad(pb)) {
                std::vector<double> gb(bv.size(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    double v = 0.0;
                    switch (kind) {
                        case BinKind::Add: v = g[i]; break;
                        case BinKind::Sub: v = -g[i]; break;
                        case BinKind::Mul: v = g[i] * ai(i); break;
                        case BinKind::Div: v = -g[i] * ai(i) / (bi(i) * bi(i)); break;
                    }
                    gb[b_scalar ? 0 : i] += v;
                }
                detail::accum(buf, has, pb, bv.shape(), gb);
            }
        });
}

// Elementwise unary: out = f(x), backward g * df(x, f(x)).
Var unary_op(Var a, double (*f)(double), double (*df)(double, double), const char* name) {
    if (!a.valid()) throw std::invalid_argument(std::string(name) + ": invalid operand");
    const Tensor& av = a.value();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    const int pa = a.id;
    return a.tape->record(
        Tensor(av.shape(), std::move(out)), {pa},
        [pa, df](Tape& t, int self, const Tensor& g, std::vector<Tensor>& buf, std::vector<char>& has) {
            const Tensor& av = t.value(pa);
            const Tensor& ov = t.value(self);
            std::vector<double> ga(av.size());
            for (std::size_t i = 0; i < av.size(); ++i) ga[i] = g[i] * df(av[i], ov[i]);
            detail::accum(buf, has, pa, av.shape(), ga);
        });
}

}  // namespace

// ---- primitive ops --------------------------------------------------------------

Var add(Var a, Var b) { return binary_op(a, b, BinKind::Add, "add"); }
Var sub(Var a, Var b) { return binary_op(a, b, BinKind::Sub, "sub"); }
Var mul(Var a, Var b) { return binary_op(a, b, BinKind::Mul, "mul"); }
Var div(Var a, Var b) { return binary_op(a, b, BinKind::Div, "div"); }

Var neg(Var a) {
    return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; }, "neg");
}

Var add(Var a, double b) { return add(a, a.tape->scalar(b)); }
Var add(double a, Var b) { return add(b.tape->scalar(a), b); }
Var sub(Var a, double b) { return sub(a, a.tape->scalar(b)); }
Var sub(double a, Var b) { return sub(b.tape->scalar(a), b); }
Var mul(Var a, double b) { return mul(a, a.tape->scalar(b)); }
Var mul(double a, Var b) { return mul(b.tape->scalar(a), b); }
Var div(Var a, double b) { return div(a, a.tape->scalar(b)); }
Var div(double a, Var b) { return div(b.tape->scalar(a), b); }

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || (bv.rank() != 2 && bv.rank() != 1)) {
        throw std::invalid_argument("matmul: expected (n,k)x(k,m) or (n,k)x(k), got " +
                                    shape_str(av.shape()) + " x " + shape_str(bv.shape()));
    }
    const std::size_t n = av.shape()[0], k = av.shape()[1];
    const bool vec = bv.rank() == 1;
    const std::size_t m = vec ? 1 : bv.shape()[1];
    if ((vec ? bv.shape()[0] : bv.shape()[0]) != k) {
        throw std::invalid_argument("matmul: inner dimension mismatch " + shape_str(av.shape()) +
                                    " x " + shape_str(bv.shape()));
    }
    std::vector<double> out(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double aik = av[i * k + kk];
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < m; ++j) out[i * m + j] += aik * bv[kk * m + j];
        }
    }
    Shape out_shape = vec ? Shape{n} : Shape{n, m};
    const int pa = a.id, pb = b.id;
    return a.tape->record(
        Tensor(std::move(out_shape), std::move(out)), {pa, pb},
        [pa, pb, n, k, m](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf, std::vector<char>& has) {
            const Tensor& av = t.value(pa);
            const Tensor& bv = t.value(pb);
            if (t.needs_grad(pa)) {  // gA = g * B^T
                std::vector<double> ga(n * k, 0.0);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t kk = 0; kk < k; ++kk) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * bv[kk * m + j];
                        ga[i * k + kk] = s;
                    }
                detail::accum(buf, has, pa, av.shape(), ga);
            }
            if (t.needs_grad(pb)) {  // gB = A^T * g
                std::vector<double> gb(k * m, 0.0);
                for (std::size_t kk = 0; kk < k; ++kk)
                    for (std::size_t i = 0; i < n; ++i) {
                        const double aik = av[i * k + kk];
                        if (aik == 0.0) continue;
                        for (std::size_t j = 0; j < m; ++j) gb[kk * m + j] += aik * g[i * m + j];
                    }
                detail::accum(buf, has, pb, bv.shape(), gb);
            }
        });
}

Var transpose(Var a) {
    const Tensor& av = a.value();
    if (av.rank() != 2) throw std::invalid_argument("transpose: rank-2 tensor required");
    const std::size_t n = av.shape()[0], m = av.shape()[1];
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out[j * n + i] = av[i * m + j];
    const int pa = a.id;
    return a.tape->record(
        Tensor({m, n}, std::move(out)), {pa},
        [pa, n, m](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf, std::vector<char>& has) {
            std::vector<double> ga(n * m);
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t i = 0; i < n; ++i) ga[i * m + j] = g[j * n + i];
            detail::accum(buf, has, pa, t.value(pa).shape(), ga);
        });
}

Var reshape(Var a, Shape s) {
    const Tensor& av = a.value();
    if (shape_size(s) != av.size()) {
        throw std::invalid_argument("reshape: size mismatch " + shape_str(av.shape()) + " -> " +
                                    shape_str(s));
    }
    const int pa = a.id;
    return a.tape->record(
        Tensor(std::move(s), av.data()), {pa},
        [pa](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf, std::vector<char>& has) {
            detail::accum(buf, has, pa, t.value(pa).shape(), g.data());
        });
}

Var concat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat: no parts");
    Tape* tape = parts[0].tape;
    std::vector<double> out;
    std::vector<int> ids;
    std::vector<std::size_t> sizes;
    for (const Var& p : parts) {
        if (p.tape != tape) throw std::invalid_argument("concat: operands on different tapes");
        const Tensor& pv = p.value();
        if (pv.rank() > 1) throw std::invalid_argument("concat: parts must be scalars or vectors");
        out.insert(out.end(), pv.data().begin(), pv.data().end());
        ids.push_back(p.id);
        sizes.push_back(pv.size());
    }
    return tape->record(
        Tensor({out.size()}, out), ids,
        [ids, sizes](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf, std::vector<char>& has) {
            std::size_t off = 0;
            for (std::size_t p = 0; p < ids.size(); ++p) {
                if (t.needs_grad(ids[p])) {
                    std::vector<double> gp(g.data().begin() + static_cast<std::ptrdiff_t>(off),
                                           g.data().begin() + static_cast<std::ptrdiff_t>(off + sizes[p]));
                    detail::accum(buf, has, ids[p], t.value(ids[p]).shape(), gp);
                }
                off += sizes[p];
            }
        });
}

Var gather(Var a, std::vector<std::size_t> indices) {
    const Tensor& av = a.value();
    const std::size_t count = indices.size();
    std::vector<double> out(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (indices[i] >= av.size()) {
            throw std::invalid_argument("gather: index " + std::to_string(indices[i]) +
                                        " out of range for size " + std::to_string(av.size()));
        }
        out[i] = av[indices[i]];
    }
    const int pa = a.id;
    return a.tape->record(
        Tensor({count}, std::move(out)), {pa},
        [pa, idx = std::move(indices)](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf,
                                       std::vector<char>& has) {
            const Tensor& av = t.value(pa);
            std::vector<double> ga(av.size(), 0.0);
            for (std::size_t i = 0; i < idx.size(); ++i) ga[idx[i]] += g[i];
            detail::accum(buf, has, pa, av.shape(), ga);
        });
}

Var sum(Var a) {
    const Tensor& av = a.value();
    double s = 0.0;
    for (double v : av.data()) s += v;
    const int pa = a.id;
    return a.tape->record(
        Tensor::scalar(s), {pa},
        [pa](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf, std::vector<char>& has) {
            const Tensor& av = t.value(pa);
            detail::accum(buf, has, pa, av.shape(), std::vector<double>(av.size(), g[0]));
        });
}

Var mean(Var a) {
    const Tensor& av = a.value();
    if (av.size() == 0) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double v : av.data()) s += v;
    const double n = static_cast<double>(av.size());
    const int pa = a.id;
    return a.tape->record(
        Tensor::scalar(s / n), {pa},
        [pa, n](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf, std::vector<char>& has) {
            const Tensor& av = t.value(pa);
            detail::accum(buf, has, pa, av.shape(), std::vector<double>(av.size(), g[0] / n));
        });
}

Var min_all(Var a) {
    const Tensor& av = a.value();
    if (av.size() == 0) throw std::invalid_argument("min_all: empty tensor");
    std::size_t arg = 0;
    for (std::size_t i = 1; i < av.size(); ++i) {
        if (av[i] < av[arg]) arg = i;
    }
    const int pa = a.id;
    return a.tape->record(
        Tensor::scalar(av[arg]), {pa},
        [pa, arg](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf, std::vector<char>& has) {
            const Tensor& av = t.value(pa);
            std::vector<double> ga(av.size(), 0.0);
            ga[arg] = g[0];
            detail::accum(buf, has, pa, av.shape(), ga);
        });
}

Var min_rows(Var a) {
    const Tensor& av = a.value();
    if (av.rank() != 2) throw std::invalid_argument("min_rows: rank-2 tensor required");
    const std::size_t n = av.shape()[0], m = av.shape()[1];
    if (m == 0) throw std::invalid_argument("min_rows: empty rows");
    std::vector<double> out(n);
    std::vector<std::size_t> args(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        for (std::size_t j = 1; j < m; ++j) {
            if (av[i * m + j] < av[i * m + arg]) arg = j;
        }
        args[i] = arg;
        out[i] = av[i * m + arg];
    }
    const int pa = a.id;
    return a.tape->record(
        Tensor({n}, std::move(out)), {pa},
        [pa, m, args = std::move(args)](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf,
                                        std::vector<char>& has) {
            const Tensor& av = t.value(pa);
            std::vector<double> ga(av.size(), 0.0);
            for (std::size_t i = 0; i < args.size(); ++i) ga[i * m + args[i]] = g[i];
            detail::accum(buf, has, pa, av.shape(), ga);
        });
}

Var relu(Var a) {
    return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                    [](double x, double) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

Var tanh(Var a) {
    return unary_op(a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Var sqrt(Var a) {
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double x, double y) { return x == 0.0 ? 0.0 : 0.5 / y; }, "sqrt");
}

Var square(Var a) {
    return unary_op(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; },
                    "square");
}

Var abs(Var a) {
    return unary_op(a, [](double x) { return std::fabs(x); },
                    [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, "abs");
}

Var sin(Var a) {
    return unary_op(a, [](double x) { return std::sin(x); },
                    [](double x, double) { return std::cos(x); }, "sin");
}

Var cos(Var a) {
    return unary_op(a, [](double x) { return std::cos(x); },
                    [](double x, double) { return -std::sin(x); }, "cos");
}

Var l2_norm(Var a) {
    const Tensor& av = a.value();
    double s = 0.0;
    for (double v : av.data()) s += v * v;
    const double norm = std::sqrt(s);
    const int pa = a.id;
    return a.tape->record(
        Tensor::scalar(norm), {pa},
        [pa, norm](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf, std::vector<char>& has) {
            const Tensor& av = t.value(pa);
            std::vector<double> ga(av.size(), 0.0);
            if (norm > 0.0) {
                for (std::size_t i = 0; i < av.size(); ++i) ga[i] = g[0] * av[i] / norm;
            }
            detail::accum(buf, has, pa, av.shape(), ga);
        });
}

Var pairwise_sqdist(Var p, Var q) {
    check_same_tape(p, q, "pairwise_sqdist");
    const Tensor& pv = p.value();
    const Tensor& qv = q.value();
    if (pv.rank() != 2 || qv.rank() != 2 || pv.shape()[1] != qv.shape()[1]) {
        throw std::invalid_argument("pairwise_sqdist: expected (n,k) and (m,k), got " +
                                    shape_str(pv.shape()) + " and " + shape_str(qv.shape()));
    }
    const std::size_t n = pv.shape()[0], m = qv.shape()[0], k = pv.shape()[1];
    if (n == 0 || m == 0) throw std::invalid_argument("pairwise_sqdist: empty point set");
    std::vector<double> out(n * m);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const double d = pv[i * k + c] - qv[j * k + c];
                s += d * d;
            }
            out[i * m + j] = s;
        }
    }
    const int pp = p.id, pq = q.id;
    return p.tape->record(
        Tensor({n, m}, std::move(out)), {pp, pq},
        [pp, pq, n, m, k](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf,
                          std::vector<char>& has) {
            const Tensor& pv = t.value(pp);
            const Tensor& qv = t.value(pq);
            const bool np = t.needs_grad(pp), nq = t.needs_grad(pq);
            std::vector<double> gp(np ? n * k : 0, 0.0);
            std::vector<double> gq(nq ? m * k : 0, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < m; ++j) {
                    const double gij = g[i * m + j];
                    if (gij == 0.0) continue;
                    for (std::size_t c = 0; c < k; ++c) {
                        const double d = 2.0 * gij * (pv[i * k + c] - qv[j * k + c]);
                        if (np) gp[i * k + c] += d;
                        if (nq) gq[j * k + c] -= d;
                    }
                }
            }
            if (np) detail::accum(buf, has, pp, pv.shape(), gp);
            if (nq) detail::accum(buf, has, pq, qv.shape(), gq);
        });
}

Var sorted_mean_rows(Var pts) {
    const Tensor& pv = pts.value();
    if (pv.rank() != 2) throw std::invalid_argument("sorted_mean_rows: rank-2 tensor required");
    const std::size_t n = pv.shape()[0], k = pv.shape()[1];
    if (n == 0) throw std::invalid_argument("sorted_mean_rows: empty input");
    std::vector<double> out(k, 0.0);
    std::vector<double> col(n);
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i) col[i] = pv[i * k + c];
        std::sort(col.begin(), col.end());
        double s = 0.0;
        for (double v : col) s += v;
        out[c] = s / static_cast<double>(n);
    }
    const int pa = pts.id;
    return pts.tape->record(
        Tensor({k}, std::move(out)), {pa},
        [pa, n, k](Tape& t, int, const Tensor& g, std::vector<Tensor>& buf, std::vector<char>& has) {
            std::vector<double> ga(n * k);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t c = 0; c < k; ++c) ga[i * k + c] = g[c] / static_cast<double>(n);
            detail::accum(buf, has, pa, t.value(pa).shape(), ga);
        });
}

// ---- composites ---------------------------------------------------------------

Var sum_sq(Var a) { return sum(square(a)); }
Var l1_norm(Var a) { return sum(abs(a)); }
Var max_with(Var a, double floor_v) { return add(relu(sub(a, floor_v)), floor_v); }

Var add_rowvec(Var mat, Var row) {
    const Tensor& mv = mat.value();
    const Tensor& rv = row.value();
    if (mv.rank() != 2 || rv.rank() != 1 || mv.shape()[1] != rv.shape()[0]) {
        throw std::invalid_argument("add_rowvec: expected (n,k) and (k)");
    }
    Var ones_col = mat.tape->constant(Tensor::ones({mv.shape()[0], 1}));
    return add(mat, matmul(ones_col, reshape(row, {1, rv.shape()[0]})));
}

// ---- finite differences ----------------------------------------------------------

double finite_diff_check(const ScalarFn& f, const Tensor& x, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");

    Tape tape;
    Tensor x_leaf = x;
    x_leaf.set_requires_grad(true);
    Var leaf = tape.leaf(x_leaf);
    Var out = f(tape, leaf);
    if (!out.value().is_scalar()) {
        throw std::invalid_argument("finite_diff_check: f must return a scalar");
    }
    GradientMap grads = tape.backward(out);
    const Tensor& analytic = grads.at(leaf);

    auto eval = [&](const Tensor& at, std::size_t coord) {
        Tape t;
        Tensor v = at;
        v.set_requires_grad(false);
        const double y = f(t, t.leaf(v)).value().value();
        if (!std::isfinite(y)) {
            throw std::runtime_error("finite_diff_check: non-finite value perturbing coordinate " +
                                     std::to_string(coord));
        }
        return y;
    };

    double max_err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor lo = x, hi = x;
        hi.mutable_data()[i] += step;
        lo.mutable_data()[i] -= step;
        const double fd = (eval(hi, i) - eval(lo, i)) / (2.0 * step);
        const double a = analytic[i];
        const double err = std::fabs(a - fd) / std::max(1.0, std::fabs(a));
        max_err = std::max(max_err, err);
    }
    return max_err;
}

}  // namespace regrasp::ad
