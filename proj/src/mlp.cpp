#include "regrasp/mlp.hpp"

#include <cmath>
#include <stdexcept>

namespace regrasp::nn {

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

void Mlp::validate() const {
    if (weights.empty() || weights.size() != biases.size()) {
        throw std::invalid_argument("Mlp: weights/biases layer counts mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rank() != 2 || biases[l].rank() != 1 ||
            biases[l].size() != weights[l].rows()) {
            throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " has inconsistent shapes");
        }
        if (l > 0 && weights[l].cols() != weights[l - 1].rows()) {
            throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " input width mismatch");
        }
    }
}

Mlp Mlp::make(const std::vector<std::size_t>& dims, Rng& rng, double scale) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp::make: need at least input and output dims");
    Mlp mlp;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t in = dims[l], out = dims[l + 1];
        std::vector<double> w(out * in);
        const double sd = scale / std::sqrt(static_cast<double>(in));
        for (double& v : w) v = sd * rng.normal();
        mlp.weights.emplace_back(ad::Shape{out, in}, std::move(w));
        mlp.biases.emplace_back(ad::Tensor::zeros({out}));
    }
    return mlp;
}

MlpVars bind(ad::Tape& tape, const Mlp& mlp, bool trainable) {
    mlp.validate();
    MlpVars out;
    for (std::size_t l = 0; l < mlp.weights.size(); ++l) {
        if (trainable) {
            ad::Tensor w = mlp.weights[l];
            ad::Tensor b = mlp.biases[l];
            w.set_requires_grad(true);
            b.set_requires_grad(true);
            out.weights.push_back(tape.leaf(std::move(w)));
            out.biases.push_back(tape.leaf(std::move(b)));
        } else {
            out.weights.push_back(tape.constant(mlp.weights[l]));
            out.biases.push_back(tape.constant(mlp.biases[l]));
        }
    }
    return out;
}

ad::Var forward(ad::Tape&, const MlpVars& m, ad::Var x) {
    ad::Var h = x;
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        h = ad::add(ad::matmul(m.weights[l], h), m.biases[l]);
        if (l + 1 < m.weights.size()) h = ad::tanh(h);
    }
    return h;
}

ad::Var input_gradient(ad::Tape& tape, const MlpVars& m, ad::Var x) {
    const std::size_t layers = m.weights.size();
    // Forward pass keeping pre-activations.
    std::vector<ad::Var> pre;
    ad::Var h = x;
    for (std::size_t l = 0; l < layers; ++l) {
        ad::Var z = ad::add(ad::matmul(m.weights[l], h), m.biases[l]);
        pre.push_back(z);
        if (l + 1 < layers) h = ad::tanh(z);
    }
    if (m.weights.back().value().rows() != 1) {
        throw std::invalid_argument("input_gradient: last layer must produce a scalar");
    }
    // Backward chain written as forward ops.
    ad::Var v = tape.constant(ad::Tensor({1}, {1.0}));
    for (std::size_t li = layers; li-- > 0;) {
        v = ad::matmul(ad::transpose(m.weights[li]), v);
        if (li > 0) {
            ad::Var t = ad::tanh(pre[li - 1]);
            v = ad::mul(ad::sub(1.0, ad::mul(t, t)), v);
        }
    }
    return v;
}

}  // namespace regrasp::nn
