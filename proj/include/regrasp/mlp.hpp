#pragma once

#include <cstdint>
#include <vector>

#include "regrasp/autodiff.hpp"
#include "regrasp/rng.hpp"

namespace regrasp::nn {

/// Plain fully-connected network with tanh between layers and a linear
/// last layer. A single layer (weights only, no hidden activations) makes
/// the family contain exact linear maps, which the critic tests rely on.
struct Mlp {
    std::vector<ad::Tensor> weights;  // layer l: (out_l, in_l)
    std::vector<ad::Tensor> biases;   // layer l: (out_l)

    std::size_t layer_count() const { return weights.size(); }
    std::size_t param_count() const;
    void validate() const;

    static Mlp make(const std::vector<std::size_t>& dims, Rng& rng, double scale = 1.0);
};

/// Leaf/constant handles for every weight tensor of an Mlp on one tape.
struct MlpVars {
    std::vector<ad::Var> weights;
    std::vector<ad::Var> biases;
};

MlpVars bind(ad::Tape& tape, const Mlp& mlp, bool trainable);

/// y = W_L tanh(... tanh(W_1 x + b_1) ...) + b_L
ad::Var forward(ad::Tape& tape, const MlpVars& m, ad::Var x);

/// Closed-form input gradient of a scalar-output Mlp, expressed with tape
/// operations so it stays differentiable w.r.t. the weights:
///   grad = W_1^T (s'(z_1) . (W_2^T (... W_L^T)))
ad::Var input_gradient(ad::Tape& tape, const MlpVars& m, ad::Var x);

}  // namespace regrasp::nn
