#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "regrasp/autodiff.hpp"
#include "regrasp/geometry.hpp"
#include "regrasp/hand_model.hpp"
#include "regrasp/losses.hpp"
#include "regrasp/mlp.hpp"

namespace regrasp::grasp {

enum class Arch { CondNorm, MlpOnly };

std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

/// Network widths. The defaults put the conditioned-norm configuration at
/// ~0.52M parameters and the MLP-only baseline at ~0.92M.
struct GraspNetConfig {
    Arch arch = Arch::CondNorm;
    std::size_t trunk_width = 512;  // hidden feature width
    std::size_t mod_width = 408;    // hidden width of the gamma/alpha subnets and baseline stacks
    std::size_t desc_dim = 64;      // object descriptor width
};

/// Pose-manipulation network parameters as an ordered name -> tensor map.
/// Both architectures carry the shared per-vertex descriptor projection.
struct GraspNetParams {
    GraspNetConfig config;
    std::vector<std::pair<std::string, ad::Tensor>> tensors;

    const ad::Tensor& get(const std::string& name) const;
    ad::Tensor& get_mutable(const std::string& name);
    std::size_t param_count() const;  // exact element count over all tensors

    /// Deterministic initialization; the output layer starts at zero so an
    /// untrained network maps everything to the rest pose.
    static GraspNetParams init(const GraspNetConfig& config, std::uint64_t seed);
};

/// Grad-enabled or constant handles for every parameter on one tape.
struct GraspNetVars {
    std::vector<std::pair<std::string, ad::Var>> vars;
    const ad::Var& get(const std::string& name) const;
};

GraspNetVars bind(ad::Tape& tape, const GraspNetParams& params, bool trainable);

/// Permutation- and translation-invariant object feature: center vertices
/// at the (sorted-sum) centroid, apply the shared per-vertex linear map,
/// then coordinate-wise max over vertices.
ad::Var object_descriptor(ad::Tape& tape, ad::Var object_vertices, ad::Var proj_w, ad::Var proj_b);
ad::Tensor object_descriptor(const GraspNetParams& params, const geom::Mesh& object);

/// Conditioned normalization: gamma(desc)_i * (x_i - mu(x)) / sigma(x) +
/// alpha(desc)_i with per-instance statistics over the elements of x and
/// sigma floored at eps. Works for any width; the pose path uses 45.
ad::Var cond_norm(ad::Tape& tape, ad::Var x, ad::Var gamma, ad::Var alpha, double eps = 1e-6);

/// theta' = f(theta_tar, descriptor(object)); 45 -> 45.
ad::Var grasp_forward(ad::Tape& tape, const GraspNetVars& net, const GraspNetConfig& config,
                      ad::Var theta_tar, ad::Var object_vertices);
std::vector<double> grasp_forward(const GraspNetParams& params, const std::vector<double>& theta_tar,
                                  const geom::Mesh& object);

// ---- direct optimization ----------------------------------------------------

struct DirectOptConfig {
    int iterations = 200;
    double lr = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double contact_weight = 1.0;
    double centroid_weight = 1.0;
    double divergence_threshold = 1e6;
};

struct DirectOptResult {
    std::vector<double> theta;  // best-so-far argmin
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double initial_contact = 0.0;
    double final_contact = 0.0;
    std::vector<double> loss_history;
    bool aborted = false;
};

/// Adam descent of contact + centroid loss through the skinned hand,
/// returning the best iterate seen. Deterministic (no randomness involved).
DirectOptResult direct_grasp_opt(const std::vector<double>& theta_init, const hand::HandModel& model,
                                 const std::vector<double>& beta, const geom::Mesh& object,
                                 const losses::ContactSpec& spec, const DirectOptConfig& config);

// ---- adversarial training -----------------------------------------------------

struct GraspScene {
    std::vector<double> theta_tar;  // pose fed to the network
    std::vector<double> beta;
    std::vector<double> theta_gt;   // grasp sample for the critic
    geom::Mesh object;              // already placed in hand-model space
};

struct TrainConfig {
    std::uint64_t seed = 0;
    int epochs = 15;
    double lr = 1e-5;       // generator and critic learning rate
    double beta1 = 0.5;
    double beta2 = 0.999;
    double lambda_gp = 10.0;
    int n_critic = 1;       // critic updates per generator update
    int batch_size = 8;
    double contact_weight = 1.0;
    double centroid_weight = 1.0;
    double adv_weight = 1.0;
};

struct EpochStats {
    double contact = 0.0;
    double centroid = 0.0;
    double adv = 0.0;      // generator critic term, -E[D(theta')]
    double critic = 0.0;   // critic objective without the penalty
    double penalty = 0.0;  // gradient penalty value
};

struct TrainResult {
    GraspNetParams params;
    nn::Mlp critic;
    std::vector<EpochStats> curve;
};

nn::Mlp make_critic(std::uint64_t seed);

/// Alternating WGAN-style optimization: the critic separates grasp samples
/// from network outputs under a gradient penalty; the generator descends
/// contact + centroid + adversarial terms. Aborts with a diagnostic naming
/// the term if any loss goes non-finite.
TrainResult train_grasp(const hand::HandModel& model, const std::vector<GraspScene>& dataset,
                        GraspNetParams init, nn::Mlp critic_init, const TrainConfig& config);

// ---- weight file I/O -----------------------------------------------------------

void save_weights(const GraspNetParams& params, const nn::Mlp& critic, const std::string& path);
void load_weights(const std::string& path, GraspNetParams& params, nn::Mlp& critic);

}  // namespace regrasp::grasp
