#pragma once

#include <vector>

#include "regrasp/autodiff.hpp"
#include "regrasp/geometry.hpp"
#include "regrasp/mlp.hpp"

namespace regrasp::losses {

/// Hand vertices that count as grasp contact points.
struct ContactSpec {
    std::vector<int> vertex_indices;

    void validate(std::size_t hand_vertex_count) const;
};

// Tape forms; value overloads below wrap them with throwaway tapes.

/// sum_p min_q ||p-q||^2 + sum_q min_p ||p-q||^2 over (n,3)/(m,3) point sets.
ad::Var chamfer_loss(ad::Tape& tape, ad::Var p, ad::Var q);
double chamfer_loss(const ad::Tensor& p, const ad::Tensor& q);

/// sum over directed one-ring neighbor pairs of ||p-k||^2 (each undirected
/// edge counted twice).
ad::Var edge_loss(ad::Tape& tape, ad::Var vertices, const std::vector<std::array<int, 3>>& faces);
double edge_loss(const geom::Mesh& mesh);

/// Uniform-weight Laplacian coordinates delta_p = p - mean(one-ring);
/// loss = sum_p ||delta'_p - delta_p||^2, differentiable in the deformed mesh.
/// Vertices with an empty one-ring contribute zero.
ad::Var laplacian_loss(ad::Tape& tape, ad::Var vertices_after, const geom::Mesh& before);
double laplacian_loss(const geom::Mesh& before, const geom::Mesh& after);

/// Mean Euclidean distance from each contact vertex to its nearest object
/// vertex (lowest-index ties).
ad::Var contact_loss(ad::Tape& tape, ad::Var hand_vertices, const ContactSpec& spec,
                     ad::Var object_vertices);
double contact_loss(const geom::Mesh& hand, const ContactSpec& spec, const geom::Mesh& object);

/// 0.5 ||C(object) - C(hand)||^2.
ad::Var centroid_loss(ad::Tape& tape, ad::Var object_vertices, ad::Var hand_vertices);
double centroid_loss(const geom::Mesh& object, const geom::Mesh& hand);

/// L1 mesh term + squared 3D skeleton term + squared 2D skeleton term, the
/// 2D term comparing (x,y) after the image-space transform.
ad::Var hand_loss(ad::Tape& tape, ad::Var pred_vertices, const ad::Tensor& gt_vertices,
                  ad::Var pred_skeleton, const ad::Tensor& gt_skeleton,
                  const geom::SimilarityTransform& c1, const geom::SimilarityTransform& c2,
                  const ad::Tensor& gt_2d);
double hand_loss(const geom::Mesh& pred, const geom::Mesh& gt,
                 const std::vector<geom::Vec3>& pred_skeleton,
                 const std::vector<geom::Vec3>& gt_skeleton, const geom::SimilarityTransform& c1,
                 const geom::SimilarityTransform& c2,
                 const std::vector<std::array<double, 2>>& gt_2d);

/// lambda * mean_i (||grad_theta D(theta_i)||_2 - 1)^2 for the tanh-MLP
/// critic family; the input gradient is the closed-form layer chain, so the
/// penalty stays differentiable in the critic weights.
ad::Var gradient_penalty(ad::Tape& tape, const nn::MlpVars& critic,
                         const std::vector<ad::Tensor>& theta_samples, double lambda);
double gradient_penalty(const nn::Mlp& critic, const std::vector<ad::Tensor>& theta_samples,
                        double lambda);

}  // namespace regrasp::losses
