#pragma once

#include <string>
#include <vector>

#include "regrasp/autodiff.hpp"
#include "regrasp/geometry.hpp"

namespace regrasp::hand {

inline constexpr int kThetaDim = 45;  // 15 articulated joints x 3 axis-angle
inline constexpr int kBetaDim = 10;
inline constexpr int kArticulatedJoints = 15;

/// Skinned parametric hand: template + linear blend skinning over a joint
/// tree, a linear shape basis, and a convex joint regressor. The global
/// wrist placement is carried by the similarity transforms in HandParams,
/// not by theta; joint 0 is the un-articulated root.
struct HandModel {
    ad::Tensor template_vertices;     // (V,3)
    std::vector<std::array<int, 3>> faces;
    ad::Tensor skinning_weights;      // (V,J), rows sum to 1
    ad::Tensor joint_rest_positions;  // (J,3)
    std::vector<int> parents;         // length J, parents[0] == -1, parents[j] < j
    std::vector<ad::Tensor> shape_dirs;  // B entries of (V,3)
    ad::Tensor joint_regressor;       // (K,V), rows sum to 1

    int wrist_index = 0;
    std::vector<int> fingertip_indices;
    std::vector<int> palm_center_indices;
    std::vector<int> contact_vertex_indices;

    std::size_t vertex_count() const { return template_vertices.rows(); }
    std::size_t joint_count() const { return parents.size(); }
    std::size_t skeleton_joint_count() const { return joint_regressor.rows(); }
    std::size_t shape_count() const { return shape_dirs.size(); }

    void validate() const;
};

struct HandParams {
    std::vector<double> theta = std::vector<double>(kThetaDim, 0.0);
    std::vector<double> beta = std::vector<double>(kBetaDim, 0.0);
    geom::SimilarityTransform c1;
    geom::SimilarityTransform c2;
};

/// Posed vertices, differentiable w.r.t. theta and beta. theta is (45),
/// beta is (10); output is (V,3). Faces are unchanged by posing.
/// root_rotation, when given, is a fixed 3x3 rotation applied at joint 0
/// (the global wrist rotation otherwise carried by the c1 transform).
ad::Var lbs_forward(ad::Tape& tape, const HandModel& model, ad::Var theta, ad::Var beta,
                    const ad::Tensor* root_rotation = nullptr);
geom::Mesh lbs_forward(const HandModel& model, const std::vector<double>& theta,
                       const std::vector<double>& beta,
                       const ad::Tensor* root_rotation = nullptr);

/// Skeleton = joint_regressor x vertices; differentiable. (V,3) -> (K,3).
ad::Var regress_joints(ad::Tape& tape, const HandModel& model, ad::Var vertices);
std::vector<geom::Vec3> regress_joints(const HandModel& model, const geom::Mesh& mesh);

geom::Vec3 wrist_point(const HandModel& model, const geom::Mesh& mesh);

/// Deterministic procedurally generated hand: a subdivided palm box plus
/// five 3-joint finger chains with an apex fingertip vertex per finger.
/// The +z palm face is the grasping side; positive x-axis curl on a finger
/// chain folds it toward +z.
HandModel make_toy_hand(std::uint64_t seed);

// JSON serialization (single document, named row-major arrays).
void save_hand_model(const HandModel& model, const std::string& path);
HandModel load_hand_model(const std::string& path);

}  // namespace regrasp::hand
