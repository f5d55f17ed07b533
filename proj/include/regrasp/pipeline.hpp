#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regrasp/compositor.hpp"
#include "regrasp/geometry.hpp"
#include "regrasp/grasp_net.hpp"
#include "regrasp/hand_model.hpp"
#include "regrasp/image.hpp"
#include "regrasp/renderer.hpp"

#include <json.hpp>

namespace regrasp::pipeline {

/// File-reference form of a scene; relative paths resolve against the
/// directory containing the scene document.
struct Scene {
    std::string path;  // scene json location (set on load/save)
    std::string hand_model;
    hand::HandParams params;
    std::string object_mesh;
    std::string object_texture;
    std::string hand_texture;
    std::string background;
    int image_height = 256;
    int image_width = 256;
};

/// Scene with every referenced artifact loaded and validated.
struct LoadedScene {
    Scene ref;
    hand::HandModel model;
    geom::Mesh object;
    img::FaceTexture object_tex;
    img::FaceTexture hand_tex;
    img::RasterImage background;
};

Scene load_scene(const std::string& path);
void save_scene(const Scene& scene, const std::string& path);
LoadedScene load_scene_data(const Scene& scene);
LoadedScene load_scene_data(const std::string& path);

/// Mean position of the model's palm-center vertices in a posed mesh; the
/// anchor used to place a transferred object before grasp refinement.
geom::Vec3 palm_point(const hand::HandModel& model, const geom::Mesh& posed);

enum class GraspMode { Direct, Network };

struct ReenactConfig {
    GraspMode mode = GraspMode::Direct;
    std::string weights;  // required in network mode
    grasp::DirectOptConfig direct;
    comp::InpaintConfig inpaint;
    bool place_at_palm = true;  // false keeps the source object placement
    int threads = 1;
    std::uint64_t seed = 0;
};

struct ReenactResult {
    std::vector<double> theta_prime;
    double initial_contact = 0.0;
    double final_contact = 0.0;
    std::string out_dir;

    geom::Mesh hand_final;
    geom::Mesh object_final;
    img::RasterImage foreground;            // x'
    img::Mask mask_target;                  // s_tar
    img::RasterImage background_inpainted;  // x'_tar
    img::Mask mask_new;                     // s
    img::RasterImage final_image;           // x'''
};

/// Full reenactment: pose the target hand, transfer the source object,
/// solve the grasp, align wrists, render, inpaint the vacated target
/// foreground and hard-merge. Writes all intermediate artifacts plus a
/// result manifest to out_dir. Stage failures rethrow with the stage name.
ReenactResult reenact(const LoadedScene& source, const LoadedScene& target,
                      const ReenactConfig& config, const std::string& out_dir);
ReenactResult reenact(const std::string& source_scene, const std::string& target_scene,
                      const ReenactConfig& config, const std::string& out_dir);

struct GenDataConfig {
    int image_size = 256;
    grasp::DirectOptConfig opt;
    double contact_gate = 0.045;  // accept a scene only below this contact loss
    double ratio_gate = 0.09;     // ... and below this fraction of the initial loss
    int max_attempts = 25;
    int threads = 1;
};

struct GenDataResult {
    std::string manifest_path;
    std::vector<std::string> scene_paths;
    std::vector<grasp::GraspScene> training_scenes;
};

/// Deterministic synthetic dataset: toy hand + randomized primitive objects
/// placed against the palm, with grasp poses produced by direct_grasp_opt
/// and quality-gated. Emits one scene document per sample plus a manifest
/// with CRC32 checksums.
GenDataResult generate_synthetic_dataset(int n_scenes, std::uint64_t seed,
                                         const std::string& out_dir,
                                         const GenDataConfig& config = {});

/// Rebuild training records from a dataset manifest.
std::vector<grasp::GraspScene> load_dataset(const std::string& manifest_path);

/// Post-hoc metrics for a reenact output directory against the reference
/// target scene: contact distances, centroid offset, mask IoU against a
/// recomputed mask, and background preservation outside the mask.
nlohmann::json evaluate(const std::string& result_dir, const std::string& reference_scene);

}  // namespace regrasp::pipeline
