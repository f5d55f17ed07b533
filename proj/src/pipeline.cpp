#include "regrasp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "regrasp/losses.hpp"
#include "regrasp/rng.hpp"

namespace regrasp::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;
using geom::Vec3;
using geom::operator+;
using geom::operator-;
using geom::operator*;

// ---- scene I/O -----------------------------------------------------------------

namespace {

json transform_to_json(const geom::SimilarityTransform& t) {
    return json{{"scale", t.scale},
                {"translation", {t.translation[0], t.translation[1]}},
                {"rotation", {t.rotation.w, t.rotation.x, t.rotation.y, t.rotation.z}}};
}

geom::SimilarityTransform transform_from_json(const json& j) {
    const auto& tr = j.at("translation");
    const auto& q = j.at("rotation");
    return geom::SimilarityTransform(
        j.at("scale").get<double>(), {tr.at(0).get<double>(), tr.at(1).get<double>()},
        geom::Quaternion(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                         q.at(3).get<double>()));
}

std::string resolve(const std::string& scene_path, const std::string& ref) {
    const fs::path p(ref);
    if (p.is_absolute()) return ref;
    return (fs::path(scene_path).parent_path() / p).string();
}

std::string write_json_file(const json& doc, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << doc.dump(1, '\t') << '\n';
    if (!out) throw std::runtime_error("write failed for " + path);
    return path;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return json::parse(in);
}

}  // namespace

Scene load_scene(const std::string& path) {
    json doc = read_json_file(path);
    if (doc.value("kind", "") != "scene") throw std::runtime_error(path + " is not a scene document");
    Scene s;
    s.path = path;
    s.hand_model = doc.at("hand_model").get<std::string>();
    const json& hp = doc.at("hand_params");
    s.params.theta = hp.at("theta").get<std::vector<double>>();
    s.params.beta = hp.at("beta").get<std::vector<double>>();
    s.params.c1 = transform_from_json(hp.at("c1"));
    s.params.c2 = transform_from_json(hp.at("c2"));
    s.object_mesh = doc.at("object_mesh").get<std::string>();
    s.object_texture = doc.at("object_texture").get<std::string>();
    s.hand_texture = doc.at("hand_texture").get<std::string>();
    s.background = doc.at("background").get<std::string>();
    s.image_height = doc.at("image").at("height").get<int>();
    s.image_width = doc.at("image").at("width").get<int>();
    return s;
}

void save_scene(const Scene& scene, const std::string& path) {
    json doc;
    doc["version"] = 1;
    doc["kind"] = "scene";
    doc["hand_model"] = scene.hand_model;
    doc["hand_params"] = {{"theta", scene.params.theta},
                          {"beta", scene.params.beta},
                          {"c1", transform_to_json(scene.params.c1)},
                          {"c2", transform_to_json(scene.params.c2)}};
    doc["object_mesh"] = scene.object_mesh;
    doc["object_texture"] = scene.object_texture;
    doc["hand_texture"] = scene.hand_texture;
    doc["background"] = scene.background;
    doc["image"] = {{"height", scene.image_height}, {"width", scene.image_width}};
    write_json_file(doc, path);
}

LoadedScene load_scene_data(const Scene& scene) {
    LoadedScene out;
    out.ref = scene;
    out.model = hand::load_hand_model(resolve(scene.path, scene.hand_model));
    out.object = geom::load_obj(resolve(scene.path, scene.object_mesh));
    out.object_tex = img::load_texture(resolve(scene.path, scene.object_texture));
    out.hand_tex = img::load_texture(resolve(scene.path, scene.hand_texture));
    out.background = img::read_png(resolve(scene.path, scene.background));
    if (out.object_tex.face_count != out.object.face_count()) {
        throw std::runtime_error("scene: object texture face count mismatch");
    }
    if (out.hand_tex.face_count != out.model.faces.size()) {
        throw std::runtime_error("scene: hand texture face count mismatch");
    }
    if (out.background.height != scene.image_height || out.background.width != scene.image_width) {
        throw std::runtime_error("scene: background image size mismatch");
    }
    if (scene.params.theta.size() != static_cast<std::size_t>(hand::kThetaDim) ||
        scene.params.beta.size() != out.model.shape_count()) {
        throw std::runtime_error("scene: hand parameter lengths invalid");
    }
    return out;
}

LoadedScene load_scene_data(const std::string& path) { return load_scene_data(load_scene(path)); }

Vec3 palm_point(const hand::HandModel& model, const geom::Mesh& posed) {
    if (model.palm_center_indices.empty()) {
        throw std::invalid_argument("palm_point: model has no palm center vertices");
    }
    Vec3 acc{0.0, 0.0, 0.0};
    for (int idx : model.palm_center_indices) acc = acc + posed.vertices[static_cast<std::size_t>(idx)];
    return (1.0 / static_cast<double>(model.palm_center_indices.size())) * acc;
}

// ---- reenact --------------------------------------------------------------------

namespace {

template <typename F>
auto stage(const char* name, F&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("reenact stage '") + name + "': " + e.what());
    }
}

geom::Mesh translated(const geom::Mesh& mesh, const Vec3& delta) {
    geom::Mesh out = mesh;
    for (Vec3& p : out.vertices) p = p + delta;
    return out;
}

double bounding_radius_of(const geom::Mesh& mesh) {
    const Vec3 c = geom::centroid(mesh);
    double r = 0.0;
    for (const Vec3& p : mesh.vertices) r = std::max(r, geom::norm(p - c));
    return r;
}

// Anchor an object to the palm: centroid over the palm center, lifted along
// the palm normal (+z in model space; theta never rotates the palm) so the
// object clears the surface and the fingers can wrap around it.
Vec3 palm_anchor_delta(const hand::HandModel& model, const geom::Mesh& posed_hand,
                       const geom::Mesh& object, const Vec3& jitter = {0.0, 0.0, 0.0}) {
    const Vec3 palm = palm_point(model, posed_hand);
    const double r_eff = bounding_radius_of(object);
    const Vec3 offset{jitter[0], 0.02 + jitter[1], 0.45 * r_eff + 0.05 + jitter[2]};
    return palm + offset - geom::centroid(object);
}

}  // namespace

ReenactResult reenact(const LoadedScene& source, const LoadedScene& target,
                      const ReenactConfig& config, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const hand::HandModel& model = target.model;
    const losses::ContactSpec spec{model.contact_vertex_indices};
    const int height = target.ref.image_height;
    const int width = target.ref.image_width;
    const geom::SimilarityTransform& c2 = target.ref.params.c2;

    ReenactResult result;
    result.out_dir = out_dir;

    // (1) Pose the target hand from its own parameters.
    geom::Mesh target_hand = stage("pose-target-hand", [&] {
        return hand::lbs_forward(model, target.ref.params.theta, target.ref.params.beta);
    });

    // (2) Transfer the source object to the target palm.
    geom::Mesh object = stage("place-object", [&] {
        if (!config.place_at_palm) return source.object;
        return translated(source.object, palm_anchor_delta(model, target_hand, source.object));
    });

    // (3) Solve the grasp pose.
    result.initial_contact = losses::contact_loss(target_hand, spec, object);
    result.theta_prime = stage("grasp", [&]() -> std::vector<double> {
        if (config.mode == GraspMode::Direct) {
            return grasp::direct_grasp_opt(target.ref.params.theta, model, target.ref.params.beta,
                                           object, spec, config.direct)
                .theta;
        }
        if (config.weights.empty()) {
            throw std::runtime_error("network mode requires a weights file");
        }
        grasp::GraspNetParams params;
        nn::Mlp critic;
        grasp::load_weights(config.weights, params, critic);
        return grasp::grasp_forward(params, target.ref.params.theta, object);
    });

    // (4) Pose the manipulated hand.
    geom::Mesh new_hand = stage("pose-new-hand", [&] {
        return hand::lbs_forward(model, result.theta_prime, target.ref.params.beta);
    });

    // (5) Wrist alignment against the original target hand.
    std::tie(result.hand_final, result.object_final) = stage("align-wrist", [&] {
        return comp::align_wrist(model, target_hand, new_hand, object);
    });
    result.final_contact = losses::contact_loss(result.hand_final, spec, result.object_final);

    // (6) Foreground render x'. The refinement hook would sit here; the
    // refined image equals the render in this pipeline.
    result.foreground = stage("render-foreground", [&] {
        return render::rasterize({result.hand_final, result.object_final},
                                 {target.hand_tex, source.object_tex}, c2, height, width,
                                 config.threads);
    });

    // (7) Mask of the original target foreground and background inpainting.
    result.mask_target = stage("mask-target", [&] {
        return render::render_mask({target_hand, target.object}, c2, height, width, config.threads);
    });
    result.background_inpainted = stage("inpaint", [&] {
        return comp::inpaint_background(target.background, result.mask_target, config.inpaint);
    });

    // (8) Mask of the new meshes, (9) hard merge.
    result.mask_new = stage("mask-new", [&] {
        return render::render_mask({result.hand_final, result.object_final}, c2, height, width,
                                   config.threads);
    });
    result.final_image = stage("merge", [&] {
        return comp::merge(result.foreground, result.background_inpainted, result.mask_new);
    });

    // (10) Artifacts + manifest.
    stage("write-artifacts", [&] {
        const fs::path dir(out_dir);
        img::write_png((dir / "x_prime.png").string(), result.foreground);
        img::write_png((dir / "mask_target.png").string(), result.mask_target);
        img::write_png((dir / "background_inpainted.png").string(), result.background_inpainted);
        img::write_png((dir / "mask.png").string(), result.mask_new);
        img::write_png((dir / "final.png").string(), result.final_image);
        geom::save_obj(result.hand_final, (dir / "hand_final.obj").string());
        geom::save_obj(result.object_final, (dir / "object_final.obj").string());
        json theta_doc{{"version", 1}, {"theta_prime", result.theta_prime}};
        write_json_file(theta_doc, (dir / "theta_prime.json").string());
        json manifest;
        manifest["version"] = 1;
        manifest["kind"] = "reenact_result";
        manifest["mode"] = config.mode == GraspMode::Direct ? "direct" : "network";
        manifest["seed"] = config.seed;
        manifest["threads"] = config.threads;
        manifest["source_scene"] = source.ref.path;
        manifest["target_scene"] = target.ref.path;
        manifest["image"] = {{"height", height}, {"width", width}};
        manifest["theta_prime"] = result.theta_prime;
        manifest["metrics"] = {{"initial_contact", result.initial_contact},
                               {"final_contact", result.final_contact}};
        manifest["files"] = {{"final", "final.png"},
                             {"foreground", "x_prime.png"},
                             {"mask", "mask.png"},
                             {"mask_target", "mask_target.png"},
                             {"background_inpainted", "background_inpainted.png"},
                             {"hand_mesh", "hand_final.obj"},
                             {"object_mesh", "object_final.obj"},
                             {"theta", "theta_prime.json"}};
        write_json_file(manifest, (dir / "result.json").string());
        return 0;
    });

    return result;
}

ReenactResult reenact(const std::string& source_scene, const std::string& target_scene,
                      const ReenactConfig& config, const std::string& out_dir) {
    LoadedScene source = load_scene_data(source_scene);
    LoadedScene target = source_scene == target_scene ? source : load_scene_data(target_scene);
    return reenact(source, target, config, out_dir);
}

// ---- synthetic dataset -------------------------------------------------------------

namespace {

img::FaceTexture random_texture(std::size_t faces, Rng& rng, double base_r, double base_g,
                                double base_b, double jitter) {
    img::FaceTexture t = img::FaceTexture::solid(faces, base_r, base_g, base_b);
    for (std::size_t i = 0; i < t.values.size(); ++i) {
        t.values[i] = std::clamp(t.values[i] + rng.uniform(-jitter, jitter), 0.0, 1.0);
    }
    return t;
}

}  // namespace

GenDataResult generate_synthetic_dataset(int n_scenes, std::uint64_t seed,
                                         const std::string& out_dir, const GenDataConfig& config) {
    if (n_scenes < 1) throw std::invalid_argument("generate_synthetic_dataset: n_scenes must be >= 1");
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    hand::HandModel model = hand::make_toy_hand(seed);
    const std::string model_file = (dir / "hand_model.json").string();
    hand::save_hand_model(model, model_file);
    const losses::ContactSpec spec{model.contact_vertex_indices};

    Rng rng(seed);
    GenDataResult result;
    json manifest;
    manifest["version"] = 1;
    manifest["kind"] = "dataset_manifest";
    manifest["seed"] = seed;
    manifest["scene_count"] = n_scenes;
    manifest["hand_model"] = "hand_model.json";
    manifest["files"] = {{"hand_model.json", img::crc32_of_file(model_file)}};
    json scenes = json::array();

    const int size = config.image_size;

    for (int i = 0; i < n_scenes; ++i) {
        bool accepted = false;
        for (int attempt = 0; attempt < config.max_attempts && !accepted; ++attempt) {
            // Target pose, shape and framing.
            std::vector<double> theta_tar(hand::kThetaDim);
            for (double& v : theta_tar) v = rng.uniform(-0.2, 0.2);
            std::vector<double> beta(model.shape_count());
            for (double& v : beta) v = rng.uniform(-0.5, 0.5);
            const double spin = rng.uniform(-0.25, 0.25);
            geom::SimilarityTransform c2(
                rng.uniform(72.0, 88.0), {static_cast<double>(size) / 2, rng.uniform(0.42, 0.48) * size},
                geom::Quaternion::from_axis_angle({0.0, 0.0, 1.0}, spin));

            // Object primitive.
            geom::Mesh object;
            const int kind = static_cast<int>(rng.uniform_int(0, 2));
            if (kind == 0) {
                const double r = rng.uniform(0.16, 0.26);
                object = geom::make_primitive(geom::PrimitiveKind::Sphere, 16, {r, r, r});
            } else if (kind == 1) {
                const double e = rng.uniform(0.22, 0.34);
                object = geom::make_primitive(geom::PrimitiveKind::Box, 5,
                                              {e, e * rng.uniform(0.8, 1.2), e * rng.uniform(0.8, 1.2)});
            } else {
                const double r = rng.uniform(0.13, 0.2);
                object = geom::make_primitive(geom::PrimitiveKind::Cylinder, 14,
                                              {r, rng.uniform(0.25, 0.42), r});
            }

            // Placement: hover the object just off the palm with some jitter.
            geom::Mesh posed = hand::lbs_forward(model, theta_tar, beta);
            const Vec3 jitter{rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.08),
                              rng.uniform(-0.02, 0.02)};
            object = translated(object, palm_anchor_delta(model, posed, object, jitter));

            // Oracle grasp + quality gates.
            grasp::DirectOptResult opt =
                grasp::direct_grasp_opt(theta_tar, model, beta, object, spec, config.opt);
            if (opt.aborted || opt.final_contact >= config.contact_gate ||
                opt.final_contact > config.ratio_gate * opt.initial_contact) {
                continue;
            }

            // Write scene artifacts.
            const std::string tag = std::to_string(i);
            const std::string obj_file = "object_" + tag + ".obj";
            const std::string obj_tex_file = "object_" + tag + ".tex";
            const std::string hand_tex_file = "hand_" + tag + ".tex";
            const std::string bg_file = "image_" + tag + ".png";
            const std::string scene_file = "scene_" + tag + ".json";

            geom::save_obj(object, (dir / obj_file).string());
            img::FaceTexture obj_tex = random_texture(object.face_count(), rng, rng.uniform(0.2, 0.8),
                                                      rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), 0.08);
            img::save_texture((dir / obj_tex_file).string(), obj_tex);
            img::FaceTexture hand_tex =
                random_texture(model.faces.size(), rng, 0.84, 0.66, 0.5, 0.04);
            img::save_texture((dir / hand_tex_file).string(), hand_tex);

            // Scene image: the approach-pose hand and hovering object over a
            // flat backdrop. The oracle grasp lives in the manifest; the
            // scene itself stays consistent with its stored pose.
            img::RasterImage backdrop = img::RasterImage::solid(
                size, size, rng.uniform(0.55, 0.95), rng.uniform(0.55, 0.95), rng.uniform(0.55, 0.95));
            img::RasterImage fg = render::rasterize({posed, object}, {hand_tex, obj_tex}, c2,
                                                    size, size, config.threads);
            img::Mask fg_mask = render::render_mask({posed, object}, c2, size, size, config.threads);
            img::write_png((dir / bg_file).string(), comp::merge(fg, backdrop, fg_mask));

            Scene scene;
            scene.path = (dir / scene_file).string();
            scene.hand_model = "hand_model.json";
            scene.params.theta = theta_tar;
            scene.params.beta = beta;
            scene.params.c1 = geom::SimilarityTransform::identity();
            scene.params.c2 = c2;
            scene.object_mesh = obj_file;
            scene.object_texture = obj_tex_file;
            scene.hand_texture = hand_tex_file;
            scene.background = bg_file;
            scene.image_height = size;
            scene.image_width = size;
            save_scene(scene, scene.path);

            json entry;
            entry["scene"] = scene_file;
            entry["theta_init"] = theta_tar;
            entry["theta_gt"] = opt.theta;
            entry["initial_contact"] = opt.initial_contact;
            entry["final_contact"] = opt.final_contact;
            json files = json::object();
            for (const std::string& f : {scene_file, obj_file, obj_tex_file, hand_tex_file, bg_file}) {
                files[f] = img::crc32_of_file((dir / f).string());
            }
            entry["files"] = files;
            scenes.push_back(entry);

            grasp::GraspScene train;
            train.theta_tar = theta_tar;
            train.beta = beta;
            train.theta_gt = opt.theta;
            train.object = object;
            result.training_scenes.push_back(std::move(train));
            result.scene_paths.push_back(scene.path);
            accepted = true;
        }
        if (!accepted) {
            throw std::runtime_error("generate_synthetic_dataset: no graspable scene found for index " +
                                     std::to_string(i) + " within the attempt budget");
        }
    }

    manifest["scenes"] = scenes;
    result.manifest_path = write_json_file(manifest, (dir / "manifest.json").string());
    return result;
}

std::vector<grasp::GraspScene> load_dataset(const std::string& manifest_path) {
    json manifest = read_json_file(manifest_path);
    if (manifest.value("kind", "") != "dataset_manifest") {
        throw std::runtime_error(manifest_path + " is not a dataset manifest");
    }
    const fs::path dir = fs::path(manifest_path).parent_path();
    std::vector<grasp::GraspScene> out;
    for (const json& entry : manifest.at("scenes")) {
        Scene scene = load_scene((dir / entry.at("scene").get<std::string>()).string());
        grasp::GraspScene record;
        record.theta_tar = entry.at("theta_init").get<std::vector<double>>();
        record.theta_gt = entry.at("theta_gt").get<std::vector<double>>();
        record.beta = scene.params.beta;
        record.object = geom::load_obj(resolve(scene.path, scene.object_mesh));
        out.push_back(std::move(record));
    }
    return out;
}

// ---- evaluation ---------------------------------------------------------------------

nlohmann::json evaluate(const std::string& result_dir, const std::string& reference_scene) {
    const fs::path dir(result_dir);
    const std::string manifest_path = (dir / "result.json").string();
    if (!fs::exists(manifest_path)) {
        throw std::runtime_error("evaluate: missing result manifest " + manifest_path);
    }
    json manifest = read_json_file(manifest_path);
    const json& files = manifest.at("files");
    std::vector<std::string> missing;
    auto file_of = [&](const char* key) {
        const std::string f = (dir / files.at(key).get<std::string>()).string();
        if (!fs::exists(f)) missing.push_back(f);
        return f;
    };
    const std::string final_path = file_of("final");
    const std::string mask_path = file_of("mask");
    const std::string bg_path = file_of("background_inpainted");
    const std::string hand_path = file_of("hand_mesh");
    const std::string object_path = file_of("object_mesh");
    if (!missing.empty()) {
        std::string msg = "evaluate: missing artifacts:";
        for (const auto& m : missing) msg += " " + m;
        throw std::runtime_error(msg);
    }

    LoadedScene reference = load_scene_data(reference_scene);
    const geom::Mesh hand_mesh = geom::load_obj(hand_path);
    const geom::Mesh object_mesh = geom::load_obj(object_path);
    const img::RasterImage final_image = img::read_png(final_path);
    const img::RasterImage bg_image = img::read_png(bg_path);
    const img::Mask mask = img::read_png_mask(mask_path);

    // Contact statistics over the model's contact vertices.
    double mean_contact = 0.0, max_contact = 0.0;
    for (int idx : reference.model.contact_vertex_indices) {
        const Vec3& p = hand_mesh.vertices[static_cast<std::size_t>(idx)];
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& q : object_mesh.vertices) best = std::min(best, geom::norm(p - q));
        mean_contact += best;
        max_contact = std::max(max_contact, best);
    }
    mean_contact /= static_cast<double>(reference.model.contact_vertex_indices.size());

    const double centroid_offset = geom::norm(geom::centroid(object_mesh) - geom::centroid(hand_mesh));

    // Mask IoU against a freshly rendered mask of the result meshes.
    const img::Mask recomputed =
        render::render_mask({hand_mesh, object_mesh}, reference.ref.params.c2,
                            manifest.at("image").at("height").get<int>(),
                            manifest.at("image").at("width").get<int>());
    std::size_t inter = 0, uni = 0;
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        inter += (mask.values[p] & recomputed.values[p]);
        uni += (mask.values[p] | recomputed.values[p]);
    }
    const double iou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);

    // Background preservation: final must equal the inpainted background
    // outside the mask.
    double bg_error = 0.0;
    std::size_t bg_mismatch = 0;
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
        if (mask.values[p]) continue;
        for (int ch = 0; ch < 3; ++ch) {
            const double d =
                std::fabs(final_image.rgb[p * 3 + static_cast<std::size_t>(ch)] -
                          bg_image.rgb[p * 3 + static_cast<std::size_t>(ch)]);
            bg_error = std::max(bg_error, d);
            if (d != 0.0) ++bg_mismatch;
        }
    }

    json report;
    report["version"] = 1;
    report["kind"] = "evaluation_report";
    report["result_dir"] = result_dir;
    report["reference_scene"] = reference_scene;
    report["mean_contact_distance"] = mean_contact;
    report["max_contact_distance"] = max_contact;
    report["centroid_offset"] = centroid_offset;
    report["mask_iou"] = iou;
    report["background_preservation_error"] = bg_error;
    report["background_mismatch_channels"] = bg_mismatch;
    return report;
}

}  // namespace regrasp::pipeline
