// Command-line front end: reenactment, grasp training, texture fitting,
// synthetic data generation, evaluation and plain rendering.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "regrasp/grasp_net.hpp"
#include "regrasp/pipeline.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace regrasp;

namespace {

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    return json::parse(in);
}

template <typename T>
T cfg(const json& j, const std::string& key, T fallback) {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
}

grasp::DirectOptConfig direct_opt_config(const json& j) {
    grasp::DirectOptConfig c;
    const json d = j.value("direct_opt", json::object());
    c.iterations = cfg(d, "iterations", c.iterations);
    c.lr = cfg(d, "lr", c.lr);
    c.beta1 = cfg(d, "beta1", c.beta1);
    c.beta2 = cfg(d, "beta2", c.beta2);
    c.contact_weight = cfg(d, "contact_weight", c.contact_weight);
    c.centroid_weight = cfg(d, "centroid_weight", c.centroid_weight);
    c.divergence_threshold = cfg(d, "divergence_threshold", c.divergence_threshold);
    return c;
}

int cmd_reenact(const std::string& source, const std::string& target, const std::string& mode,
                const std::string& weights, const std::string& out, const std::string& config_path,
                std::uint64_t seed, int threads) {
    json config_doc = load_config(config_path);
    pipeline::ReenactConfig config;
    config.mode = mode == "network" ? pipeline::GraspMode::Network : pipeline::GraspMode::Direct;
    config.weights = weights;
    config.direct = direct_opt_config(config_doc);
    config.inpaint.tolerance = cfg(config_doc.value("inpaint", json::object()), "tolerance",
                                   config.inpaint.tolerance);
    config.inpaint.max_iterations = cfg(config_doc.value("inpaint", json::object()), "max_iterations",
                                        config.inpaint.max_iterations);
    config.place_at_palm = cfg(config_doc, "place_at_palm", true);
    config.threads = threads;
    config.seed = seed;
    pipeline::ReenactResult result = pipeline::reenact(source, target, config, out);
    json summary{{"out_dir", result.out_dir},
                 {"initial_contact", result.initial_contact},
                 {"final_contact", result.final_contact}};
    std::cout << summary.dump(1, '\t') << '\n';
    return 0;
}

int cmd_gen_data(int n, std::uint64_t seed, const std::string& out, const std::string& config_path,
                 int threads) {
    json config_doc = load_config(config_path);
    pipeline::GenDataConfig config;
    config.image_size = cfg(config_doc, "image_size", config.image_size);
    config.opt = direct_opt_config(config_doc);
    config.contact_gate = cfg(config_doc, "contact_gate", config.contact_gate);
    config.ratio_gate = cfg(config_doc, "ratio_gate", config.ratio_gate);
    config.max_attempts = cfg(config_doc, "max_attempts", config.max_attempts);
    config.threads = threads;
    pipeline::GenDataResult result = pipeline::generate_synthetic_dataset(n, seed, out, config);
    json summary{{"manifest", result.manifest_path},
                 {"scenes", result.scene_paths.size()}};
    std::cout << summary.dump(1, '\t') << '\n';
    return 0;
}

int cmd_train(const std::string& data, const std::string& out, const std::string& config_path,
              std::uint64_t seed) {
    json config_doc = load_config(config_path);
    grasp::TrainConfig config;
    config.seed = seed;
    config.epochs = cfg(config_doc, "epochs", config.epochs);
    config.lr = cfg(config_doc, "lr", config.lr);
    config.beta1 = cfg(config_doc, "beta1", config.beta1);
    config.beta2 = cfg(config_doc, "beta2", config.beta2);
    config.lambda_gp = cfg(config_doc, "lambda_gp", config.lambda_gp);
    config.n_critic = cfg(config_doc, "n_critic", config.n_critic);
    config.batch_size = cfg(config_doc, "batch_size", config.batch_size);

    grasp::GraspNetConfig net_config;
    net_config.arch = grasp::arch_from_name(cfg<std::string>(config_doc, "arch", "cond_norm"));

    const fs::path manifest(data);
    const fs::path dir = manifest.parent_path();
    hand::HandModel model = hand::load_hand_model((dir / "hand_model.json").string());
    std::vector<grasp::GraspScene> dataset = pipeline::load_dataset(data);

    grasp::TrainResult result = grasp::train_grasp(
        model, dataset, grasp::GraspNetParams::init(net_config, seed), grasp::make_critic(seed ^ 1),
        config);

    fs::create_directories(out);
    const std::string weights = (fs::path(out) / "weights.json").string();
    grasp::save_weights(result.params, result.critic, weights);
    json curve = json::array();
    for (const auto& e : result.curve) {
        curve.push_back({{"contact", e.contact},
                         {"centroid", e.centroid},
                         {"adv", e.adv},
                         {"critic", e.critic},
                         {"penalty", e.penalty}});
    }
    json curve_doc{{"version", 1}, {"kind", "training_curve"}, {"epochs", curve}};
    std::ofstream(fs::path(out) / "curve.json") << curve_doc.dump(1, '\t') << '\n';
    json summary{{"weights", weights},
                 {"param_count", result.params.param_count()},
                 {"final_contact", result.curve.empty() ? 0.0 : result.curve.back().contact}};
    std::cout << summary.dump(1, '\t') << '\n';
    return 0;
}

int cmd_fit_texture(const std::string& scene_path, const std::string& out,
                    const std::string& config_path, int threads) {
    json config_doc = load_config(config_path);
    pipeline::LoadedScene scene = pipeline::load_scene_data(scene_path);
    render::FitTextureConfig config;
    config.steps = cfg(config_doc, "steps", config.steps);
    config.lr = cfg(config_doc, "lr", config.lr);
    config.init_value = cfg(config_doc, "init_value", config.init_value);
    config.threads = threads;

    geom::Mesh hand_mesh = hand::lbs_forward(scene.model, scene.ref.params.theta, scene.ref.params.beta);
    const std::vector<geom::Mesh> meshes{hand_mesh, scene.object};
    img::Mask fg = render::render_mask(meshes, scene.ref.params.c2, scene.ref.image_height,
                                       scene.ref.image_width, threads);
    render::FitTextureResult result =
        render::fit_texture(meshes, scene.ref.params.c2, scene.background, fg, config);

    fs::create_directories(out);
    img::save_texture((fs::path(out) / "hand_fitted.tex").string(), result.textures[0]);
    img::save_texture((fs::path(out) / "object_fitted.tex").string(), result.textures[1]);
    json summary{{"final_loss", result.final_loss}, {"warnings", result.warnings}};
    std::ofstream(fs::path(out) / "fit.json") << summary.dump(1, '\t') << '\n';
    std::cout << summary.dump(1, '\t') << '\n';
    return 0;
}

int cmd_eval(const std::string& result_dir, const std::string& reference, const std::string& out) {
    json report = pipeline::evaluate(result_dir, reference);
    if (!out.empty()) {
        std::ofstream o(out);
        if (!o) throw std::runtime_error("cannot open " + out);
        o << report.dump(1, '\t') << '\n';
    }
    std::cout << report.dump(1, '\t') << '\n';
    return 0;
}

int cmd_render(const std::string& scene_path, const std::string& out, int threads) {
    pipeline::LoadedScene scene = pipeline::load_scene_data(scene_path);
    geom::Mesh hand_mesh = hand::lbs_forward(scene.model, scene.ref.params.theta, scene.ref.params.beta);
    const std::vector<geom::Mesh> meshes{hand_mesh, scene.object};
    img::RasterImage image =
        render::rasterize(meshes, {scene.hand_tex, scene.object_tex}, scene.ref.params.c2,
                          scene.ref.image_height, scene.ref.image_width, threads);
    img::Mask mask = render::render_mask(meshes, scene.ref.params.c2, scene.ref.image_height,
                                         scene.ref.image_width, threads);
    fs::create_directories(out);
    img::write_png((fs::path(out) / "render.png").string(), image);
    img::write_png((fs::path(out) / "mask.png").string(), mask);
    std::cout << json{{"render", (fs::path(out) / "render.png").string()}}.dump() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D hand-object grasp reenactment"};
    app.require_subcommand(1);

    std::string config_path, out = "out";
    std::uint64_t seed = 0;
    int threads = 1;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON config file");
        cmd->add_option("--seed", seed, "RNG seed");
        cmd->add_option("--out", out, "output directory");
        cmd->add_option("--threads", threads, "renderer threads");
    };

    std::string source, target, mode = "direct", weights;
    CLI::App* reenact = app.add_subcommand("reenact", "transfer the source object into the target scene");
    reenact->add_option("--source", source, "source scene json")->required();
    reenact->add_option("--target", target, "target scene json")->required();
    reenact->add_option("--mode", mode, "grasp mode: network|direct")
        ->check(CLI::IsMember({"network", "direct"}));
    reenact->add_option("--weights", weights, "grasp network weights (network mode)");
    add_common(reenact);

    int n_scenes = 10;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
    gen->add_option("--n", n_scenes, "number of scenes");
    add_common(gen);

    std::string data;
    CLI::App* train = app.add_subcommand("train-grasp", "train the grasp manipulation network");
    train->add_option("--data", data, "dataset manifest json")->required();
    add_common(train);

    std::string scene_path;
    CLI::App* fit = app.add_subcommand("fit-texture", "fit per-face textures to a scene image");
    fit->add_option("--scene", scene_path, "scene json")->required();
    add_common(fit);

    std::string result_dir, reference, report_out;
    CLI::App* eval = app.add_subcommand("eval", "evaluate a reenactment result directory");
    eval->add_option("--result", result_dir, "reenact output directory")->required();
    eval->add_option("--reference", reference, "reference target scene json")->required();
    eval->add_option("--report", report_out, "report json path");

    CLI::App* rendercmd = app.add_subcommand("render", "render a scene to PNG");
    rendercmd->add_option("--scene", scene_path, "scene json")->required();
    add_common(rendercmd);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(reenact)) {
            return cmd_reenact(source, target, mode, weights, out, config_path, seed, threads);
        }
        if (app.got_subcommand(gen)) return cmd_gen_data(n_scenes, seed, out, config_path, threads);
        if (app.got_subcommand(train)) return cmd_train(data, out, config_path, seed);
        if (app.got_subcommand(fit)) return cmd_fit_texture(scene_path, out, config_path, threads);
        if (app.got_subcommand(eval)) return cmd_eval(result_dir, reference, report_out);
        if (app.got_subcommand(rendercmd)) return cmd_render(scene_path, out, threads);
    } catch (const std::exception& e) {
        json err{{"error", {{"command", app.get_subcommands().front()->get_name()},
                            {"message", e.what()}}}};
        std::cerr << err.dump() << '\n';
        return 1;
    }
    return 0;
}
