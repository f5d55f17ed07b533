#include <doctest.h>

#include <cmath>

#include "regrasp/grasp_net.hpp"
#include "regrasp/optim.hpp"
#include "regrasp/pipeline.hpp"
#include "regrasp/rng.hpp"

#include "oracles.hpp"

using namespace regrasp;
using geom::Mesh;
using geom::Vec3;
using geom::operator+;
using geom::operator-;

namespace {

grasp::GraspNetConfig tiny_config(grasp::Arch arch = grasp::Arch::CondNorm) {
    grasp::GraspNetConfig c;
    c.arch = arch;
    c.trunk_width = 8;
    c.mod_width = 6;
    c.desc_dim = 5;
    return c;
}

}  // namespace

TEST_CASE("object descriptor invariances") {
    grasp::GraspNetParams params = grasp::GraspNetParams::init(tiny_config(), 3);
    Rng rng(2);
    Mesh mesh = oracles::random_cloud(rng, 40);

    const ad::Tensor base = grasp::object_descriptor(params, mesh);

    SUBCASE("vertex permutation, bit exact") {
        Mesh shuffled = mesh;
        std::vector<std::size_t> order(mesh.vertex_count());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        rng.shuffle(order);
        for (std::size_t i = 0; i < order.size(); ++i) shuffled.vertices[i] = mesh.vertices[order[i]];
        const ad::Tensor perm = grasp::object_descriptor(params, shuffled);
        for (std::size_t i = 0; i < base.size(); ++i) CHECK(perm[i] == base[i]);
    }

    SUBCASE("translation within 1e-12") {
        Mesh moved = mesh;
        for (Vec3& p : moved.vertices) p = p + Vec3{0.37, -1.2, 2.5};
        const ad::Tensor t = grasp::object_descriptor(params, moved);
        for (std::size_t i = 0; i < base.size(); ++i) {
            CHECK(t[i] == doctest::Approx(base[i]).epsilon(1e-12));
        }
    }

    SUBCASE("matches a brute-force map + max scan") {
        const ad::Tensor& w = params.get("desc_proj.w");
        const ad::Tensor& b = params.get("desc_proj.b");
        const Vec3 c = oracles::centroid_bf(mesh);
        for (std::size_t d = 0; d < base.size(); ++d) {
            double best = -std::numeric_limits<double>::infinity();
            for (const Vec3& p : mesh.vertices) {
                double v = b[d];
                for (std::size_t k = 0; k < 3; ++k) v += w.at2(d, k) * (p[k] - c[k]);
                best = std::max(best, v);
            }
            CHECK(base[d] == doctest::Approx(best).epsilon(1e-9));
        }
    }

    SUBCASE("empty mesh rejected") {
        Mesh empty;
        CHECK_THROWS(grasp::object_descriptor(params, empty));
    }
}

TEST_CASE("conditioned normalization") {
    Rng rng(5);
    const std::size_t n = 45;

    SUBCASE("identity modulation standardizes the input") {
        ad::Tape tape;
        ad::Var x = tape.constant(oracles::random_tensor(rng, {n}, 2.0));
        ad::Var gamma = tape.constant(ad::Tensor::ones({n}));
        ad::Var alpha = tape.constant(ad::Tensor::zeros({n}));
        ad::Tensor out = grasp::cond_norm(tape, x, gamma, alpha).value();
        double mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += out[i];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (out[i] - mean) * (out[i] - mean);
        var /= static_cast<double>(n);
        CHECK(std::fabs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("constant input returns alpha exactly") {
        ad::Tape tape;
        ad::Var x = tape.constant(ad::Tensor::full({n}, 0.73));
        ad::Tensor alpha = oracles::random_tensor(rng, {n});
        ad::Tensor gamma = oracles::random_tensor(rng, {n});
        ad::Tensor out = grasp::cond_norm(tape, x, tape.constant(gamma), tape.constant(alpha)).value();
        for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == alpha[i]);
    }

    SUBCASE("invariant to positive affine reparameterization") {
        ad::Tensor x = oracles::random_tensor(rng, {n});
        ad::Tensor gamma = oracles::random_tensor(rng, {n});
        ad::Tensor alpha = oracles::random_tensor(rng, {n});
        ad::Tape tape;
        ad::Tensor base =
            grasp::cond_norm(tape, tape.constant(x), tape.constant(gamma), tape.constant(alpha)).value();
        for (int trial = 0; trial < 10; ++trial) {
            const double a = rng.uniform(0.1, 5.0);
            const double b = rng.uniform(-3.0, 3.0);
            ad::Tensor scaled = x;
            for (double& v : scaled.mutable_data()) v = a * v + b;
            ad::Tensor out = grasp::cond_norm(tape, tape.constant(scaled), tape.constant(gamma),
                                              tape.constant(alpha))
                                 .value();
            for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == doctest::Approx(base[i]).epsilon(1e-9));
        }
    }

    SUBCASE("gradient matches finite differences") {
        ad::Tensor x = oracles::random_tensor(rng, {n});
        ad::Tensor gamma = oracles::random_tensor(rng, {n});
        ad::Tensor alpha = oracles::random_tensor(rng, {n});
        ad::Tensor probe = oracles::random_tensor(rng, {n});
        auto f = [&](ad::Tape& t, ad::Var v) {
            return ad::sum(ad::mul(grasp::cond_norm(t, v, t.constant(gamma), t.constant(alpha)),
                                   t.constant(probe)));
        };
        CHECK(ad::finite_diff_check(f, x, 1e-6) < 1e-4);
    }
}

TEST_CASE("grasp_forward basics") {
    Rng rng(7);
    Mesh object = geom::make_primitive(geom::PrimitiveKind::Sphere, 8, {0.2, 0.2, 0.2});
    std::vector<double> theta(hand::kThetaDim);
    for (double& v : theta) v = rng.uniform(-0.3, 0.3);

    SUBCASE("zero-initialized output layer returns its bias") {
        grasp::GraspNetParams params = grasp::GraspNetParams::init(tiny_config(), 1);
        ad::Tensor& bias = params.get_mutable("fc_out.b");
        for (std::size_t i = 0; i < bias.size(); ++i) bias.mutable_data()[i] = 0.01 * static_cast<double>(i);
        const auto out = grasp::grasp_forward(params, theta, object);
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out[i] == doctest::Approx(0.01 * static_cast<double>(i)).epsilon(1e-12));
        }
    }

    SUBCASE("deterministic across runs") {
        grasp::GraspNetParams params = grasp::GraspNetParams::init(tiny_config(), 1);
        ad::Tensor& w = params.get_mutable("fc_out.w");
        Rng wr(9);
        for (double& v : w.mutable_data()) v = 0.05 * wr.normal();
        const auto a = grasp::grasp_forward(params, theta, object);
        const auto b = grasp::grasp_forward(params, theta, object);
        CHECK(a == b);
    }

    SUBCASE("mlp-only variant runs") {
        grasp::GraspNetParams params = grasp::GraspNetParams::init(tiny_config(grasp::Arch::MlpOnly), 1);
        const auto out = grasp::grasp_forward(params, theta, object);
        CHECK(out.size() == static_cast<std::size_t>(hand::kThetaDim));
    }
}

TEST_CASE("default parameter counts sit near the reference sizes") {
    grasp::GraspNetParams cond = grasp::GraspNetParams::init(grasp::GraspNetConfig{}, 0);
    grasp::GraspNetConfig mlp_config;
    mlp_config.arch = grasp::Arch::MlpOnly;
    grasp::GraspNetParams mlp = grasp::GraspNetParams::init(mlp_config, 0);

    // Brute-force element count as the reference.
    auto count = [](const grasp::GraspNetParams& p) {
        std::size_t n = 0;
        for (const auto& [name, t] : p.tensors) n += t.data().size();
        return n;
    };
    CHECK(cond.param_count() == count(cond));
    CHECK(mlp.param_count() == count(mlp));

    CHECK(std::fabs(static_cast<double>(cond.param_count()) - 0.49e6) < 0.1 * 0.49e6);
    CHECK(std::fabs(static_cast<double>(mlp.param_count()) - 0.97e6) < 0.1 * 0.97e6);
}

TEST_CASE("grasp_forward gradients match finite differences on a tiny net") {
    Rng rng(21);
    grasp::GraspNetConfig config = tiny_config();
    grasp::GraspNetParams params = grasp::GraspNetParams::init(config, 2);
    for (auto& [name, t] : params.tensors) {
        for (double& v : t.mutable_data()) v += 0.1 * rng.normal();
    }
    Mesh object = oracles::random_cloud(rng, 12);
    std::vector<double> theta(hand::kThetaDim);
    for (double& v : theta) v = rng.uniform(-0.5, 0.5);
    ad::Tensor probe = oracles::random_tensor(rng, {static_cast<std::size_t>(hand::kThetaDim)});

    // All parameters packed into one flat leaf.
    std::vector<double> packed;
    for (const auto& [name, t] : params.tensors) {
        packed.insert(packed.end(), t.data().begin(), t.data().end());
    }
    auto f = [&](ad::Tape& tape, ad::Var flat) {
        grasp::GraspNetVars net;
        std::size_t off = 0;
        for (const auto& [name, t] : params.tensors) {
            std::vector<std::size_t> idx(t.size());
            for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = off + k;
            off += idx.size();
            net.vars.emplace_back(name, ad::reshape(ad::gather(flat, idx), t.shape()));
        }
        ad::Var theta_v = tape.constant(ad::Tensor({theta.size()}, theta));
        ad::Var obj = tape.constant(geom::vertices_tensor(object));
        ad::Var out = grasp::grasp_forward(tape, net, config, theta_v, obj);
        return ad::sum(ad::mul(out, tape.constant(probe)));
    };
    CHECK(ad::finite_diff_check(f, ad::Tensor({packed.size()}, packed), 1e-5) < 1e-4);
}

TEST_CASE("direct_grasp_opt") {
    hand::HandModel model = hand::make_toy_hand(0);
    losses::ContactSpec spec{model.contact_vertex_indices};
    std::vector<double> beta(model.shape_count(), 0.0);
    std::vector<double> theta0(hand::kThetaDim, 0.0);

    SUBCASE("optimum at start stays put") {
        // Object vertices exactly at the rest-pose contact points.
        geom::Mesh rest = hand::lbs_forward(model, theta0, beta);
        Mesh object;
        for (int idx : model.contact_vertex_indices) {
            object.vertices.push_back(rest.vertices[static_cast<std::size_t>(idx)]);
        }
        grasp::DirectOptConfig config;
        config.iterations = 40;
        config.centroid_weight = 0.0;  // contact is exactly zero at the start
        grasp::DirectOptResult result =
            grasp::direct_grasp_opt(theta0, model, beta, object, spec, config);
        CHECK(result.initial_contact == doctest::Approx(0.0));
        for (double v : result.theta) CHECK(std::fabs(v) < 1e-3);
    }

    SUBCASE("graspable sphere improves contact and never worsens the best") {
        geom::Mesh rest = hand::lbs_forward(model, theta0, beta);
        Mesh sphere = geom::make_primitive(geom::PrimitiveKind::Sphere, 12, {0.2, 0.2, 0.2});
        const Vec3 target = pipeline::palm_point(model, rest) + Vec3{0.0, 0.15, 0.18};
        const Vec3 delta = target - geom::centroid(sphere);
        for (Vec3& p : sphere.vertices) p = p + delta;

        grasp::DirectOptConfig config;
        grasp::DirectOptResult result =
            grasp::direct_grasp_opt(theta0, model, beta, sphere, spec, config);
        CHECK(result.final_contact < 0.1 * result.initial_contact);

        // argmin tracking is monotone.
        double best = result.loss_history[0];
        for (double v : result.loss_history) best = std::min(best, v);
        CHECK(result.final_loss == doctest::Approx(best));

        grasp::DirectOptResult again =
            grasp::direct_grasp_opt(theta0, model, beta, sphere, spec, config);
        CHECK(again.theta == result.theta);
    }
}

TEST_CASE("train_grasp zero epochs returns the initial parameters") {
    hand::HandModel model = hand::make_toy_hand(0);
    grasp::GraspScene scene;
    scene.theta_tar.assign(hand::kThetaDim, 0.1);
    scene.theta_gt.assign(hand::kThetaDim, 0.2);
    scene.beta.assign(model.shape_count(), 0.0);
    scene.object = geom::make_primitive(geom::PrimitiveKind::Sphere, 8, {0.2, 0.2, 0.2});

    grasp::GraspNetParams init = grasp::GraspNetParams::init(tiny_config(), 4);
    grasp::TrainConfig config;
    config.epochs = 0;
    grasp::TrainResult result =
        grasp::train_grasp(model, {scene}, init, grasp::make_critic(1), config);
    for (std::size_t i = 0; i < init.tensors.size(); ++i) {
        CHECK(result.params.tensors[i].second.data() == init.tensors[i].second.data());
    }
    CHECK_THROWS_AS(grasp::train_grasp(model, {}, init, grasp::make_critic(1), config),
                    std::invalid_argument);
}

TEST_CASE("critic self-play: matched distributions drive the loss to zero") {
    // Generated and real samples drawn from the same distribution; after
    // convergence the critic cannot separate them and the penalty pushes
    // its gradient norm to 1.
    Rng rng(31);
    nn::Mlp critic = grasp::make_critic(7);
    optim::Adam opt(1e-3, 0.5, 0.999);
    const double lambda = 10.0;

    double critic_loss = 0.0, penalty = 0.0;
    for (int step = 0; step < 600; ++step) {
        std::vector<ad::Tensor> fake, real;
        for (int i = 0; i < 8; ++i) {
            fake.push_back(oracles::random_tensor(rng, {static_cast<std::size_t>(hand::kThetaDim)}, 0.5));
            real.push_back(oracles::random_tensor(rng, {static_cast<std::size_t>(hand::kThetaDim)}, 0.5));
        }
        ad::Tape tape;
        nn::MlpVars vars = nn::bind(tape, critic, true);
        std::vector<ad::Var> fs, rs;
        for (const auto& s : fake) fs.push_back(nn::forward(tape, vars, tape.constant(s)));
        for (const auto& s : real) rs.push_back(nn::forward(tape, vars, tape.constant(s)));
        ad::Var wass = ad::sub(ad::mean(ad::concat(fs)), ad::mean(ad::concat(rs)));
        ad::Var gp = losses::gradient_penalty(tape, vars, fake, lambda);
        ad::Var loss = ad::add(wass, gp);
        critic_loss = wass.scalar_value();
        penalty = gp.scalar_value();

        ad::GradientMap grads = tape.backward(loss);
        std::vector<ad::Tensor> storage;
        std::vector<ad::Tensor*> params;
        std::vector<const ad::Tensor*> gvals;
        for (std::size_t l = 0; l < critic.weights.size(); ++l) {
            storage.push_back(grads.at(vars.weights[l]));
            storage.push_back(grads.at(vars.biases[l]));
        }
        for (std::size_t l = 0; l < critic.weights.size(); ++l) {
            params.push_back(&critic.weights[l]);
            params.push_back(&critic.biases[l]);
            gvals.push_back(&storage[l * 2]);
            gvals.push_back(&storage[l * 2 + 1]);
        }
        opt.step(params, gvals);
    }
    CHECK(std::fabs(critic_loss) < 0.5);
    CHECK(penalty < 0.1);
}

TEST_CASE("weight files round trip") {
    grasp::GraspNetParams params = grasp::GraspNetParams::init(tiny_config(), 11);
    Rng rng(3);
    for (auto& [name, t] : params.tensors) {
        for (double& v : t.mutable_data()) v = rng.normal();
    }
    nn::Mlp critic = grasp::make_critic(11);
    const std::string path =
        (std::filesystem::temp_directory_path() / "regrasp_weights.json").string();
    grasp::save_weights(params, critic, path);

    grasp::GraspNetParams loaded;
    nn::Mlp loaded_critic;
    grasp::load_weights(path, loaded, loaded_critic);
    CHECK(loaded.param_count() == params.param_count());
    for (std::size_t i = 0; i < params.tensors.size(); ++i) {
        CHECK(loaded.tensors[i].first == params.tensors[i].first);
        CHECK(loaded.tensors[i].second.data() == params.tensors[i].second.data());
    }
    for (std::size_t l = 0; l < critic.weights.size(); ++l) {
        CHECK(loaded_critic.weights[l].data() == critic.weights[l].data());
    }
}
