#include "regrasp/grasp_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "regrasp/optim.hpp"
#include "regrasp/rng.hpp"

#include <json.hpp>

namespace regrasp::grasp {

using json = nlohmann::json;

std::string arch_name(Arch a) { return a == Arch::CondNorm ? "cond_norm" : "mlp_only"; }

Arch arch_from_name(const std::string& name) {
    if (name == "cond_norm") return Arch::CondNorm;
    if (name == "mlp_only") return Arch::MlpOnly;
    throw std::invalid_argument("unknown grasp net architecture: " + name);
}

const ad::Tensor& GraspNetParams::get(const std::string& name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw std::invalid_argument("GraspNetParams: no tensor named " + name);
}

ad::Tensor& GraspNetParams::get_mutable(const std::string& name) {
    for (auto& [n, t] : tensors) {
        if (n == name) return t;
    }
    throw std::invalid_argument("GraspNetParams: no tensor named " + name);
}

std::size_t GraspNetParams::param_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
}

namespace {

ad::Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    std::vector<double> w(rows * cols);
    const double sd = 1.0 / std::sqrt(static_cast<double>(cols));
    for (double& v : w) v = sd * rng.normal();
    return ad::Tensor({rows, cols}, std::move(w));
}

}  // namespace

GraspNetParams GraspNetParams::init(const GraspNetConfig& config, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t h = config.trunk_width, g = config.mod_width, d = config.desc_dim;
    GraspNetParams p;
    p.config = config;
    auto push = [&](const std::string& name, ad::Tensor t) { p.tensors.emplace_back(name, std::move(t)); };

    push("desc_proj.w", random_matrix(d, 3, rng));
    push("desc_proj.b", ad::Tensor::zeros({d}));
    if (config.arch == Arch::CondNorm) {
        push("fc_in.w", random_matrix(h, hand::kThetaDim, rng));
        push("fc_in.b", ad::Tensor::zeros({h}));
        push("gamma.w1", random_matrix(g, d, rng));
        push("gamma.b1", ad::Tensor::zeros({g}));
        push("gamma.w2", random_matrix(h, g, rng));
        push("gamma.b2", ad::Tensor::ones({h}));  // start as identity modulation
        push("alpha.w1", random_matrix(g, d, rng));
        push("alpha.b1", ad::Tensor::zeros({g}));
        push("alpha.w2", random_matrix(h, g, rng));
        push("alpha.b2", ad::Tensor::zeros({h}));
    } else {
        push("fc_in.w", random_matrix(h, hand::kThetaDim + d, rng));
        push("fc_in.b", ad::Tensor::zeros({h}));
        push("stack1.w1", random_matrix(g, h, rng));
        push("stack1.b1", ad::Tensor::zeros({g}));
        push("stack1.w2", random_matrix(h, g, rng));
        push("stack1.b2", ad::Tensor::zeros({h}));
        push("stack2.w1", random_matrix(g, h, rng));
        push("stack2.b1", ad::Tensor::zeros({g}));
        push("stack2.w2", random_matrix(h, g, rng));
        push("stack2.b2", ad::Tensor::zeros({h}));
    }
    push("fc_out.w", ad::Tensor::zeros({static_cast<std::size_t>(hand::kThetaDim), h}));
    push("fc_out.b", ad::Tensor::zeros({static_cast<std::size_t>(hand::kThetaDim)}));
    return p;
}

const ad::Var& GraspNetVars::get(const std::string& name) const {
    for (const auto& [n, v] : vars) {
        if (n == name) return v;
    }
    throw std::invalid_argument("GraspNetVars: no tensor named " + name);
}

GraspNetVars bind(ad::Tape& tape, const GraspNetParams& params, bool trainable) {
    GraspNetVars out;
    for (const auto& [name, t] : params.tensors) {
        if (trainable) {
            ad::Tensor copy = t;
            copy.set_requires_grad(true);
            out.vars.emplace_back(name, tape.leaf(std::move(copy)));
        } else {
            out.vars.emplace_back(name, tape.constant(t));
        }
    }
    return out;
}

// ---- object descriptor -------------------------------------------------------

ad::Var object_descriptor(ad::Tape& tape, ad::Var object_vertices, ad::Var proj_w, ad::Var proj_b) {
    const auto& shape = object_vertices.shape();
    if (shape.size() != 2 || shape[1] != 3 || shape[0] == 0) {
        throw std::invalid_argument("object_descriptor: object vertices must be (n,3), non-empty");
    }
    ad::Var center = ad::sorted_mean_rows(object_vertices);
    ad::Var centered = ad::sub(object_vertices, ad::add_rowvec(
                                                    tape.constant(ad::Tensor::zeros(shape)), center));
    // Per-vertex features: (n,3) x (3,d) + bias, then column-wise max.
    ad::Var feats = ad::add_rowvec(ad::matmul(centered, ad::transpose(proj_w)), proj_b);
    ad::Var col_min = ad::min_rows(ad::neg(ad::transpose(feats)));
    return ad::neg(col_min);
}

ad::Tensor object_descriptor(const GraspNetParams& params, const geom::Mesh& object) {
    ad::Tape tape;
    return object_descriptor(tape, tape.constant(geom::vertices_tensor(object)),
                             tape.constant(params.get("desc_proj.w")),
                             tape.constant(params.get("desc_proj.b")))
        .value();
}

// ---- conditioned normalization --------------------------------------------------

ad::Var cond_norm(ad::Tape& tape, ad::Var x, ad::Var gamma, ad::Var alpha, double eps) {
    const ad::Tensor& xv = x.value();
    const std::size_t n = xv.size();
    if (gamma.value().size() != n || alpha.value().size() != n) {
        throw std::invalid_argument("cond_norm: gamma/alpha width must match the input");
    }
    (void)tape;
    bool constant = true;
    for (std::size_t i = 1; i < n && constant; ++i) constant = xv[i] == xv[0];
    if (constant) {
        // sigma = 0: the standardized term is exactly zero under the eps
        // floor, so the output is alpha bit for bit.
        return ad::add(ad::mul(gamma, ad::mul(0.0, x)), alpha);
    }
    ad::Var mu = ad::mean(x);
    ad::Var diff = ad::sub(x, mu);
    ad::Var sigma = ad::sqrt(ad::mean(ad::square(diff)));
    ad::Var sigma_safe = ad::max_with(sigma, eps);
    return ad::add(ad::mul(gamma, ad::div(diff, sigma_safe)), alpha);
}

// ---- grasp forward -----------------------------------------------------------------

namespace {

ad::Var fc(const GraspNetVars& net, const std::string& prefix, ad::Var x, int idx = 0) {
    const std::string suffix = idx == 0 ? "" : std::to_string(idx);
    return ad::add(ad::matmul(net.get(prefix + ".w" + suffix), x), net.get(prefix + ".b" + suffix));
}

}  // namespace

ad::Var grasp_forward(ad::Tape& tape, const GraspNetVars& net, const GraspNetConfig& config,
                      ad::Var theta_tar, ad::Var object_vertices) {
    if (theta_tar.value().size() != static_cast<std::size_t>(hand::kThetaDim)) {
        throw std::invalid_argument("grasp_forward: theta must have 45 elements");
    }
    ad::Var desc = object_descriptor(tape, object_vertices, net.get("desc_proj.w"),
                                     net.get("desc_proj.b"));
    ad::Var h;
    if (config.arch == Arch::CondNorm) {
        h = fc(net, "fc_in", theta_tar);
        ad::Var gamma = ad::add(ad::matmul(net.get("gamma.w2"),
                                           ad::tanh(ad::add(ad::matmul(net.get("gamma.w1"), desc),
                                                            net.get("gamma.b1")))),
                                net.get("gamma.b2"));
        ad::Var alpha = ad::add(ad::matmul(net.get("alpha.w2"),
                                           ad::tanh(ad::add(ad::matmul(net.get("alpha.w1"), desc),
                                                            net.get("alpha.b1")))),
                                net.get("alpha.b2"));
        h = cond_norm(tape, h, gamma, alpha);
    } else {
        h = fc(net, "fc_in", ad::concat({theta_tar, desc}));
        h = ad::add(ad::matmul(net.get("stack1.w2"),
                               ad::tanh(ad::add(ad::matmul(net.get("stack1.w1"), h),
                                                net.get("stack1.b1")))),
                    net.get("stack1.b2"));
        h = ad::add(ad::matmul(net.get("stack2.w2"),
                               ad::tanh(ad::add(ad::matmul(net.get("stack2.w1"), h),
                                                net.get("stack2.b1")))),
                    net.get("stack2.b2"));
    }
    return fc(net, "fc_out", ad::tanh(h));
}

std::vector<double> grasp_forward(const GraspNetParams& params, const std::vector<double>& theta_tar,
                                  const geom::Mesh& object) {
    ad::Tape tape;
    GraspNetVars net = bind(tape, params, false);
    ad::Var theta = tape.constant(ad::Tensor({theta_tar.size()}, theta_tar));
    ad::Var obj = tape.constant(geom::vertices_tensor(object));
    return grasp_forward(tape, net, params.config, theta, obj).value().data();
}

// ---- direct optimization -------------------------------------------------------------

DirectOptResult direct_grasp_opt(const std::vector<double>& theta_init, const hand::HandModel& model,
                                 const std::vector<double>& beta, const geom::Mesh& object,
                                 const losses::ContactSpec& spec, const DirectOptConfig& config) {
    if (theta_init.size() != static_cast<std::size_t>(hand::kThetaDim)) {
        throw std::invalid_argument("direct_grasp_opt: theta must have 45 elements");
    }
    if (object.vertices.empty()) throw std::invalid_argument("direct_grasp_opt: empty object mesh");
    spec.validate(model.vertex_count());

    const ad::Tensor object_t = geom::vertices_tensor(object);
    ad::Tensor theta(ad::Shape{theta_init.size()}, theta_init, true);
    ad::Tensor beta_t(ad::Shape{beta.size()}, beta);

    auto evaluate = [&](ad::Tape& tape, ad::Var theta_var, double* contact_out) {
        ad::Var verts = hand::lbs_forward(tape, model, theta_var, tape.constant(beta_t));
        ad::Var obj = tape.constant(object_t);
        ad::Var contact = losses::contact_loss(tape, verts, spec, obj);
        ad::Var cent = losses::centroid_loss(tape, obj, verts);
        if (contact_out) *contact_out = contact.scalar_value();
        return ad::add(ad::mul(config.contact_weight, contact), ad::mul(config.centroid_weight, cent));
    };

    DirectOptResult result;
    optim::Adam adam(config.lr, config.beta1, config.beta2);

    double best_loss = 0.0;
    std::vector<double> best_theta = theta_init;
    for (int it = 0; it <= config.iterations; ++it) {
        ad::Tape tape;
        ad::Var theta_var = tape.leaf(theta);
        double contact_val = 0.0;
        ad::Var loss = evaluate(tape, theta_var, &contact_val);
        const double loss_val = loss.scalar_value();
        if (it == 0) {
            result.initial_loss = loss_val;
            result.initial_contact = contact_val;
            best_loss = loss_val;
        }
        result.loss_history.push_back(loss_val);
        if (loss_val <= best_loss) {
            best_loss = loss_val;
            best_theta = theta.data();
            result.final_contact = contact_val;
        }
        if (loss_val > config.divergence_threshold) {
            result.aborted = true;
            break;
        }
        if (it == config.iterations) break;
        ad::GradientMap grads = tape.backward(loss);
        const ad::Tensor& g = grads.at(theta_var);
        adam.step({&theta}, {&g});
    }

    result.theta = best_theta;
    result.final_loss = best_loss;
    return result;
}

// ---- training --------------------------------------------------------------------------

nn::Mlp make_critic(std::uint64_t seed) {
    Rng rng(seed);
    return nn::Mlp::make({static_cast<std::size_t>(hand::kThetaDim), 128, 128, 1}, rng);
}

namespace {

double checked(double v, const char* term, int epoch) {
    if (!std::isfinite(v)) {
        throw std::runtime_error("train_grasp: non-finite " + std::string(term) + " at epoch " +
                                 std::to_string(epoch));
    }
    return v;
}

}  // namespace

TrainResult train_grasp(const hand::HandModel& model, const std::vector<GraspScene>& dataset,
                        GraspNetParams init, nn::Mlp critic_init, const TrainConfig& config) {
    if (dataset.empty()) throw std::invalid_argument("train_grasp: empty dataset");
    for (const GraspScene& s : dataset) {
        if (s.theta_tar.size() != static_cast<std::size_t>(hand::kThetaDim) ||
            s.theta_gt.size() != static_cast<std::size_t>(hand::kThetaDim)) {
            throw std::invalid_argument("train_grasp: scene theta must have 45 elements");
        }
        if (s.object.vertices.empty()) throw std::invalid_argument("train_grasp: scene with empty object");
    }
    losses::ContactSpec spec{model.contact_vertex_indices};

    TrainResult result;
    result.params = std::move(init);
    result.critic = std::move(critic_init);

    optim::Adam gen_opt(config.lr, config.beta1, config.beta2);
    optim::Adam critic_opt(config.lr, config.beta1, config.beta2);
    Rng rng(config.seed);

    const int batch = std::max(1, config.batch_size);

    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(order);
        EpochStats stats;
        int stat_count = 0;

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch));
            std::vector<const GraspScene*> scenes;
            for (std::size_t i = start; i < end; ++i) scenes.push_back(&dataset[order[i]]);

            // Critic updates: widen E[D(real)] - E[D(fake)] under the penalty.
            for (int c = 0; c < config.n_critic; ++c) {
                ad::Tape tape;
                nn::MlpVars critic = nn::bind(tape, result.critic, true);
                GraspNetVars net = bind(tape, result.params, false);
                std::vector<ad::Var> fake_scores, real_scores;
                std::vector<ad::Tensor> fake_samples;
                for (const GraspScene* s : scenes) {
                    ad::Var theta = tape.constant(ad::Tensor({s->theta_tar.size()}, s->theta_tar));
                    ad::Var obj = tape.constant(geom::vertices_tensor(s->object));
                    ad::Var theta_p = grasp_forward(tape, net, result.params.config, theta, obj);
                    fake_samples.push_back(theta_p.value());
                    fake_scores.push_back(nn::forward(tape, critic, theta_p));
                    real_scores.push_back(nn::forward(
                        tape, critic, tape.constant(ad::Tensor({s->theta_gt.size()}, s->theta_gt))));
                }
                ad::Var wasserstein = ad::sub(ad::mean(ad::concat(fake_scores)),
                                              ad::mean(ad::concat(real_scores)));
                ad::Var penalty = losses::gradient_penalty(tape, critic, fake_samples, config.lambda_gp);
                ad::Var critic_loss = ad::add(wasserstein, penalty);
                checked(critic_loss.scalar_value(), "critic loss", epoch);

                ad::GradientMap grads = tape.backward(critic_loss);
                std::vector<ad::Tensor*> params;
                std::vector<const ad::Tensor*> gvals;
                std::vector<ad::Tensor> storage;
                storage.reserve(result.critic.weights.size() * 2);
                for (std::size_t l = 0; l < result.critic.weights.size(); ++l) {
                    storage.push_back(grads.at(critic.weights[l]));
                    storage.push_back(grads.at(critic.biases[l]));
                }
                for (std::size_t l = 0; l < result.critic.weights.size(); ++l) {
                    params.push_back(&result.critic.weights[l]);
                    params.push_back(&result.critic.biases[l]);
                    gvals.push_back(&storage[l * 2]);
                    gvals.push_back(&storage[l * 2 + 1]);
                }
                critic_opt.step(params, gvals);

                if (c == config.n_critic - 1) {
                    stats.critic += wasserstein.scalar_value();
                    stats.penalty += penalty.scalar_value();
                }
            }

            // Generator update: contact + centroid + adversarial.
            {
                ad::Tape tape;
                GraspNetVars net = bind(tape, result.params, true);
                nn::MlpVars critic = nn::bind(tape, result.critic, false);
                std::vector<ad::Var> contact_terms, cent_terms, adv_terms;
                for (const GraspScene* s : scenes) {
                    ad::Var theta = tape.constant(ad::Tensor({s->theta_tar.size()}, s->theta_tar));
                    ad::Var obj = tape.constant(geom::vertices_tensor(s->object));
                    ad::Var theta_p = grasp_forward(tape, net, result.params.config, theta, obj);
                    ad::Var verts = hand::lbs_forward(tape, model, theta_p,
                                                      tape.constant(ad::Tensor({s->beta.size()}, s->beta)));
                    contact_terms.push_back(losses::contact_loss(tape, verts, spec, obj));
                    cent_terms.push_back(losses::centroid_loss(tape, obj, verts));
                    adv_terms.push_back(nn::forward(tape, critic, theta_p));
                }
                ad::Var contact = ad::mean(ad::concat(contact_terms));
                ad::Var cent = ad::mean(ad::concat(cent_terms));
                ad::Var adv = ad::neg(ad::mean(ad::concat(adv_terms)));
                checked(contact.scalar_value(), "contact loss", epoch);
                checked(cent.scalar_value(), "centroid loss", epoch);
                checked(adv.scalar_value(), "adversarial loss", epoch);
                ad::Var gen_loss = ad::add(ad::mul(config.contact_weight, contact),
                                           ad::add(ad::mul(config.centroid_weight, cent),
                                                   ad::mul(config.adv_weight, adv)));

                ad::GradientMap grads = tape.backward(gen_loss);
                std::vector<ad::Tensor*> params;
                std::vector<const ad::Tensor*> gvals;
                std::vector<ad::Tensor> storage;
                storage.reserve(net.vars.size());
                for (auto& [name, var] : net.vars) storage.push_back(grads.at(var));
                std::size_t k = 0;
                for (auto& [name, tensor] : result.params.tensors) {
                    params.push_back(&tensor);
                    gvals.push_back(&storage[k++]);
                }
                gen_opt.step(params, gvals);

                stats.contact += contact.scalar_value();
                stats.centroid += cent.scalar_value();
                stats.adv += adv.scalar_value();
                ++stat_count;
            }
        }

        if (stat_count > 0) {
            stats.contact /= stat_count;
            stats.centroid /= stat_count;
            stats.adv /= stat_count;
            stats.critic /= stat_count;
            stats.penalty /= stat_count;
        }
        result.curve.push_back(stats);
    }
    return result;
}

// ---- weight file I/O ----------------------------------------------------------------------

namespace {

json tensor_to_json(const ad::Tensor& t) {
    return json{{"shape", t.shape()}, {"data", t.data()}};
}

ad::Tensor tensor_from_json(const json& jt) {
    return ad::Tensor(jt.at("shape").get<ad::Shape>(), jt.at("data").get<std::vector<double>>());
}

}  // namespace

void save_weights(const GraspNetParams& params, const nn::Mlp& critic, const std::string& path) {
    json doc;
    doc["version"] = 1;
    doc["kind"] = "grasp_weights";
    doc["arch"] = arch_name(params.config.arch);
    doc["widths"] = {{"trunk", params.config.trunk_width},
                     {"mod", params.config.mod_width},
                     {"desc", params.config.desc_dim}};
    json tensors = json::object();
    for (const auto& [name, t] : params.tensors) tensors[name] = tensor_to_json(t);
    doc["tensors"] = tensors;
    json critic_doc = json::array();
    for (std::size_t l = 0; l < critic.weights.size(); ++l) {
        critic_doc.push_back({{"w", tensor_to_json(critic.weights[l])},
                              {"b", tensor_to_json(critic.biases[l])}});
    }
    doc["critic"] = critic_doc;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_weights: cannot open " + path);
    out << doc.dump() << '\n';
    if (!out) throw std::runtime_error("save_weights: write failed for " + path);
}

void load_weights(const std::string& path, GraspNetParams& params, nn::Mlp& critic) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_weights: cannot open " + path);
    json doc = json::parse(in);
    if (doc.value("kind", "") != "grasp_weights") {
        throw std::runtime_error("load_weights: not a weight file: " + path);
    }
    GraspNetConfig config;
    config.arch = arch_from_name(doc.at("arch").get<std::string>());
    config.trunk_width = doc.at("widths").at("trunk").get<std::size_t>();
    config.mod_width = doc.at("widths").at("mod").get<std::size_t>();
    config.desc_dim = doc.at("widths").at("desc").get<std::size_t>();
    GraspNetParams loaded = GraspNetParams::init(config, 0);
    for (auto& [name, t] : loaded.tensors) {
        const json& jt = doc.at("tensors").at(name);
        ad::Tensor parsed = tensor_from_json(jt);
        if (parsed.shape() != t.shape()) {
            throw std::runtime_error("load_weights: shape mismatch for tensor " + name);
        }
        t = std::move(parsed);
    }
    params = std::move(loaded);
    critic.weights.clear();
    critic.biases.clear();
    for (const auto& layer : doc.at("critic")) {
        critic.weights.push_back(tensor_from_json(layer.at("w")));
        critic.biases.push_back(tensor_from_json(layer.at("b")));
    }
    critic.validate();
}

}  // namespace regrasp::grasp
