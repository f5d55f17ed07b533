#include "regrasp/hand_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "regrasp/rng.hpp"

#include <json.hpp>

namespace regrasp::hand {

using geom::Vec3;
using geom::operator+;
using geom::operator-;
using geom::operator*;
using json = nlohmann::json;

void HandModel::validate() const {
    const std::size_t v = vertex_count();
    const std::size_t j = joint_count();
    if (v == 0 || j == 0) throw std::invalid_argument("HandModel: empty model");
    if (template_vertices.cols() != 3) throw std::invalid_argument("HandModel: template must be (V,3)");
    if (skinning_weights.rows() != v || skinning_weights.cols() != j) {
        throw std::invalid_argument("HandModel: skinning_weights must be (V,J)");
    }
    if (joint_rest_positions.rows() != j || joint_rest_positions.cols() != 3) {
        throw std::invalid_argument("HandModel: joint_rest_positions must be (J,3)");
    }
    for (std::size_t r = 0; r < v; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < j; ++c) {
            const double w = skinning_weights.at2(r, c);
            if (w < 0.0) throw std::invalid_argument("HandModel: negative skinning weight");
            s += w;
        }
        if (std::fabs(s - 1.0) > 1e-6) {
            throw std::invalid_argument("HandModel: skinning row " + std::to_string(r) +
                                        " sums to " + std::to_string(s));
        }
    }
    if (parents[0] != -1) throw std::invalid_argument("HandModel: joint 0 must be the root");
    for (std::size_t k = 1; k < j; ++k) {
        if (parents[k] < 0 || parents[k] >= static_cast<int>(k)) {
            throw std::invalid_argument("HandModel: parents must form a single-rooted tree with "
                                        "parents[j] < j");
        }
    }
    if (joint_regressor.cols() != v) throw std::invalid_argument("HandModel: joint_regressor must be (K,V)");
    for (std::size_t r = 0; r < joint_regressor.rows(); ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < v; ++c) {
            const double w = joint_regressor.at2(r, c);
            if (w < 0.0) throw std::invalid_argument("HandModel: negative regressor weight");
            s += w;
        }
        if (std::fabs(s - 1.0) > 1e-6) {
            throw std::invalid_argument("HandModel: regressor row " + std::to_string(r) +
                                        " sums to " + std::to_string(s));
        }
    }
    for (const auto& t : shape_dirs) {
        if (t.rows() != v || t.cols() != 3) throw std::invalid_argument("HandModel: shape dir must be (V,3)");
    }
    auto check_idx = [&](int idx, const char* what) {
        if (idx < 0 || idx >= static_cast<int>(v)) {
            throw std::invalid_argument(std::string("HandModel: ") + what + " index out of range");
        }
    };
    check_idx(wrist_index, "wrist");
    for (int i : fingertip_indices) check_idx(i, "fingertip");
    for (int i : palm_center_indices) check_idx(i, "palm center");
    for (int i : contact_vertex_indices) check_idx(i, "contact");
    geom::Mesh shell{std::vector<Vec3>(v, Vec3{0, 0, 0}), faces};
    shell.validate();
}

// ---- forward kinematics + skinning -------------------------------------------

namespace {

// Axis-angle -> rotation matrix on the tape. Falls back to the first-order
// I + K form below 1e-8 so the rest pose stays exactly the identity.
ad::Var rodrigues(ad::Tape& tape, ad::Var omega) {
    ad::Var zero = tape.scalar(0.0);
    ad::Var x = ad::gather(omega, {0});
    ad::Var y = ad::gather(omega, {1});
    ad::Var z = ad::gather(omega, {2});
    ad::Var k = ad::reshape(
        ad::concat({zero, ad::neg(z), y, z, zero, ad::neg(x), ad::neg(y), x, zero}), {3, 3});
    ad::Var eye = tape.constant(ad::Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    ad::Var angle = ad::l2_norm(omega);
    if (angle.scalar_value() < 1e-8) {
        return ad::add(eye, k);
    }
    ad::Var s1 = ad::div(ad::sin(angle), angle);
    ad::Var s2 = ad::div(ad::sub(1.0, ad::cos(angle)), ad::mul(angle, angle));
    return ad::add(eye, ad::add(ad::mul(s1, k), ad::mul(s2, ad::matmul(k, k))));
}

}  // namespace

ad::Var lbs_forward(ad::Tape& tape, const HandModel& model, ad::Var theta, ad::Var beta,
                    const ad::Tensor* root_rotation) {
    const std::size_t v = model.vertex_count();
    const std::size_t j = model.joint_count();
    if (theta.value().size() != static_cast<std::size_t>(kThetaDim)) {
        throw std::invalid_argument("lbs_forward: theta must have 45 elements");
    }
    if (beta.value().size() != model.shape_count()) {
        throw std::invalid_argument("lbs_forward: beta length " + std::to_string(beta.value().size()) +
                                    " does not match shape basis size " +
                                    std::to_string(model.shape_count()));
    }
    if (j != static_cast<std::size_t>(kArticulatedJoints + 1)) {
        throw std::invalid_argument("lbs_forward: model must have 16 joints (root + 15)");
    }

    // Shape blend: template + sum_b beta_b * shape_dirs[b].
    ad::Var shaped = tape.constant(model.template_vertices);
    for (std::size_t b = 0; b < model.shape_count(); ++b) {
        ad::Var coef = ad::gather(beta, {b});
        shaped = ad::add(shaped, ad::mul(coef, tape.constant(model.shape_dirs[b])));
    }

    // Forward kinematics. Joint 0 is the identity root.
    const ad::Tensor& rest = model.joint_rest_positions;
    std::vector<ad::Var> rot_global(j);
    std::vector<ad::Var> pos_global(j);
    if (root_rotation != nullptr && root_rotation->shape() != ad::Shape{3, 3}) {
        throw std::invalid_argument("lbs_forward: root rotation must be (3,3)");
    }
    rot_global[0] = tape.constant(root_rotation ? *root_rotation
                                                : ad::Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
    pos_global[0] = tape.constant(ad::Tensor({3}, {rest.at2(0, 0), rest.at2(0, 1), rest.at2(0, 2)}));
    for (std::size_t jj = 1; jj < j; ++jj) {
        const std::size_t a = 3 * (jj - 1);
        ad::Var local = rodrigues(tape, ad::gather(theta, {a, a + 1, a + 2}));
        const int par = model.parents[jj];
        const std::size_t p = static_cast<std::size_t>(par);
        ad::Var offset = tape.constant(ad::Tensor(
            {3}, {rest.at2(jj, 0) - rest.at2(p, 0), rest.at2(jj, 1) - rest.at2(p, 1),
                  rest.at2(jj, 2) - rest.at2(p, 2)}));
        rot_global[jj] = ad::matmul(rot_global[p], local);
        pos_global[jj] = ad::add(pos_global[p], ad::matmul(rot_global[p], offset));
    }

    // Skinning: out = sum_j W_j (.) ((shaped - rest_j) R_j^T + pos_j).
    ad::Var out = tape.constant(ad::Tensor::zeros({v, 3}));
    for (std::size_t jj = 0; jj < j; ++jj) {
        bool any = false;
        for (std::size_t r = 0; r < v && !any; ++r) any = model.skinning_weights.at2(r, jj) != 0.0;
        if (!any) continue;
        std::vector<double> rest_rows(v * 3);
        std::vector<double> weight_rows(v * 3);
        for (std::size_t r = 0; r < v; ++r) {
            for (std::size_t c = 0; c < 3; ++c) {
                rest_rows[r * 3 + c] = rest.at2(jj, c);
                weight_rows[r * 3 + c] = model.skinning_weights.at2(r, jj);
            }
        }
        ad::Var centered = ad::sub(shaped, tape.constant(ad::Tensor({v, 3}, rest_rows)));
        ad::Var moved = ad::add_rowvec(ad::matmul(centered, ad::transpose(rot_global[jj])), pos_global[jj]);
        out = ad::add(out, ad::mul(tape.constant(ad::Tensor({v, 3}, weight_rows)), moved));
    }
    return out;
}

geom::Mesh lbs_forward(const HandModel& model, const std::vector<double>& theta,
                       const std::vector<double>& beta, const ad::Tensor* root_rotation) {
    ad::Tape tape;
    ad::Var t = tape.constant(ad::Tensor({theta.size()}, theta));
    ad::Var b = tape.constant(ad::Tensor({beta.size()}, beta));
    ad::Var posed = lbs_forward(tape, model, t, b, root_rotation);
    geom::Mesh mesh;
    mesh.vertices = geom::tensor_vertices(posed.value());
    mesh.faces = model.faces;
    return mesh;
}

ad::Var regress_joints(ad::Tape& tape, const HandModel& model, ad::Var vertices) {
    if (vertices.shape() != ad::Shape{model.vertex_count(), 3}) {
        throw std::invalid_argument("regress_joints: vertex count does not match the model");
    }
    return ad::matmul(tape.constant(model.joint_regressor), vertices);
}

std::vector<Vec3> regress_joints(const HandModel& model, const geom::Mesh& mesh) {
    if (mesh.vertex_count() != model.vertex_count()) {
        throw std::invalid_argument("regress_joints: vertex count does not match the model");
    }
    ad::Tape tape;
    ad::Var verts = tape.constant(geom::vertices_tensor(mesh));
    return geom::tensor_vertices(regress_joints(tape, model, verts).value());
}

geom::Vec3 wrist_point(const HandModel& model, const geom::Mesh& mesh) {
    if (model.wrist_index < 0 || model.wrist_index >= static_cast<int>(mesh.vertex_count())) {
        throw std::invalid_argument("wrist_point: wrist index out of range for mesh");
    }
    return mesh.vertices[static_cast<std::size_t>(model.wrist_index)];
}

// ---- toy hand --------------------------------------------------------------------

namespace {

struct MeshBuilder {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    int add_vertex(const Vec3& p) {
        vertices.push_back(p);
        return static_cast<int>(vertices.size()) - 1;
    }
    void append(const geom::Mesh& m) {
        const int off = static_cast<int>(vertices.size());
        vertices.insert(vertices.end(), m.vertices.begin(), m.vertices.end());
        for (const auto& f : m.faces) faces.push_back({f[0] + off, f[1] + off, f[2] + off});
    }
};

// Axis-aligned box [x0,x1]x[y0,y1]x[z0,z1]; when `tip` is set, the +y cap is
// replaced by a 4-triangle fan to an apex vertex, whose index is returned.
int emit_segment(MeshBuilder& mb, double x0, double x1, double y0, double y1, double z0, double z1,
                 bool tip, double tip_len) {
    const int v0 = mb.add_vertex({x0, y0, z0});
    const int v1 = mb.add_vertex({x1, y0, z0});
    const int v2 = mb.add_vertex({x1, y1, z0});
    const int v3 = mb.add_vertex({x0, y1, z0});
    const int v4 = mb.add_vertex({x0, y0, z1});
    const int v5 = mb.add_vertex({x1, y0, z1});
    const int v6 = mb.add_vertex({x1, y1, z1});
    const int v7 = mb.add_vertex({x0, y1, z1});
    mb.faces.push_back({v0, v1, v5});
    mb.faces.push_back({v0, v5, v4});
    mb.faces.push_back({v4, v5, v6});
    mb.faces.push_back({v4, v6, v7});
    mb.faces.push_back({v0, v2, v1});
    mb.faces.push_back({v0, v3, v2});
    mb.faces.push_back({v1, v2, v6});
    mb.faces.push_back({v1, v6, v5});
    mb.faces.push_back({v0, v7, v3});
    mb.faces.push_back({v0, v4, v7});
    if (!tip) {
        mb.faces.push_back({v2, v7, v6});
        mb.faces.push_back({v2, v3, v7});
        return -1;
    }
    const int apex = mb.add_vertex({0.5 * (x0 + x1), y1 + tip_len, 0.5 * (z0 + z1)});
    mb.faces.push_back({apex, v6, v2});
    mb.faces.push_back({apex, v2, v3});
    mb.faces.push_back({apex, v3, v7});
    mb.faces.push_back({apex, v7, v6});
    return apex;
}

std::vector<int> nearest_vertices(const std::vector<Vec3>& verts, const Vec3& target, int count) {
    std::vector<std::pair<double, int>> order;
    order.reserve(verts.size());
    for (std::size_t i = 0; i < verts.size(); ++i) {
        order.emplace_back(geom::norm(verts[i] - target), static_cast<int>(i));
    }
    std::sort(order.begin(), order.end());
    std::vector<int> out;
    for (int i = 0; i < count && i < static_cast<int>(order.size()); ++i) out.push_back(order[static_cast<std::size_t>(i)].second);
    return out;
}

}  // namespace

HandModel make_toy_hand(std::uint64_t seed) {
    constexpr int kFingers = 5;
    constexpr double kPalmHalf = 0.5;
    constexpr double kPalmThick = 0.25;
    constexpr double kSegLen = 0.3;
    constexpr double kFingerHalf = 0.055;
    const double finger_x[kFingers] = {-0.4, -0.2, 0.0, 0.2, 0.4};
    const double finger_scale[kFingers] = {0.85, 0.95, 1.0, 0.95, 0.85};

    MeshBuilder mb;

    // Palm: grid-subdivided box centered at the origin; +z face is the palm side.
    geom::Mesh palm = geom::make_primitive(geom::PrimitiveKind::Box, 4, {1.0, 1.0, kPalmThick});
    mb.append(palm);
    const std::size_t palm_verts = mb.vertices.size();

    // Joints: 0 = wrist root, then 3 per finger (base to tip).
    std::vector<Vec3> joints;
    std::vector<int> parents;
    joints.push_back({0.0, -kPalmHalf, 0.0});
    parents.push_back(-1);

    struct SegInfo {
        std::size_t first_vertex, vertex_count;
        int joint;           // owning joint index
        double y0, y1;       // span along the rest finger axis
    };
    std::vector<SegInfo> segs;
    std::vector<int> fingertips;

    for (int f = 0; f < kFingers; ++f) {
        const double len = kSegLen * finger_scale[f];
        const double tip_len = 0.08 * finger_scale[f];
        int parent = 0;
        for (int s = 0; s < 3; ++s) {
            const double y0 = kPalmHalf + s * len;
            joints.push_back({finger_x[f], y0, 0.0});
            parents.push_back(parent);
            parent = static_cast<int>(joints.size()) - 1;

            SegInfo info;
            info.first_vertex = mb.vertices.size();
            info.joint = parent;
            info.y0 = y0;
            info.y1 = y0 + len;
            const bool tip = s == 2;
            const int apex = emit_segment(mb, finger_x[f] - kFingerHalf, finger_x[f] + kFingerHalf,
                                          y0, y0 + len, -kFingerHalf, kFingerHalf, tip, tip_len);
            info.vertex_count = mb.vertices.size() - info.first_vertex;
            segs.push_back(info);
            if (tip) fingertips.push_back(apex);
        }
    }

    const std::size_t v = mb.vertices.size();
    const std::size_t j = joints.size();

    // Skinning: palm rides the root; finger vertices blend between the
    // owning joint and its parent near the segment base.
    std::vector<double> weights(v * j, 0.0);
    for (std::size_t i = 0; i < palm_verts; ++i) weights[i * j + 0] = 1.0;
    for (const SegInfo& s : segs) {
        for (std::size_t i = s.first_vertex; i < s.first_vertex + s.vertex_count; ++i) {
            const double t = std::clamp((mb.vertices[i][1] - s.y0) / (s.y1 - s.y0), 0.0, 1.0);
            const double w_own = std::min(1.0, 0.5 + t);
            weights[i * j + static_cast<std::size_t>(s.joint)] = w_own;
            const int par = parents[static_cast<std::size_t>(s.joint)];
            if (w_own < 1.0) weights[i * j + static_cast<std::size_t>(par)] = 1.0 - w_own;
        }
    }

    HandModel model;
    {
        std::vector<double> tv(v * 3);
        for (std::size_t i = 0; i < v; ++i) {
            tv[i * 3] = mb.vertices[i][0];
            tv[i * 3 + 1] = mb.vertices[i][1];
            tv[i * 3 + 2] = mb.vertices[i][2];
        }
        model.template_vertices = ad::Tensor({v, 3}, std::move(tv));
    }
    model.faces = mb.faces;
    model.skinning_weights = ad::Tensor({v, j}, std::move(weights));
    {
        std::vector<double> jr(j * 3);
        for (std::size_t k = 0; k < j; ++k) {
            jr[k * 3] = joints[k][0];
            jr[k * 3 + 1] = joints[k][1];
            jr[k * 3 + 2] = joints[k][2];
        }
        model.joint_rest_positions = ad::Tensor({j, 3}, std::move(jr));
    }
    model.parents = parents;

    // Shape basis: smooth low-frequency displacement fields.
    Rng rng(seed);
    for (int b = 0; b < kBetaDim; ++b) {
        std::vector<double> dir(v * 3);
        double freq[3], phase[3];
        for (int c = 0; c < 3; ++c) {
            freq[c] = rng.uniform(0.5, 2.0);
            phase[c] = rng.uniform(0.0, 6.28318530717958647692);
        }
        for (std::size_t i = 0; i < v; ++i) {
            const Vec3& p = mb.vertices[i];
            for (int c = 0; c < 3; ++c) {
                dir[i * 3 + static_cast<std::size_t>(c)] =
                    0.02 * std::sin(freq[c] * (p[0] + p[1] + p[2]) + phase[c] + c);
            }
        }
        model.shape_dirs.push_back(ad::Tensor({v, 3}, std::move(dir)));
    }

    // Joint regressor: uniform convex weights over the 6 template vertices
    // nearest each joint.
    {
        std::vector<double> reg(j * v, 0.0);
        for (std::size_t k = 0; k < j; ++k) {
            for (int idx : nearest_vertices(mb.vertices, joints[k], 6)) {
                reg[k * v + static_cast<std::size_t>(idx)] = 1.0 / 6.0;
            }
        }
        model.joint_regressor = ad::Tensor({j, v}, std::move(reg));
    }

    model.wrist_index = nearest_vertices(mb.vertices, {0.0, -kPalmHalf, 0.0}, 1)[0];
    model.fingertip_indices = fingertips;
    // Palm contact points: the four +z-face grid vertices nearest the palm center.
    model.palm_center_indices = nearest_vertices(
        std::vector<Vec3>(mb.vertices.begin(), mb.vertices.begin() + static_cast<std::ptrdiff_t>(palm_verts)),
        {0.0, 0.1, 0.5 * kPalmThick}, 4);
    model.contact_vertex_indices = model.fingertip_indices;
    model.contact_vertex_indices.insert(model.contact_vertex_indices.end(),
                                        model.palm_center_indices.begin(),
                                        model.palm_center_indices.end());
    model.validate();
    return model;
}

// ---- JSON serialization ---------------------------------------------------------

namespace {

json tensor_to_json(const ad::Tensor& t) {
    return json{{"shape", t.shape()}, {"data", t.data()}};
}

ad::Tensor tensor_from_json(const json& jt) {
    ad::Shape shape = jt.at("shape").get<ad::Shape>();
    std::vector<double> data = jt.at("data").get<std::vector<double>>();
    return ad::Tensor(std::move(shape), std::move(data));
}

}  // namespace

void save_hand_model(const HandModel& model, const std::string& path) {
    json doc;
    doc["version"] = 1;
    doc["kind"] = "hand_model";
    doc["template_vertices"] = tensor_to_json(model.template_vertices);
    json faces = json::array();
    for (const auto& f : model.faces) faces.push_back({f[0], f[1], f[2]});
    doc["faces"] = faces;
    doc["skinning_weights"] = tensor_to_json(model.skinning_weights);
    doc["joint_rest_positions"] = tensor_to_json(model.joint_rest_positions);
    doc["parents"] = model.parents;
    json dirs = json::array();
    for (const auto& d : model.shape_dirs) dirs.push_back(tensor_to_json(d));
    doc["shape_dirs"] = dirs;
    doc["joint_regressor"] = tensor_to_json(model.joint_regressor);
    doc["wrist_index"] = model.wrist_index;
    doc["fingertip_indices"] = model.fingertip_indices;
    doc["palm_center_indices"] = model.palm_center_indices;
    doc["contact_vertex_indices"] = model.contact_vertex_indices;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_hand_model: cannot open " + path);
    out << doc.dump(1, '\t') << '\n';
    if (!out) throw std::runtime_error("save_hand_model: write failed for " + path);
}

HandModel load_hand_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_hand_model: cannot open " + path);
    json doc = json::parse(in);
    if (doc.value("kind", "") != "hand_model") {
        throw std::runtime_error("load_hand_model: not a hand model document: " + path);
    }
    HandModel model;
    model.template_vertices = tensor_from_json(doc.at("template_vertices"));
    for (const auto& f : doc.at("faces")) {
        model.faces.push_back({f.at(0).get<int>(), f.at(1).get<int>(), f.at(2).get<int>()});
    }
    model.skinning_weights = tensor_from_json(doc.at("skinning_weights"));
    model.joint_rest_positions = tensor_from_json(doc.at("joint_rest_positions"));
    model.parents = doc.at("parents").get<std::vector<int>>();
    for (const auto& d : doc.at("shape_dirs")) model.shape_dirs.push_back(tensor_from_json(d));
    model.joint_regressor = tensor_from_json(doc.at("joint_regressor"));
    model.wrist_index = doc.at("wrist_index").get<int>();
    model.fingertip_indices = doc.at("fingertip_indices").get<std::vector<int>>();
    model.palm_center_indices = doc.at("palm_center_indices").get<std::vector<int>>();
    model.contact_vertex_indices = doc.at("contact_vertex_indices").get<std::vector<int>>();
    model.validate();
    return model;
}

}  // namespace regrasp::hand
