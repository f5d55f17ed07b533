#include "regrasp/losses.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

namespace regrasp::losses {

void ContactSpec::validate(std::size_t hand_vertex_count) const {
    if (vertex_indices.empty()) throw std::invalid_argument("ContactSpec: empty contact set");
    for (int i : vertex_indices) {
        if (i < 0 || i >= static_cast<int>(hand_vertex_count)) {
            throw std::invalid_argument("ContactSpec: vertex index " + std::to_string(i) +
                                        " out of range");
        }
    }
}

// ---- chamfer -----------------------------------------------------------------

ad::Var chamfer_loss(ad::Tape& tape, ad::Var p, ad::Var q) {
    ad::Var fwd = ad::sum(ad::min_rows(ad::pairwise_sqdist(p, q)));
    ad::Var bwd = ad::sum(ad::min_rows(ad::pairwise_sqdist(q, p)));
    (void)tape;
    return ad::add(fwd, bwd);
}

double chamfer_loss(const ad::Tensor& p, const ad::Tensor& q) {
    ad::Tape tape;
    return chamfer_loss(tape, tape.constant(p), tape.constant(q)).scalar_value();
}

// ---- edge ---------------------------------------------------------------------

namespace {

std::vector<std::array<int, 2>> directed_edges(const std::vector<std::array<int, 3>>& faces) {
    std::set<std::array<int, 2>> unique;
    for (const auto& f : faces) {
        unique.insert({f[0], f[1]});
        unique.insert({f[1], f[0]});
        unique.insert({f[1], f[2]});
        unique.insert({f[2], f[1]});
        unique.insert({f[0], f[2]});
        unique.insert({f[2], f[0]});
    }
    return {unique.begin(), unique.end()};
}

}  // namespace

ad::Var edge_loss(ad::Tape& tape, ad::Var vertices, const std::vector<std::array<int, 3>>& faces) {
    const auto edges = directed_edges(faces);
    if (edges.empty()) return tape.scalar(0.0);
    std::vector<std::size_t> head, tail;
    head.reserve(edges.size() * 3);
    tail.reserve(edges.size() * 3);
    for (const auto& e : edges) {
        for (std::size_t c = 0; c < 3; ++c) {
            head.push_back(static_cast<std::size_t>(e[0]) * 3 + c);
            tail.push_back(static_cast<std::size_t>(e[1]) * 3 + c);
        }
    }
    ad::Var diff = ad::sub(ad::gather(vertices, head), ad::gather(vertices, tail));
    return ad::sum_sq(diff);
}

double edge_loss(const geom::Mesh& mesh) {
    ad::Tape tape;
    return edge_loss(tape, tape.constant(geom::vertices_tensor(mesh)), mesh.faces).scalar_value();
}

// ---- laplacian -------------------------------------------------------------------

namespace {

// Uniform Laplacian matrix (I - A/deg); rows with no neighbors are zeroed.
ad::Tensor laplacian_matrix(const geom::Mesh& mesh) {
    const std::size_t v = mesh.vertex_count();
    std::vector<std::set<int>> nbrs(v);
    for (const auto& f : mesh.faces) {
        nbrs[static_cast<std::size_t>(f[0])].insert(f[1]);
        nbrs[static_cast<std::size_t>(f[0])].insert(f[2]);
        nbrs[static_cast<std::size_t>(f[1])].insert(f[0]);
        nbrs[static_cast<std::size_t>(f[1])].insert(f[2]);
        nbrs[static_cast<std::size_t>(f[2])].insert(f[0]);
        nbrs[static_cast<std::size_t>(f[2])].insert(f[1]);
    }
    std::vector<double> lap(v * v, 0.0);
    for (std::size_t i = 0; i < v; ++i) {
        if (nbrs[i].empty()) continue;
        lap[i * v + i] = 1.0;
        const double w = -1.0 / static_cast<double>(nbrs[i].size());
        for (int n : nbrs[i]) lap[i * v + static_cast<std::size_t>(n)] = w;
    }
    return ad::Tensor({v, v}, std::move(lap));
}

}  // namespace

ad::Var laplacian_loss(ad::Tape& tape, ad::Var vertices_after, const geom::Mesh& before) {
    if (vertices_after.shape() != ad::Shape{before.vertex_count(), 3}) {
        throw std::invalid_argument("laplacian_loss: vertex count mismatch with the reference mesh");
    }
    ad::Tensor lap = laplacian_matrix(before);
    ad::Var lap_c = tape.constant(lap);

    ad::Tape scratch;
    ad::Tensor delta_before =
        ad::matmul(scratch.constant(lap), scratch.constant(geom::vertices_tensor(before))).value();

    ad::Var delta_after = ad::matmul(lap_c, vertices_after);
    return ad::sum_sq(ad::sub(delta_after, tape.constant(delta_before)));
}

double laplacian_loss(const geom::Mesh& before, const geom::Mesh& after) {
    if (before.faces != after.faces || before.vertex_count() != after.vertex_count()) {
        throw std::invalid_argument("laplacian_loss: topology mismatch");
    }
    ad::Tape tape;
    return laplacian_loss(tape, tape.constant(geom::vertices_tensor(after)), before).scalar_value();
}

// ---- contact --------------------------------------------------------------------

ad::Var contact_loss(ad::Tape& tape, ad::Var hand_vertices, const ContactSpec& spec,
                     ad::Var object_vertices) {
    spec.validate(hand_vertices.shape()[0]);
    std::vector<std::size_t> idx;
    idx.reserve(spec.vertex_indices.size() * 3);
    for (int i : spec.vertex_indices) {
        for (std::size_t c = 0; c < 3; ++c) idx.push_back(static_cast<std::size_t>(i) * 3 + c);
    }
    ad::Var pts = ad::reshape(ad::gather(hand_vertices, idx), {spec.vertex_indices.size(), 3});
    ad::Var nearest_sq = ad::min_rows(ad::pairwise_sqdist(pts, object_vertices));
    (void)tape;
    return ad::mean(ad::sqrt(nearest_sq));
}

double contact_loss(const geom::Mesh& hand, const ContactSpec& spec, const geom::Mesh& object) {
    if (object.vertices.empty()) throw std::invalid_argument("contact_loss: empty object mesh");
    ad::Tape tape;
    return contact_loss(tape, tape.constant(geom::vertices_tensor(hand)), spec,
                        tape.constant(geom::vertices_tensor(object)))
        .scalar_value();
}

// ---- centroid ---------------------------------------------------------------------

ad::Var centroid_loss(ad::Tape& tape, ad::Var object_vertices, ad::Var hand_vertices) {
    ad::Var d = ad::sub(geom::centroid(tape, object_vertices), geom::centroid(tape, hand_vertices));
    return ad::mul(0.5, ad::sum_sq(d));
}

double centroid_loss(const geom::Mesh& object, const geom::Mesh& hand) {
    if (object.vertices.empty() || hand.vertices.empty()) {
        throw std::invalid_argument("centroid_loss: empty mesh");
    }
    ad::Tape tape;
    return centroid_loss(tape, tape.constant(geom::vertices_tensor(object)),
                         tape.constant(geom::vertices_tensor(hand)))
        .scalar_value();
}

// ---- hand loss ----------------------------------------------------------------------

ad::Var hand_loss(ad::Tape& tape, ad::Var pred_vertices, const ad::Tensor& gt_vertices,
                  ad::Var pred_skeleton, const ad::Tensor& gt_skeleton,
                  const geom::SimilarityTransform& c1, const geom::SimilarityTransform& c2,
                  const ad::Tensor& gt_2d) {
    if (pred_vertices.shape() != gt_vertices.shape()) {
        throw std::invalid_argument("hand_loss: mesh shape mismatch");
    }
    const std::size_t k = pred_skeleton.shape()[0];
    if (gt_skeleton.shape() != ad::Shape{k, 3} || gt_2d.shape() != ad::Shape{k, 2}) {
        throw std::invalid_argument("hand_loss: skeleton shape mismatch");
    }

    ad::Tape scratch;
    ad::Tensor gt_mesh_c1 =
        geom::apply_similarity(scratch, scratch.constant(gt_vertices), c1).value();

    ad::Var mesh_term = ad::l1_norm(
        ad::sub(geom::apply_similarity(tape, pred_vertices, c1), tape.constant(gt_mesh_c1)));

    ad::Var skel3 = geom::apply_similarity(tape, pred_skeleton, c1);
    ad::Var term3d = ad::sum_sq(ad::sub(skel3, tape.constant(gt_skeleton)));

    ad::Var skel2 = geom::apply_similarity(tape, pred_skeleton, c2);
    std::vector<std::size_t> xy;
    xy.reserve(k * 2);
    for (std::size_t i = 0; i < k; ++i) {
        xy.push_back(i * 3);
        xy.push_back(i * 3 + 1);
    }
    ad::Var term2d = ad::sum_sq(ad::sub(ad::gather(skel2, xy), tape.constant(ad::Tensor(
                                                                   {k * 2}, gt_2d.data()))));

    return ad::add(mesh_term, ad::add(term3d, term2d));
}

double hand_loss(const geom::Mesh& pred, const geom::Mesh& gt,
                 const std::vector<geom::Vec3>& pred_skeleton,
                 const std::vector<geom::Vec3>& gt_skeleton, const geom::SimilarityTransform& c1,
                 const geom::SimilarityTransform& c2,
                 const std::vector<std::array<double, 2>>& gt_2d) {
    auto pack3 = [](const std::vector<geom::Vec3>& v) {
        std::vector<double> d;
        d.reserve(v.size() * 3);
        for (const auto& p : v) {
            d.push_back(p[0]);
            d.push_back(p[1]);
            d.push_back(p[2]);
        }
        return ad::Tensor({v.size(), 3}, std::move(d));
    };
    std::vector<double> d2;
    d2.reserve(gt_2d.size() * 2);
    for (const auto& p : gt_2d) {
        d2.push_back(p[0]);
        d2.push_back(p[1]);
    }
    ad::Tape tape;
    return hand_loss(tape, tape.constant(geom::vertices_tensor(pred)), geom::vertices_tensor(gt),
                     tape.constant(pack3(pred_skeleton)), pack3(gt_skeleton), c1, c2,
                     ad::Tensor({gt_2d.size(), 2}, std::move(d2)))
        .scalar_value();
}

// ---- gradient penalty ------------------------------------------------------------------

ad::Var gradient_penalty(ad::Tape& tape, const nn::MlpVars& critic,
                         const std::vector<ad::Tensor>& theta_samples, double lambda) {
    if (theta_samples.empty()) throw std::invalid_argument("gradient_penalty: no samples");
    std::vector<ad::Var> terms;
    terms.reserve(theta_samples.size());
    for (const ad::Tensor& s : theta_samples) {
        ad::Var x = tape.constant(s);
        ad::Var g = nn::input_gradient(tape, critic, x);
        terms.push_back(ad::square(ad::sub(ad::l2_norm(g), 1.0)));
    }
    return ad::mul(lambda, ad::mean(ad::concat(terms)));
}

double gradient_penalty(const nn::Mlp& critic, const std::vector<ad::Tensor>& theta_samples,
                        double lambda) {
    ad::Tape tape;
    return gradient_penalty(tape, nn::bind(tape, critic, false), theta_samples, lambda).scalar_value();
}

}  // namespace regrasp::losses
