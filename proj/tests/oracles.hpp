// Independent brute-force reference implementations used as test oracles.
// These must stay free of the library's loss/FK/render code paths: plain
// loops and std math only.
#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include "regrasp/geometry.hpp"
#include "regrasp/hand_model.hpp"
#include "regrasp/rng.hpp"

namespace oracles {

using regrasp::geom::Mesh;
using regrasp::geom::Vec3;

inline double dist2(const Vec3& a, const Vec3& b) {
    double s = 0.0;
    for (int c = 0; c < 3; ++c) {
        const double d = a[c] - b[c];
        s += d * d;
    }
    return s;
}

inline double chamfer_bf(const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
    double total = 0.0;
    for (const Vec3& a : p) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& b : q) best = std::min(best, dist2(a, b));
        total += best;
    }
    for (const Vec3& b : q) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& a : p) best = std::min(best, dist2(a, b));
        total += best;
    }
    return total;
}

inline double edge_bf(const Mesh& mesh) {
    std::set<std::array<int, 2>> directed;
    for (const auto& f : mesh.faces) {
        const int a = f[0], b = f[1], c = f[2];
        directed.insert({a, b});
        directed.insert({b, a});
        directed.insert({b, c});
        directed.insert({c, b});
        directed.insert({a, c});
        directed.insert({c, a});
    }
    double total = 0.0;
    for (const auto& e : directed) {
        total += dist2(mesh.vertices[static_cast<std::size_t>(e[0])],
                       mesh.vertices[static_cast<std::size_t>(e[1])]);
    }
    return total;
}

inline std::vector<Vec3> laplacian_deltas_bf(const Mesh& mesh) {
    std::vector<std::set<int>> nbrs(mesh.vertex_count());
    for (const auto& f : mesh.faces) {
        nbrs[static_cast<std::size_t>(f[0])].insert({f[1]});
        nbrs[static_cast<std::size_t>(f[0])].insert({f[2]});
        nbrs[static_cast<std::size_t>(f[1])].insert({f[0]});
        nbrs[static_cast<std::size_t>(f[1])].insert({f[2]});
        nbrs[static_cast<std::size_t>(f[2])].insert({f[0]});
        nbrs[static_cast<std::size_t>(f[2])].insert({f[1]});
    }
    std::vector<Vec3> deltas(mesh.vertex_count(), Vec3{0, 0, 0});
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
        if (nbrs[i].empty()) continue;
        Vec3 mean{0, 0, 0};
        for (int n : nbrs[i]) {
            for (int c = 0; c < 3; ++c) mean[c] += mesh.vertices[static_cast<std::size_t>(n)][c];
        }
        for (int c = 0; c < 3; ++c) {
            deltas[i][c] = mesh.vertices[i][c] - mean[c] / static_cast<double>(nbrs[i].size());
        }
    }
    return deltas;
}

inline double laplacian_bf(const Mesh& before, const Mesh& after) {
    const auto d0 = laplacian_deltas_bf(before);
    const auto d1 = laplacian_deltas_bf(after);
    double total = 0.0;
    for (std::size_t i = 0; i < d0.size(); ++i) total += dist2(d0[i], d1[i]);
    return total;
}

inline double contact_bf(const Mesh& hand, const std::vector<int>& contact, const Mesh& object) {
    double total = 0.0;
    for (int idx : contact) {
        double best = std::numeric_limits<double>::infinity();
        for (const Vec3& q : object.vertices) {
            best = std::min(best, dist2(hand.vertices[static_cast<std::size_t>(idx)], q));
        }
        total += std::sqrt(best);
    }
    return total / static_cast<double>(contact.size());
}

inline Vec3 centroid_bf(const Mesh& mesh) {
    Vec3 c{0, 0, 0};
    for (const Vec3& p : mesh.vertices) {
        for (int k = 0; k < 3; ++k) c[k] += p[k];
    }
    for (int k = 0; k < 3; ++k) c[k] /= static_cast<double>(mesh.vertices.size());
    return c;
}

// Quaternion rotation via q p q^-1 with explicit Hamilton products; an
// independent route to the rotation-matrix path in the library.
inline Vec3 quat_rotate_bf(double w, double x, double y, double z, const Vec3& p) {
    auto mul = [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
        return std::array<double, 4>{
            a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
            a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
            a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
            a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]};
    };
    const std::array<double, 4> q{w, x, y, z};
    const std::array<double, 4> qc{w, -x, -y, -z};
    const std::array<double, 4> v{0.0, p[0], p[1], p[2]};
    const auto r = mul(mul(q, v), qc);
    return {r[1], r[2], r[3]};
}

// ---- per-vertex forward kinematics oracle -------------------------------------

struct RigidTransform {
    std::array<std::array<double, 3>, 3> r;
    Vec3 t;
};

inline std::array<std::array<double, 3>, 3> rodrigues_bf(const Vec3& omega) {
    const double a = std::sqrt(omega[0] * omega[0] + omega[1] * omega[1] + omega[2] * omega[2]);
    std::array<std::array<double, 3>, 3> eye{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    if (a < 1e-12) {
        eye[0][1] -= omega[2];
        eye[0][2] += omega[1];
        eye[1][0] += omega[2];
        eye[1][2] -= omega[0];
        eye[2][0] -= omega[1];
        eye[2][1] += omega[0];
        return eye;
    }
    const Vec3 u{omega[0] / a, omega[1] / a, omega[2] / a};
    const double c = std::cos(a), s = std::sin(a);
    std::array<std::array<double, 3>, 3> out;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                c * (i == j ? 1.0 : 0.0) + (1.0 - c) * u[i] * u[j];
        }
    }
    out[0][1] -= s * u[2];
    out[0][2] += s * u[1];
    out[1][0] += s * u[2];
    out[1][2] -= s * u[0];
    out[2][0] -= s * u[1];
    out[2][1] += s * u[0];
    return out;
}

inline Vec3 matvec_bf(const std::array<std::array<double, 3>, 3>& m, const Vec3& v) {
    return {m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2]};
}

inline std::array<std::array<double, 3>, 3> matmul_bf(const std::array<std::array<double, 3>, 3>& a,
                                                      const std::array<std::array<double, 3>, 3>& b) {
    std::array<std::array<double, 3>, 3> out{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) {
                s += a[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] *
                     b[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)];
            }
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = s;
        }
    }
    return out;
}

/// Skinned vertices via an explicit per-vertex weighted sum of per-joint
/// rigid transforms; shape blend applied first.
inline std::vector<Vec3> fk_oracle(const regrasp::hand::HandModel& model,
                                   const std::vector<double>& theta,
                                   const std::vector<double>& beta) {
    const std::size_t v = model.vertex_count();
    const std::size_t j = model.joint_count();
    std::vector<Vec3> shaped(v);
    for (std::size_t i = 0; i < v; ++i) {
        for (int c = 0; c < 3; ++c) {
            double x = model.template_vertices.at2(i, static_cast<std::size_t>(c));
            for (std::size_t b = 0; b < beta.size(); ++b) {
                x += beta[b] * model.shape_dirs[b].at2(i, static_cast<std::size_t>(c));
            }
            shaped[i][c] = x;
        }
    }
    std::vector<Vec3> rest(j);
    for (std::size_t k = 0; k < j; ++k) {
        rest[k] = {model.joint_rest_positions.at2(k, 0), model.joint_rest_positions.at2(k, 1),
                   model.joint_rest_positions.at2(k, 2)};
    }
    std::vector<RigidTransform> world(j);
    world[0].r = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    world[0].t = rest[0];
    for (std::size_t k = 1; k < j; ++k) {
        const std::size_t p = static_cast<std::size_t>(model.parents[k]);
        const Vec3 omega{theta[(k - 1) * 3], theta[(k - 1) * 3 + 1], theta[(k - 1) * 3 + 2]};
        world[k].r = matmul_bf(world[p].r, rodrigues_bf(omega));
        const Vec3 off{rest[k][0] - rest[p][0], rest[k][1] - rest[p][1], rest[k][2] - rest[p][2]};
        const Vec3 moved = matvec_bf(world[p].r, off);
        world[k].t = {world[p].t[0] + moved[0], world[p].t[1] + moved[1], world[p].t[2] + moved[2]};
    }
    std::vector<Vec3> out(v, Vec3{0, 0, 0});
    for (std::size_t i = 0; i < v; ++i) {
        for (std::size_t k = 0; k < j; ++k) {
            const double w = model.skinning_weights.at2(i, k);
            if (w == 0.0) continue;
            const Vec3 local{shaped[i][0] - rest[k][0], shaped[i][1] - rest[k][1],
                             shaped[i][2] - rest[k][2]};
            const Vec3 moved = matvec_bf(world[k].r, local);
            for (int c = 0; c < 3; ++c) out[i][c] += w * (moved[c] + world[k].t[c]);
        }
    }
    return out;
}

// ---- misc helpers ------------------------------------------------------------------

inline Mesh random_cloud(regrasp::Rng& rng, std::size_t n, double span = 1.0) {
    Mesh mesh;
    for (std::size_t i = 0; i < n; ++i) {
        mesh.vertices.push_back({rng.uniform(-span, span), rng.uniform(-span, span),
                                 rng.uniform(-span, span)});
    }
    return mesh;
}

inline regrasp::ad::Tensor random_tensor(regrasp::Rng& rng, regrasp::ad::Shape shape, double span = 1.0) {
    std::vector<double> data(regrasp::ad::shape_size(shape));
    for (double& v : data) v = rng.uniform(-span, span);
    return regrasp::ad::Tensor(std::move(shape), std::move(data));
}

}  // namespace oracles
