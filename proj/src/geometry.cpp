#include "regrasp/geometry.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace regrasp::geom {

double norm(const Vec3& a) { return std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]); }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

void Mesh::validate() const {
    const int v = static_cast<int>(vertices.size());
    for (const Vec3& p : vertices) {
        for (double c : p) {
            if (!std::isfinite(c)) throw std::invalid_argument("Mesh: non-finite vertex");
        }
    }
    for (std::size_t f = 0; f < faces.size(); ++f) {
        const auto& face = faces[f];
        for (int idx : face) {
            if (idx < 0 || idx >= v) {
                throw std::invalid_argument("Mesh: face " + std::to_string(f) + " index " +
                                            std::to_string(idx) + " out of range [0," +
                                            std::to_string(v) + ")");
            }
        }
        if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
            throw std::invalid_argument("Mesh: degenerate face " + std::to_string(f));
        }
    }
}

// ---- quaternion ------------------------------------------------------------

Quaternion::Quaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {
    const double n = std::sqrt(w * w + x * x + y * y + z * z);
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw std::invalid_argument("Quaternion: cannot normalize zero or non-finite quaternion");
    }
    w /= n;
    x /= n;
    y /= n;
    z /= n;
    if (w < 0.0) {
        w = -w;
        x = -x;
        y = -y;
        z = -z;
    }
}

Quaternion Quaternion::from_axis_angle(const Vec3& axis, double angle) {
    const double n = norm(axis);
    if (!(n > 0.0)) throw std::invalid_argument("Quaternion::from_axis_angle: zero axis");
    const double h = 0.5 * angle;
    const double s = std::sin(h) / n;
    return Quaternion(std::cos(h), s * axis[0], s * axis[1], s * axis[2]);
}

std::array<std::array<double, 3>, 3> Quaternion::rotation_matrix() const {
    const double ww = w * w, xx = x * x, yy = y * y, zz = z * z;
    return {{{ww + xx - yy - zz, 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)},
             {2.0 * (x * y + w * z), ww - xx + yy - zz, 2.0 * (y * z - w * x)},
             {2.0 * (x * z - w * y), 2.0 * (y * z + w * x), ww - xx - yy + zz}}};
}

Vec3 Quaternion::rotate(const Vec3& p) const {
    const auto r = rotation_matrix();
    return {r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2]};
}

// ---- similarity transform -----------------------------------------------------

SimilarityTransform::SimilarityTransform(double scale_, std::array<double, 2> translation_,
                                         Quaternion rotation_)
    : scale(scale_), translation(translation_), rotation(rotation_) {
    if (!(scale > 0.0)) throw std::invalid_argument("SimilarityTransform: scale must be positive");
    if (!std::isfinite(translation[0]) || !std::isfinite(translation[1])) {
        throw std::invalid_argument("SimilarityTransform: non-finite translation");
    }
}

Vec3 SimilarityTransform::apply(const Vec3& p) const {
    Vec3 r = rotation.rotate(p);
    return {scale * r[0] + translation[0], scale * r[1] + translation[1], scale * r[2]};
}

std::vector<Vec3> apply_similarity(const std::vector<Vec3>& points, const SimilarityTransform& c) {
    std::vector<Vec3> out(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out[i] = c.apply(points[i]);
    return out;
}

Mesh apply_similarity(const Mesh& mesh, const SimilarityTransform& c) {
    Mesh out = mesh;
    out.vertices = apply_similarity(mesh.vertices, c);
    return out;
}

ad::Var apply_similarity(ad::Tape& tape, ad::Var points, const SimilarityTransform& c) {
    const auto& shape = points.shape();
    if (shape.size() != 2 || shape[1] != 3) {
        throw std::invalid_argument("apply_similarity: points must be (n,3)");
    }
    const auto r = c.rotation.rotation_matrix();
    // (s*R)^T folded into one constant so the whole map is a matmul + add.
    std::vector<double> rt(9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rt[static_cast<std::size_t>(i * 3 + j)] = c.scale * r[j][i];
    ad::Var rot = tape.constant(ad::Tensor({3, 3}, rt));
    ad::Var moved = ad::matmul(points, rot);
    ad::Var t = tape.constant(ad::Tensor({3}, {c.translation[0], c.translation[1], 0.0}));
    return ad::add_rowvec(moved, t);
}

// ---- centroid ------------------------------------------------------------------

Vec3 centroid(const Mesh& mesh) {
    if (mesh.vertices.empty()) throw std::invalid_argument("centroid: empty mesh");
    Vec3 c{0.0, 0.0, 0.0};
    for (const Vec3& p : mesh.vertices) c = c + p;
    const double inv = 1.0 / static_cast<double>(mesh.vertices.size());
    return inv * c;
}

ad::Var centroid(ad::Tape& tape, ad::Var vertices) {
    const auto& shape = vertices.shape();
    if (shape.size() != 2 || shape[0] == 0) throw std::invalid_argument("centroid: empty input");
    const std::size_t n = shape[0];
    ad::Var w = tape.constant(ad::Tensor::full({1, n}, 1.0 / static_cast<double>(n)));
    return ad::reshape(ad::matmul(w, vertices), {shape[1]});
}

// ---- OBJ I/O ----------------------------------------------------------------------

Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_obj: cannot open " + path);
    Mesh mesh;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ss >> p[0] >> p[1] >> p[2])) {
                throw std::runtime_error("load_obj: malformed vertex at line " + std::to_string(line_no));
            }
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ss >> tok) {
                // Accept v, v/vt, v//vn, v/vt/vn; only the vertex index matters.
                const std::size_t slash = tok.find('/');
                const std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                int v = 0;
                try {
                    v = std::stoi(head);
                } catch (const std::exception&) {
                    throw std::runtime_error("load_obj: bad face index '" + tok + "' at line " +
                                             std::to_string(line_no));
                }
                if (v < 0) v = static_cast<int>(mesh.vertices.size()) + v + 1;  // negative = relative
                idx.push_back(v - 1);
            }
            if (idx.size() != 3) {
                throw std::runtime_error("load_obj: non-triangular face (" + std::to_string(idx.size()) +
                                         " vertices) at line " + std::to_string(line_no));
            }
            for (int v : idx) {
                if (v < 0 || v >= static_cast<int>(mesh.vertices.size())) {
                    throw std::runtime_error("load_obj: face index out of range at line " +
                                             std::to_string(line_no));
                }
            }
            mesh.faces.push_back({idx[0], idx[1], idx[2]});
        }
        // All other records (vn, vt, comments, groups) are ignored.
    }
    mesh.validate();
    return mesh;
}

void save_obj(const Mesh& mesh, const std::string& path) {
    mesh.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_obj: cannot open " + path + " for writing");
    char buf[128];
    for (const Vec3& p : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", p[0], p[1], p[2]);
        out << buf;
    }
    for (const auto& f : mesh.faces) {
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    }
    if (!out) throw std::runtime_error("save_obj: write failed for " + path);
}

// ---- primitives ----------------------------------------------------------------------

namespace {

// Grid-subdivided axis-aligned box centered at the origin. Shared face/edge
// vertices are welded through their integer grid coordinates.
Mesh make_box(int res, const Vec3& size) {
    const int n = res;
    Mesh mesh;
    std::map<std::array<int, 3>, int> grid;
    auto vertex_at = [&](int i, int j, int k) {
        auto it = grid.find({i, j, k});
        if (it != grid.end()) return it->second;
        const Vec3 p{size[0] * (static_cast<double>(i) / n - 0.5),
                     size[1] * (static_cast<double>(j) / n - 0.5),
                     size[2] * (static_cast<double>(k) / n - 0.5)};
        const int id = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(p);
        grid[{i, j, k}] = id;
        return id;
    };
    // axis = face normal direction, side = -1/+1; (u, v) walk the face.
    auto emit_face = [&](int axis, int side) {
        const int fixed = side > 0 ? n : 0;
        for (int u = 0; u < n; ++u) {
            for (int v = 0; v < n; ++v) {
                auto ijk = [&](int uu, int vv) {
                    std::array<int, 3> c{};
                    c[static_cast<std::size_t>(axis)] = fixed;
                    c[static_cast<std::size_t>((axis + 1) % 3)] = uu;
                    c[static_cast<std::size_t>((axis + 2) % 3)] = vv;
                    return vertex_at(c[0], c[1], c[2]);
                };
                const int a = ijk(u, v), b = ijk(u + 1, v), c = ijk(u + 1, v + 1), d = ijk(u, v + 1);
                if (side > 0) {
                    mesh.faces.push_back({a, b, c});
                    mesh.faces.push_back({a, c, d});
                } else {
                    mesh.faces.push_back({a, c, b});
                    mesh.faces.push_back({a, d, c});
                }
            }
        }
    };
    for (int axis = 0; axis < 3; ++axis) {
        emit_face(axis, +1);
        emit_face(axis, -1);
    }
    return mesh;
}

Mesh make_sphere(int res, double radius) {
    // UV sphere: res segments around, res stacks pole to pole.
    const int seg = res, stacks = res;
    Mesh mesh;
    mesh.vertices.push_back({0.0, 0.0, radius});  // north pole
    for (int i = 1; i < stacks; ++i) {
        const double phi = M_PI * static_cast<double>(i) / stacks;
        for (int j = 0; j < seg; ++j) {
            const double th = 2.0 * M_PI * static_cast<double>(j) / seg;
            mesh.vertices.push_back({radius * std::sin(phi) * std::cos(th),
                                     radius * std::sin(phi) * std::sin(th), radius * std::cos(phi)});
        }
    }
    mesh.vertices.push_back({0.0, 0.0, -radius});  // south pole
    const int south = static_cast<int>(mesh.vertices.size()) - 1;
    auto ring = [&](int i, int j) { return 1 + (i - 1) * seg + (j % seg); };
    for (int j = 0; j < seg; ++j) mesh.faces.push_back({0, ring(1, j), ring(1, j + 1)});
    for (int i = 1; i < stacks - 1; ++i) {
        for (int j = 0; j < seg; ++j) {
            const int a = ring(i, j), b = ring(i, j + 1), c = ring(i + 1, j + 1), d = ring(i + 1, j);
            mesh.faces.push_back({a, d, c});
            mesh.faces.push_back({a, c, b});
        }
    }
    for (int j = 0; j < seg; ++j) mesh.faces.push_back({south, ring(stacks - 1, j + 1), ring(stacks - 1, j)});
    return mesh;
}

Mesh make_cylinder(int res, double radius, double height) {
    const int seg = res;
    const double hz = 0.5 * height;
    Mesh mesh;
    for (int j = 0; j < seg; ++j) {
        const double th = 2.0 * M_PI * static_cast<double>(j) / seg;
        mesh.vertices.push_back({radius * std::cos(th), radius * std::sin(th), hz});
    }
    for (int j = 0; j < seg; ++j) {
        const double th = 2.0 * M_PI * static_cast<double>(j) / seg;
        mesh.vertices.push_back({radius * std::cos(th), radius * std::sin(th), -hz});
    }
    const int top_c = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back({0.0, 0.0, hz});
    const int bot_c = top_c + 1;
    mesh.vertices.push_back({0.0, 0.0, -hz});
    auto top = [&](int j) { return j % seg; };
    auto bot = [&](int j) { return seg + (j % seg); };
    for (int j = 0; j < seg; ++j) {
        mesh.faces.push_back({top(j), bot(j), bot(j + 1)});
        mesh.faces.push_back({top(j), bot(j + 1), top(j + 1)});
        mesh.faces.push_back({top_c, top(j), top(j + 1)});
        mesh.faces.push_back({bot_c, bot(j + 1), bot(j)});
    }
    return mesh;
}

}  // namespace

Mesh make_primitive(PrimitiveKind kind, int resolution, const Vec3& size) {
    for (double s : size) {
        if (!(s > 0.0)) throw std::invalid_argument("make_primitive: sizes must be positive");
    }
    Mesh mesh;
    switch (kind) {
        case PrimitiveKind::Box:
            if (resolution < 1) throw std::invalid_argument("make_primitive: box resolution >= 1");
            mesh = make_box(resolution, size);
            break;
        case PrimitiveKind::Sphere:
            if (resolution < 3) throw std::invalid_argument("make_primitive: sphere resolution >= 3");
            mesh = make_sphere(resolution, size[0]);
            break;
        case PrimitiveKind::Cylinder:
            if (resolution < 3) throw std::invalid_argument("make_primitive: cylinder resolution >= 3");
            mesh = make_cylinder(resolution, size[0], size[1]);
            break;
    }
    mesh.validate();
    return mesh;
}

// ---- tensor bridges ----------------------------------------------------------------

ad::Tensor vertices_tensor(const Mesh& mesh) {
    std::vector<double> data;
    data.reserve(mesh.vertices.size() * 3);
    for (const Vec3& p : mesh.vertices) {
        data.push_back(p[0]);
        data.push_back(p[1]);
        data.push_back(p[2]);
    }
    return ad::Tensor({mesh.vertices.size(), 3}, std::move(data));
}

std::vector<Vec3> tensor_vertices(const ad::Tensor& t) {
    if (t.rank() != 2 || t.shape()[1] != 3) {
        throw std::invalid_argument("tensor_vertices: expected (n,3) tensor");
    }
    std::vector<Vec3> out(t.shape()[0]);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {t[i * 3], t[i * 3 + 1], t[i * 3 + 2]};
    return out;
}

}  // namespace regrasp::geom
