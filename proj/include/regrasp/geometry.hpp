#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "regrasp/autodiff.hpp"

namespace regrasp::geom {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
double norm(const Vec3& a);
double dot(const Vec3& a, const Vec3& b);
Vec3 cross(const Vec3& a, const Vec3& b);

/// Triangle mesh: V x 3 vertices, F x 3 vertex-index faces. Vertices must be
/// finite, face indices in range, and no face may repeat a vertex.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }

    void validate() const;  // throws on any invariant violation
};

/// Unit quaternion, w-first storage. Normalized at construction and
/// canonicalized to w >= 0 (removes the double-cover sign ambiguity).
struct Quaternion {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    Quaternion() = default;
    Quaternion(double w_, double x_, double y_, double z_);

    static Quaternion identity() { return {}; }
    static Quaternion from_axis_angle(const Vec3& axis, double angle);

    std::array<std::array<double, 3>, 3> rotation_matrix() const;
    Vec3 rotate(const Vec3& p) const;
};

/// Seven-scalar placement: 1 scale, 2 translation (x, y), 4 quaternion.
/// Application order is rotate, then scale, then translate; z is untouched
/// by the translation.
struct SimilarityTransform {
    double scale = 1.0;
    std::array<double, 2> translation{0.0, 0.0};
    Quaternion rotation;

    SimilarityTransform() = default;
    SimilarityTransform(double scale_, std::array<double, 2> translation_, Quaternion rotation_);

    static SimilarityTransform identity() { return {}; }

    Vec3 apply(const Vec3& p) const;
};

std::vector<Vec3> apply_similarity(const std::vector<Vec3>& points, const SimilarityTransform& c);
Mesh apply_similarity(const Mesh& mesh, const SimilarityTransform& c);

/// Tape form of the similarity map: points is (n,3); returns (n,3).
ad::Var apply_similarity(ad::Tape& tape, ad::Var points, const SimilarityTransform& c);

Vec3 centroid(const Mesh& mesh);
ad::Var centroid(ad::Tape& tape, ad::Var vertices);  // (n,3) -> (3)

// OBJ I/O: ASCII, triangulated, `v`/`f` records; `f` entries may carry
// `v/vt/vn` but only the vertex index is used.
Mesh load_obj(const std::string& path);
void save_obj(const Mesh& mesh, const std::string& path);

enum class PrimitiveKind { Box, Sphere, Cylinder };

/// Watertight, outward-oriented primitives. `size`: box edge lengths;
/// sphere (radius, -, -); cylinder (radius, height, -). `resolution` is the
/// tessellation level (>= 1 for box, >= 3 for sphere/cylinder rings).
Mesh make_primitive(PrimitiveKind kind, int resolution, const Vec3& size);

// Tensor bridges.
ad::Tensor vertices_tensor(const Mesh& mesh);
std::vector<Vec3> tensor_vertices(const ad::Tensor& t);

}  // namespace regrasp::geom
