#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "regrasp/geometry.hpp"
#include "regrasp/rng.hpp"

#include "oracles.hpp"

using namespace regrasp;
using geom::Mesh;
using geom::Vec3;
using geom::operator-;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::size_t unique_edge_count(const Mesh& mesh) {
    std::set<std::array<int, 2>> edges;
    for (const auto& f : mesh.faces) {
        edges.insert({std::min(f[0], f[1]), std::max(f[0], f[1])});
        edges.insert({std::min(f[1], f[2]), std::max(f[1], f[2])});
        edges.insert({std::min(f[0], f[2]), std::max(f[0], f[2])});
    }
    return edges.size();
}

}  // namespace

TEST_CASE("unit cube OBJ fixture") {
    const std::string path = temp_path("regrasp_cube.obj");
    {
        std::ofstream out(path);
        out << "v -0.5 -0.5 -0.5\nv 0.5 -0.5 -0.5\nv 0.5 0.5 -0.5\nv -0.5 0.5 -0.5\n"
               "v -0.5 -0.5 0.5\nv 0.5 -0.5 0.5\nv 0.5 0.5 0.5\nv -0.5 0.5 0.5\n"
               "f 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\n"
               "f 2 3 7\nf 2 7 6\nf 3 4 8\nf 3 8 7\nf 4 1 5\nf 4 5 8\n";
    }
    Mesh mesh = geom::load_obj(path);
    CHECK(mesh.vertex_count() == 8);
    CHECK(mesh.face_count() == 12);
}

TEST_CASE("OBJ round trip") {
    Rng rng(21);
    Mesh mesh = oracles::random_cloud(rng, 100, 2.0);
    for (int i = 0; i + 2 < 100; i += 3) mesh.faces.push_back({i, i + 1, i + 2});
    const std::string path = temp_path("regrasp_roundtrip.obj");
    geom::save_obj(mesh, path);
    Mesh loaded = geom::load_obj(path);
    REQUIRE(loaded.vertex_count() == mesh.vertex_count());
    REQUIRE(loaded.faces == mesh.faces);
    for (std::size_t i = 0; i < mesh.vertex_count(); ++i) {
        for (int c = 0; c < 3; ++c) {
            CHECK(loaded.vertices[i][c] == doctest::Approx(mesh.vertices[i][c]).epsilon(1e-9));
        }
    }
}

TEST_CASE("OBJ quad face rejected with line number") {
    const std::string path = temp_path("regrasp_quad.obj");
    {
        std::ofstream out(path);
        out << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
    }
    try {
        geom::load_obj(path);
        FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("line 5") != std::string::npos);
        CHECK(std::string(e.what()).find("non-triangular") != std::string::npos);
    }
}

TEST_CASE("OBJ face index variants and range errors") {
    const std::string path = temp_path("regrasp_variants.obj");
    {
        std::ofstream out(path);
        out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2/1 3//1\n";
    }
    Mesh mesh = geom::load_obj(path);
    CHECK(mesh.face_count() == 1);

    const std::string bad = temp_path("regrasp_bad_index.obj");
    {
        std::ofstream out(bad);
        out << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
    }
    CHECK_THROWS_WITH_AS(geom::load_obj(bad), doctest::Contains("line 4"), std::runtime_error);
}

TEST_CASE("primitives") {
    Mesh box = geom::make_primitive(geom::PrimitiveKind::Box, 1, {1, 1, 1});
    CHECK(box.vertex_count() == 8);
    CHECK(box.face_count() == 12);

    Mesh sphere = geom::make_primitive(geom::PrimitiveKind::Sphere, 16, {1, 1, 1});
    for (const Vec3& p : sphere.vertices) CHECK(geom::norm(p) == doctest::Approx(1.0).epsilon(1e-9));

    Mesh cyl = geom::make_primitive(geom::PrimitiveKind::Cylinder, 32, {0.5, 2.0, 0.5});
    const Vec3 c = geom::centroid(cyl);
    CHECK(std::fabs(c[0]) < 1e-9);
    CHECK(std::fabs(c[1]) < 1e-9);
    CHECK(std::fabs(c[2]) < 1e-9);

    CHECK_THROWS_AS(geom::make_primitive(geom::PrimitiveKind::Box, 1, {0.0, 1, 1}),
                    std::invalid_argument);
}

TEST_CASE("primitives satisfy the Euler characteristic") {
    for (auto [kind, res] : std::vector<std::pair<geom::PrimitiveKind, int>>{
             {geom::PrimitiveKind::Box, 1},
             {geom::PrimitiveKind::Box, 3},
             {geom::PrimitiveKind::Sphere, 8},
             {geom::PrimitiveKind::Cylinder, 12}}) {
        Mesh mesh = geom::make_primitive(kind, res, {1.0, 1.2, 0.9});
        const long v = static_cast<long>(mesh.vertex_count());
        const long e = static_cast<long>(unique_edge_count(mesh));
        const long f = static_cast<long>(mesh.face_count());
        CHECK(v - e + f == 2);
    }
}

TEST_CASE("centroid") {
    Mesh cube = geom::make_primitive(geom::PrimitiveKind::Box, 1, {1, 1, 1});
    Vec3 c = geom::centroid(cube);
    CHECK(std::fabs(c[0]) < 1e-12);
    CHECK(std::fabs(c[1]) < 1e-12);
    CHECK(std::fabs(c[2]) < 1e-12);

    Mesh moved = cube;
    for (Vec3& p : moved.vertices) p[0] += 1.0;
    c = geom::centroid(moved);
    CHECK(c[0] == doctest::Approx(1.0));
    CHECK(std::fabs(c[1]) < 1e-12);

    Rng rng(2);
    Mesh cloud = oracles::random_cloud(rng, 50);
    const Vec3 mine = geom::centroid(cloud);
    const Vec3 expect = oracles::centroid_bf(cloud);
    for (int k = 0; k < 3; ++k) CHECK(mine[k] == doctest::Approx(expect[k]).epsilon(1e-12));

    Mesh empty;
    CHECK_THROWS_AS(geom::centroid(empty), std::invalid_argument);
}

TEST_CASE("similarity transform basics") {
    geom::SimilarityTransform id;
    const Vec3 p{0.3, -0.7, 1.1};
    const Vec3 q = id.apply(p);
    for (int k = 0; k < 3; ++k) CHECK(q[k] == p[k]);

    geom::SimilarityTransform rot(1.0, {0.0, 0.0},
                                  geom::Quaternion::from_axis_angle({0, 0, 1}, M_PI / 2));
    const Vec3 r = rot.apply({1.0, 0.0, 0.0});
    CHECK(r[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(r[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r[2] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("similarity transform matches the quaternion rotation oracle") {
    Rng rng(33);
    for (int trial = 0; trial < 10; ++trial) {
        geom::Quaternion q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        geom::SimilarityTransform t(rng.uniform(0.2, 3.0), {rng.normal(), rng.normal()}, q);
        for (int i = 0; i < 5; ++i) {
            const Vec3 p{rng.normal(), rng.normal(), rng.normal()};
            const Vec3 mine = t.apply(p);
            const Vec3 rotated = oracles::quat_rotate_bf(q.w, q.x, q.y, q.z, p);
            CHECK(mine[0] == doctest::Approx(t.scale * rotated[0] + t.translation[0]).epsilon(1e-9));
            CHECK(mine[1] == doctest::Approx(t.scale * rotated[1] + t.translation[1]).epsilon(1e-9));
            CHECK(mine[2] == doctest::Approx(t.scale * rotated[2]).epsilon(1e-9));
        }
    }
}

TEST_CASE("similarity preserves pairwise distance ratios") {
    Rng rng(41);
    geom::SimilarityTransform t(1.7, {0.4, -2.0},
                                geom::Quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
    std::vector<Vec3> pts;
    for (int i = 0; i < 8; ++i) pts.push_back({rng.normal(), rng.normal(), rng.normal()});
    const auto moved = geom::apply_similarity(pts, t);
    const double before = geom::norm(pts[0] - pts[1]) / geom::norm(pts[2] - pts[3]);
    const double after = geom::norm(moved[0] - moved[1]) / geom::norm(moved[2] - moved[3]);
    CHECK(after == doctest::Approx(before).epsilon(1e-9));
}

TEST_CASE("centroid commutes with similarity transforms") {
    Rng rng(43);
    Mesh cloud = oracles::random_cloud(rng, 30);
    geom::SimilarityTransform t(0.8, {1.0, 2.0},
                                geom::Quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
    const Vec3 a = geom::centroid(geom::apply_similarity(cloud, t));
    const Vec3 b = t.apply(geom::centroid(cloud));
    for (int k = 0; k < 3; ++k) CHECK(a[k] == doctest::Approx(b[k]).epsilon(1e-9));
}

TEST_CASE("quaternion canonicalization") {
    geom::Quaternion q(-0.5, 0.5, 0.5, 0.5);
    CHECK(q.w >= 0.0);
    CHECK(q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(geom::Quaternion(0, 0, 0, 0), std::invalid_argument);
}

TEST_CASE("tape form of apply_similarity matches the value form") {
    Rng rng(47);
    geom::SimilarityTransform t(1.3, {0.2, -0.4},
                                geom::Quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal()));
    Mesh cloud = oracles::random_cloud(rng, 12);
    ad::Tape tape;
    ad::Tensor out =
        geom::apply_similarity(tape, tape.constant(geom::vertices_tensor(cloud)), t).value();
    const auto expect = geom::apply_similarity(cloud.vertices, t);
    for (std::size_t i = 0; i < cloud.vertex_count(); ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            CHECK(out.at2(i, c) == doctest::Approx(expect[i][c]).epsilon(1e-12));
        }
    }
}
