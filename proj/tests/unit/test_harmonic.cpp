#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "diffeo/darcy.hpp"
#include "diffeo/errors.hpp"
#include "diffeo/harmonic_map.hpp"
#include "diffeo/mesher.hpp"
#include "diffeo/rng.hpp"

using namespace diffeo;

TEST_SUITE("harmonic_map") {

TEST_CASE("arc-length boundary placement") {
    const SharedDomain2D unit;
    SUBCASE("fraction 0.125 lands mid bottom edge") {
        const std::vector<Vec2> loop = {{0, 0}, {1, 0}, {2, 0}, {2, 2}, {0, 2}};
        const auto b = parameterize_boundary(loop, unit);
        CHECK((b[1] - Vec2(0.5, 0)).norm() < 1e-15);
        CHECK((b[0] - Vec2(0, 0)).norm() < 1e-15);
    }
    SUBCASE("regular pentagon gives equal fractions") {
        std::vector<Vec2> loop;
        for (int k = 0; k < 5; ++k) {
            const double t = -M_PI / 2 + 2 * M_PI * k / 5;
            loop.emplace_back(std::cos(t), std::sin(t));
        }
        const auto b = parameterize_boundary(loop, unit);
        for (int k = 0; k < 5; ++k) CHECK((b[static_cast<std::size_t>(k)] - unit.point_at(4.0 * k / 5)).norm() < 1e-12);
    }
    SUBCASE("zero perimeter") {
        const std::vector<Vec2> loop(3, Vec2(1, 1));
        CHECK_THROWS_AS(parameterize_boundary(loop, unit), Error);
    }
}

TEST_CASE("corner anchors put a mesh vertex on every rectangle corner") {
    const std::vector<Vec2> pentagon = {{0, 0}, {10, 0}, {9.3, 4.4}, {4.1, 10}, {1.2, 5.7}};
    const SharedDomain2D shared{0, 1, 0, 1};
    const auto outline = insert_corner_anchors(pentagon, shared);
    CHECK(outline.size() == 8);
    CHECK(polygon_area(outline) == doctest::Approx(polygon_area(pentagon)).epsilon(1e-12));
    const MappedMesh m = harmonic_map(mesh_polygon(outline, 0.4), shared);
    for (const Vec2 corner : {Vec2(0, 0), Vec2(1, 0), Vec2(1, 1), Vec2(0, 1)}) {
        bool hit = false;
        for (const auto& f : m.shared_coords) hit = hit || f == corner;
        CHECK(hit);
    }
}

TEST_CASE("identity map is reproduced") {
    // Chord splits near the corners leave a few negative weights, so linear
    // precision needs them unclamped.
    const TriMesh mesh = mesh_polygon(std::vector<Vec2>{{0, 0}, {1, 0}, {1, 1}, {0, 1}}, 0.1);
    HarmonicOptions opts;
    opts.mode = WeightMode::Raw;
    const MappedMesh m = harmonic_map(mesh, SharedDomain2D{}, opts);
    double worst = 0;
    for (std::size_t v = 0; v < mesh.num_vertices(); ++v)
        worst = std::max(worst, (m.shared_coords[v] - mesh.vertices()[v]).norm());
    CHECK(worst < 1e-8);
}

TEST_CASE("single interior vertex with equal weights goes to the centre") {
    const TriMesh mesh = build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}, {0.3, 0.7}},
                                    {{0, 1, 4}, {1, 2, 4}, {2, 3, 4}, {3, 0, 4}});
    const EdgeWeightTable ones{std::vector<double>(mesh.edges().size(), 1.0)};
    const MappedMesh m = solve_harmonic(mesh, ones, SharedDomain2D{});
    CHECK((m.shared_coords[4] - Vec2(0.5, 0.5)).norm() < 1e-14);
}

TEST_CASE("generated pentagons map without folds") {
    const SharedDomain2D shared;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto poly = sample_polygon(PolygonFamily::Pentagon, derive_seed(seed, "mesh"));
        const TriMesh mesh = mesh_polygon(insert_corner_anchors(poly.vertices, shared), 0.3);
        const auto w = preprocess_weights(cotangent_weights(mesh), WeightMode::Clamped);
        const MappedMesh m = solve_harmonic(mesh, w, shared);
        const auto report = validate_bijectivity(m);
        CHECK(report.ok);
        CHECK(report.fold_count == 0);
        CHECK(report.min_mapped_area > 0);
        CHECK(harmonic_residual(mesh, w, m.shared_coords, shared.diameter()) < 1e-8);
        // Boundary vertices sit exactly on their prescribed positions.
        const auto b = parameterize_boundary([&] {
            std::vector<Vec2> loop;
            for (int v : mesh.boundary_loop()) loop.push_back(mesh.vertices()[static_cast<std::size_t>(v)]);
            return loop;
        }(), shared);
        for (std::size_t k = 0; k < b.size(); ++k)
            CHECK(m.shared_coords[static_cast<std::size_t>(mesh.boundary_loop()[k])] == b[k]);
    }
}

TEST_CASE("raw weights also solve") {
    const TriMesh mesh = mesh_polygon(std::vector<Vec2>{{0, 0}, {10, 0}, {9, 5}, {5, 10}, {1, 5}}, 0.5);
    HarmonicOptions opts;
    opts.mode = WeightMode::Raw;
    const MappedMesh m = harmonic_map(mesh, SharedDomain2D{}, opts);
    CHECK(validate_bijectivity(m).ok);
}

TEST_CASE("validate_bijectivity counts folds") {
    const TriMesh mesh = build_mesh({{0, 0}, {1, 0}, {1, 1}, {0, 1}}, {{0, 1, 2}, {0, 2, 3}});
    MappedMesh m{mesh, {{0, 0}, {0, 1}, {1, 1}, {1, 0}}};  // mirrored, both triangles flip
    const auto r = validate_bijectivity(m);
    CHECK_FALSE(r.ok);
    CHECK(r.fold_count == 2);
}

TEST_CASE("cotangent Laplacian has linear precision") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<Vec2> poly;
        for (int k = 0; k < 7; ++k) {
            const double t = 2 * M_PI * k / 7;
            const double r = rng.uniform(2.0, 3.0);
            poly.emplace_back(r * std::cos(t), r * std::sin(t));
        }
        const TriMesh mesh = mesh_polygon(poly, rng.uniform(0.2, 0.5));
        const auto w = cotangent_weights(mesh);
        std::vector<Vec2> affine;
        for (const auto& p : mesh.vertices()) affine.emplace_back(1.5 * p.x() - 0.3 * p.y() + 2, 0.7 * p.x() + 2.1 * p.y() - 1);
        Vec2 lo = affine[0], hi = affine[0];
        for (const auto& p : affine) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        CHECK(harmonic_residual(mesh, w, affine, (hi - lo).norm()) < 1e-9);
    }
}

TEST_CASE("mapped mesh persistence round trip") {
    const auto dir = std::filesystem::temp_directory_path() / "diffeo_harmonic_rt";
    std::filesystem::create_directories(dir);
    const MappedMesh m = harmonic_map(mesh_polygon(std::vector<Vec2>{{0, 0}, {2, 0}, {2, 1}, {0, 1}}, 0.3), SharedDomain2D{});
    save_mapped_mesh(dir / "m.off", dir / "m.coords", m);
    const MappedMesh r = load_mapped_mesh(dir / "m.off", dir / "m.coords");
    CHECK(r.mesh.vertices() == m.mesh.vertices());
    CHECK(r.shared_coords == m.shared_coords);
    std::filesystem::remove_all(dir);
}

}
