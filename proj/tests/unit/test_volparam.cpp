#include <doctest.h>

#include <cmath>
#include <filesystem>

#include <Eigen/LU>

#include "diffeo/errors.hpp"
#include "diffeo/rng.hpp"
#include "diffeo/volparam.hpp"

using namespace diffeo;

namespace {

PartSurfaces flat_block() {
    PartSurfaces s;
    s.top = HeightField2D::constant(30, 0, 600, 0, 240);
    s.bottom = HeightField2D::constant(0, 0, 600, 0, 240);
    s.left = Profile1D::constant(240, 0, 600);
    s.right = Profile1D::constant(0, 0, 600);
    return s;
}

// Part with every surface varying, for Jacobian checks.
PartSurfaces wavy_part() {
    PartSurfaces s = synthetic_pocket_part(3, 20.0, 15.0);
    std::vector<double> xs, ys, bottom;
    for (int i = 0; i <= 30; ++i) xs.push_back(20.0 * i);
    for (int j = 0; j <= 12; ++j) ys.push_back(20.0 * j);
    for (double y : ys)
        for (double x : xs) bottom.push_back(2.0 + 1.5 * std::sin(x / 70.0) * std::cos(y / 40.0));
    s.bottom = HeightField2D(xs, ys, bottom);
    return s;
}

}  // namespace

TEST_SUITE("volparam3d") {

TEST_CASE("profiles and height fields interpolate linearly") {
    const Profile1D p({0, 1, 3}, {0, 2, 0});
    CHECK(p(0.5) == doctest::Approx(1.0));
    CHECK(p(2.0) == doctest::Approx(1.0));
    CHECK(p(-1) == 0.0);
    CHECK(p.derivative(2.0) == doctest::Approx(-1.0));
    const HeightField2D h({0, 1}, {0, 1}, {0, 1, 2, 3});
    CHECK(h(0.5, 0.5) == doctest::Approx(1.5));
    CHECK(h.gradient(0.2, 0.7).x() == doctest::Approx(1.0));
    CHECK(h.gradient(0.2, 0.7).y() == doctest::Approx(2.0));
}

TEST_CASE("flat block maps identically") {
    const PartSurfaces s = flat_block();
    const Vec3 p(10, 20, 5);
    CHECK((volume_parameterize(s, p) - p).norm() < 1e-12);
    CHECK((inverse_parameterize(s, p) - p).norm() < 1e-12);
    CHECK(jacobian_det(s, p) == doctest::Approx(1.0));
}

TEST_CASE("hand-computed values") {
    PartSurfaces s = flat_block();
    s.top = HeightField2D::constant(60, 0, 600, 0, 240);
    CHECK(volume_parameterize(s, Vec3(100, 50, 30)).z() == doctest::Approx(15.0));
    CHECK(jacobian_det(s, Vec3(100, 50, 30)) == doctest::Approx(0.5));
    const PartSurfaces w = wavy_part();
    CHECK(volume_parameterize(w, Vec3(123, 100, w.bottom(123, 100))).z() == doctest::Approx(0.0).epsilon(1e-12));
    const Vec3 top = inverse_parameterize(w, Vec3(250, 90, 30));
    CHECK(top.z() == doctest::Approx(w.top(top.x(), top.y())).epsilon(1e-12));
}

TEST_CASE("analytic Jacobian matches central differences") {
    const PartSurfaces s = wavy_part();
    Rng rng(17);
    for (int k = 0; k < 100; ++k) {
        const Vec3 q(rng.uniform(1, 599), rng.uniform(1, 239), rng.uniform(0.5, 29.5));
        const Vec3 p = inverse_parameterize(s, q);
        const Mat3 J = jacobian(s, p);
        const double det = jacobian_det(s, p);
        CHECK(det > 0);
        CHECK(det == doctest::Approx(J.determinant()).epsilon(1e-12));
        Mat3 fd;
        const Vec3 step = 1e-6 * s.box;
        for (int c = 0; c < 3; ++c) {
            Vec3 e = Vec3::Zero();
            e[c] = step[c];
            fd.col(c) = (volume_parameterize(s, p + e) - volume_parameterize(s, p - e)) / (2 * step[c]);
        }
        CHECK(std::abs(fd.determinant() - det) / det < 1e-6);
        // Upper triangle is structurally zero.
        CHECK(J(0, 1) == 0.0);
        CHECK(J(0, 2) == 0.0);
        CHECK(J(1, 2) == 0.0);
    }
}

TEST_CASE("round trip, monotonicity and boundary adherence") {
    const PartSurfaces s = wavy_part();
    Rng rng(23);
    for (int k = 0; k < 1000; ++k) {
        const Vec3 q(rng.uniform(0, 600), rng.uniform(0, 240), rng.uniform(0, 30));
        const Vec3 back = volume_parameterize(s, inverse_parameterize(s, q));
        CHECK((back - q).cwiseQuotient(s.box).cwiseAbs().maxCoeff() < 1e-10);
    }
    const double x = 310, y = 120;
    double prev = -1;
    for (int k = 0; k <= 20; ++k) {
        const double z = s.bottom(x, y) + (s.top(x, y) - s.bottom(x, y)) * k / 20.0;
        const double w = volume_parameterize(s, Vec3(x, y, z)).z();
        CHECK(w > prev);
        prev = w;
    }
    CHECK(volume_parameterize(s, Vec3(x, s.left(x), 10)).y() == doctest::Approx(240.0));
    CHECK(volume_parameterize(s, Vec3(x, s.right(x), 10)).y() == doctest::Approx(0.0));
    CHECK(volume_parameterize(s, Vec3(x, y, s.top(x, y))).z() == doctest::Approx(30.0));
}

TEST_CASE("pocket dip scales the determinant") {
    const PartSurfaces s = synthetic_pocket_part(2, 24.0);
    const auto r = certify_volume_map(s, 2000, 1);
    CHECK(r.min_det == doctest::Approx(1.0));
    CHECK(r.max_det == doctest::Approx(5.0));  // 240/240 * 30/6
    CHECK(r.max_det_at.z() < 6.0);
    CHECK(r.max_fd_rel_error < 1e-6);
    CHECK(r.max_roundtrip_error < 1e-10);
}

TEST_CASE("degenerate gap is reported") {
    PartSurfaces s = flat_block();
    s.top = HeightField2D({0, 300, 600}, {0, 240}, {30, 0, 30, 30, 0, 30});
    CHECK_THROWS_AS(check_surfaces(s), Error);
    try {
        jacobian_det(s, Vec3(300, 0, 0));
        FAIL("expected DegenerateGap");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::DegenerateGap);
    }
}

TEST_CASE("surface file round trip") {
    const auto path = std::filesystem::temp_directory_path() / "diffeo_surfaces.bin";
    const PartSurfaces s = wavy_part();
    write_surfaces(path, s);
    const PartSurfaces r = read_surfaces(path);
    CHECK(r.top.x_axis() == s.top.x_axis());
    CHECK(r.box == s.box);
    for (std::size_t i = 0; i < s.top.values().size(); ++i)
        CHECK(r.top.values()[i] == static_cast<double>(static_cast<float>(s.top.values()[i])));
    std::filesystem::remove(path);
}

}
