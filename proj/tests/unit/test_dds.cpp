#include <doctest.h>

#include <cmath>

#include "diffeo/dds.hpp"
#include "diffeo/errors.hpp"
#include "diffeo/rng.hpp"

using namespace diffeo;

namespace {

constexpr double two_pi = 6.283185307179586;

GeometryImage random_image(Rng& rng, int rows, int cols, int channels) {
    GeometryImage img{rows, cols, channels, {}};
    for (std::size_t k = 0; k < img.pixels() * static_cast<std::size_t>(channels); ++k) img.data.push_back(rng.normal());
    return img;
}

GeometryImage pattern(int n, const std::function<double(double, double, int)>& f) {
    GeometryImage img{n, n, 2, {}};
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            for (int ch = 0; ch < 2; ++ch) img.data.push_back(f(double(c) / n, double(r) / n, ch));
    return img;
}

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidInput;
}

}  // namespace

TEST_SUITE("dds_metric") {

TEST_CASE("self, mirror and orthogonal images") {
    Rng rng(1);
    const GeometryImage a = random_image(rng, 6, 5, 2);
    CHECK(ncc(a, a) == doctest::Approx(1.0).epsilon(1e-14));

    GeometryImage mirror = a;
    for (std::size_t k = 0; k < a.data.size(); ++k) mirror.data[k] = 7.0 - a.data[k];
    CHECK(ncc(a, mirror) == doctest::Approx(-1.0).epsilon(1e-14));

    const auto s = pattern(16, [](double x, double, int ch) { return ch == 0 ? std::sin(two_pi * x) : 0.0; });
    const auto c = pattern(16, [](double x, double, int ch) { return ch == 0 ? std::cos(two_pi * x) : 0.0; });
    CHECK(std::abs(ncc(s, c)) < 1e-10);
}

TEST_CASE("single normalization over channels differs from the per-channel average") {
    // Channel 0 identical, channel 1 anti-correlated with a larger amplitude.
    const auto a = pattern(8, [](double x, double y, int ch) { return ch == 0 ? x : 3 * y; });
    const auto b = pattern(8, [](double x, double y, int ch) { return ch == 0 ? x : -3 * y; });
    const double joint = ncc(a, b);
    const double averaged = ncc(a, b, NccOptions{true});
    CHECK(averaged == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(joint == doctest::Approx((1.0 - 9.0) / 10.0).epsilon(1e-12));
}

TEST_CASE("properties on random pairs") {
    Rng rng(42);
    for (int k = 0; k < 200; ++k) {
        const GeometryImage a = random_image(rng, 4 + static_cast<int>(rng.below(4)), 5, 2);
        GeometryImage b = random_image(rng, a.rows, a.cols, 2);
        const auto r = ncc_detailed(a, b);
        CHECK(std::abs(r.value - ncc(b, a)) < 1e-12);
        CHECK(r.value >= -1.0);
        CHECK(r.value <= 1.0);
        CHECK(std::abs(r.unclamped - r.value) < 1e-12);
        // Per-channel shifts and one positive scale leave NCC unchanged.
        GeometryImage shifted = b;
        for (std::size_t p = 0; p < b.pixels(); ++p) {
            shifted.data[2 * p] = 2.5 * b.data[2 * p] + 4.0;
            shifted.data[2 * p + 1] = 2.5 * b.data[2 * p + 1] - 9.0;
        }
        CHECK(std::abs(ncc(a, shifted) - r.value) < 1e-10);
    }
}

TEST_CASE("errors") {
    const GeometryImage flat{3, 3, 2, std::vector<double>(18, 1.5)};
    Rng rng(3);
    const GeometryImage a = random_image(rng, 3, 3, 2);
    CHECK(code_of([&] { ncc(flat, a); }) == ErrorCode::ZeroVariance);
    CHECK(code_of([&] { ncc(a, random_image(rng, 3, 4, 2)); }) == ErrorCode::ShapeMismatch);
    CHECK(code_of([&] { dds(a, {}); }) == ErrorCode::EmptyTrainingSet);
    const std::vector<double> two = {1, 2};
    CHECK(code_of([&] { correlation_report(two, two); }) == ErrorCode::InsufficientData);
}

TEST_CASE("DDS averages NCC") {
    Rng rng(5);
    const GeometryImage a = random_image(rng, 5, 5, 2);
    CHECK(dds(a, std::vector{a}) == doctest::Approx(1.0));
    GeometryImage mirror = a;
    for (auto& v : mirror.data) v = -v;
    CHECK(std::abs(dds(a, std::vector{a, mirror})) < 1e-14);
}

TEST_CASE("correlation report") {
    const std::vector<double> d = {0.9, 0.5, 0.7, 0.95, 0.6};
    std::vector<double> e;
    for (double v : d) e.push_back(0.4 - 0.3 * v);
    const auto r = correlation_report(d, e);
    CHECK(r.pearson_r == doctest::Approx(-1.0));
    CHECK(r.spearman_rho == doctest::Approx(-1.0));
    CHECK(r.table.front().dds == 0.5);
    CHECK(r.table.back().dds == 0.95);

    const std::vector<double> flat(5, 0.1);
    const auto f = correlation_report(d, flat);
    CHECK(f.pearson_degenerate);
    CHECK(f.pearson_r == 0.0);

    // Monotone but non-linear: ranks agree perfectly.
    std::vector<double> m;
    for (double v : d) m.push_back(std::exp(-10 * v));
    CHECK(correlation_report(d, m).spearman_rho == doctest::Approx(-1.0));
}

TEST_CASE("average ranks share ties") {
    const std::vector<double> v = {3, 1, 3, 2};
    CHECK(average_ranks(v) == std::vector<double>{3.5, 1, 3.5, 2});
}

}
