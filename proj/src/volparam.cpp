#include "diffeo/volparam.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>
#include <string>

#include <Eigen/LU>
#include <nlohmann/json.hpp>

#include "diffeo/errors.hpp"
#include "diffeo/io.hpp"
#include "diffeo/rng.hpp"

namespace diffeo {

namespace {

void check_axis(const std::vector<double>& axis, const char* what) {
    if (axis.size() < 2) fail(ErrorCode::InvalidInput, std::string(what) + " axis needs at least 2 nodes");
    for (std::size_t i = 1; i < axis.size(); ++i)
        if (!(axis[i] > axis[i - 1])) fail(ErrorCode::InvalidInput, std::string(what) + " axis must increase strictly");
}

// Cell index k and local coordinate t in [0, 1] with constant extrapolation.
std::pair<std::size_t, double> bracket(const std::vector<double>& axis, double x) {
    if (x <= axis.front()) return {0, 0.0};
    if (x >= axis.back()) return {axis.size() - 2, 1.0};
    const auto it = std::upper_bound(axis.begin(), axis.end(), x);
    const auto k = static_cast<std::size_t>(it - axis.begin()) - 1;
    return {k, (x - axis[k]) / (axis[k + 1] - axis[k])};
}

bool inside_axis(const std::vector<double>& axis, double x) { return x > axis.front() && x < axis.back(); }

std::string where(const Vec3& p) {
    std::ostringstream ss;
    ss << "(" << p.x() << ", " << p.y() << ", " << p.z() << ")";
    return ss.str();
}

struct Gaps {
    double side;   // L - R
    double depth;  // T - B
};

Gaps gaps_at(const PartSurfaces& s, double x, double y, const Vec3& p) {
    const Gaps g{s.left(x) - s.right(x), s.top(x, y) - s.bottom(x, y)};
    if (!(g.side > 1e-9)) fail(ErrorCode::DegenerateGap, "L - R = " + std::to_string(g.side) + " at " + where(p));
    if (!(g.depth > 1e-9)) fail(ErrorCode::DegenerateGap, "T - B = " + std::to_string(g.depth) + " at " + where(p));
    return g;
}

}  // namespace

Profile1D::Profile1D(std::vector<double> axis, std::vector<double> values)
    : axis_(std::move(axis)), values_(std::move(values)) {
    check_axis(axis_, "profile");
    if (values_.size() != axis_.size()) fail(ErrorCode::ShapeMismatch, "profile values do not match axis");
}

Profile1D Profile1D::constant(double value, double x0, double x1) { return Profile1D({x0, x1}, {value, value}); }

double Profile1D::operator()(double x) const {
    const auto [k, t] = bracket(axis_, x);
    return (1 - t) * values_[k] + t * values_[k + 1];
}

double Profile1D::derivative(double x) const {
    if (!inside_axis(axis_, x)) return 0.0;
    const auto [k, t] = bracket(axis_, x);
    return (values_[k + 1] - values_[k]) / (axis_[k + 1] - axis_[k]);
}

HeightField2D::HeightField2D(std::vector<double> x_axis, std::vector<double> y_axis, std::vector<double> values)
    : x_(std::move(x_axis)), y_(std::move(y_axis)), values_(std::move(values)) {
    check_axis(x_, "height field x");
    check_axis(y_, "height field y");
    if (values_.size() != x_.size() * y_.size()) fail(ErrorCode::ShapeMismatch, "height field values do not match grid");
}

HeightField2D HeightField2D::constant(double value, double x0, double x1, double y0, double y1) {
    return HeightField2D({x0, x1}, {y0, y1}, {value, value, value, value});
}

double HeightField2D::operator()(double x, double y) const {
    const auto [i, s] = bracket(x_, x);
    const auto [j, t] = bracket(y_, y);
    const std::size_t nx = x_.size();
    const double v00 = values_[i + nx * j], v10 = values_[i + 1 + nx * j];
    const double v01 = values_[i + nx * (j + 1)], v11 = values_[i + 1 + nx * (j + 1)];
    return (1 - t) * ((1 - s) * v00 + s * v10) + t * ((1 - s) * v01 + s * v11);
}

Eigen::Vector2d HeightField2D::gradient(double x, double y) const {
    const auto [i, s] = bracket(x_, x);
    const auto [j, t] = bracket(y_, y);
    const std::size_t nx = x_.size();
    const double v00 = values_[i + nx * j], v10 = values_[i + 1 + nx * j];
    const double v01 = values_[i + nx * (j + 1)], v11 = values_[i + 1 + nx * (j + 1)];
    const double dx = inside_axis(x_, x) ? ((1 - t) * (v10 - v00) + t * (v11 - v01)) / (x_[i + 1] - x_[i]) : 0.0;
    const double dy = inside_axis(y_, y) ? ((1 - s) * (v01 - v00) + s * (v11 - v10)) / (y_[j + 1] - y_[j]) : 0.0;
    return {dx, dy};
}

Vec3 volume_parameterize(const PartSurfaces& s, const Vec3& p) {
    const double x = p.x(), y = p.y(), z = p.z();
    const Gaps g = gaps_at(s, x, y, p);
    return {x, s.box.y() * (y - s.right(x)) / g.side, s.box.z() * (z - s.bottom(x, y)) / g.depth};
}

Vec3 inverse_parameterize(const PartSurfaces& s, const Vec3& q) {
    const double x = q.x();
    const double side = s.left(x) - s.right(x);
    if (!(side > 1e-9)) fail(ErrorCode::DegenerateGap, "L - R = " + std::to_string(side) + " at u = " + std::to_string(x));
    const double y = s.right(x) + q.y() * side / s.box.y();
    const Gaps g = gaps_at(s, x, y, {x, y, 0.0});
    return {x, y, s.bottom(x, y) + q.z() * g.depth / s.box.z()};
}

Mat3 jacobian(const PartSurfaces& s, const Vec3& p) {
    const double x = p.x(), y = p.y(), z = p.z();
    const Gaps g = gaps_at(s, x, y, p);
    const double r = s.right(x), dr = s.right.derivative(x), dl = s.left.derivative(x);
    const double b = s.bottom(x, y);
    const Eigen::Vector2d gb = s.bottom.gradient(x, y), gt = s.top.gradient(x, y);
    Mat3 j = Mat3::Zero();
    j(0, 0) = 1.0;
    j(1, 0) = s.box.y() * (-dr * g.side - (y - r) * (dl - dr)) / (g.side * g.side);
    j(1, 1) = s.box.y() / g.side;
    j(2, 0) = s.box.z() * (-gb.x() * g.depth - (z - b) * (gt.x() - gb.x())) / (g.depth * g.depth);
    j(2, 1) = s.box.z() * (-gb.y() * g.depth - (z - b) * (gt.y() - gb.y())) / (g.depth * g.depth);
    j(2, 2) = s.box.z() / g.depth;
    return j;
}

double jacobian_det(const PartSurfaces& s, const Vec3& p) {
    const Gaps g = gaps_at(s, p.x(), p.y(), p);
    return (s.box.y() / g.side) * (s.box.z() / g.depth);
}

void check_surfaces(const PartSurfaces& s) {
    std::vector<double> xs = s.top.x_axis();
    xs.insert(xs.end(), s.bottom.x_axis().begin(), s.bottom.x_axis().end());
    xs.insert(xs.end(), s.left.axis().begin(), s.left.axis().end());
    xs.insert(xs.end(), s.right.axis().begin(), s.right.axis().end());
    std::vector<double> ys = s.top.y_axis();
    ys.insert(ys.end(), s.bottom.y_axis().begin(), s.bottom.y_axis().end());
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    ys.erase(std::unique(ys.begin(), ys.end()), ys.end());
    for (double x : xs)
        for (double y : ys) (void)gaps_at(s, x, y, {x, y, 0.0});
}

VolparamReport certify_volume_map(const PartSurfaces& s, std::size_t n, std::uint64_t seed) {
    check_surfaces(s);
    const double x0 = std::max(s.top.x_axis().front(), s.left.axis().front());
    const double x1 = std::min(s.top.x_axis().back(), s.left.axis().back());

    std::vector<Vec3> shared_pts;
    Rng rng(derive_seed(seed, "volparam"));
    for (std::size_t i = 0; i < n; ++i)
        shared_pts.emplace_back(rng.uniform(x0, x1), rng.uniform(0.0, s.box.y()), rng.uniform(0.0, s.box.z()));
    for (double x : s.top.x_axis())
        for (double y : s.top.y_axis()) {
            if (x < x0 || x > x1 || y < s.right(x) || y > s.left(x)) continue;
            const double v = s.box.y() * (y - s.right(x)) / (s.left(x) - s.right(x));
            shared_pts.emplace_back(x, v, 0.5 * s.box.z());
        }

    VolparamReport rep;
    rep.samples = shared_pts.size();
    rep.min_det = std::numeric_limits<double>::infinity();
    rep.max_det = -std::numeric_limits<double>::infinity();
    const Vec3 step = 1e-6 * s.box;
    for (const auto& q : shared_pts) {
        const Vec3 p = inverse_parameterize(s, q);
        const Vec3 back = volume_parameterize(s, p);
        rep.max_roundtrip_error = std::max(rep.max_roundtrip_error, (back - q).cwiseQuotient(s.box).cwiseAbs().maxCoeff());

        const double det = jacobian_det(s, p);
        if (det < rep.min_det) {
            rep.min_det = det;
            rep.min_det_at = p;
        }
        if (det > rep.max_det) {
            rep.max_det = det;
            rep.max_det_at = p;
        }
        Mat3 fd;
        for (int c = 0; c < 3; ++c) {
            Vec3 e = Vec3::Zero();
            e[c] = step[c];
            fd.col(c) = (volume_parameterize(s, p + e) - volume_parameterize(s, p - e)) / (2 * step[c]);
        }
        rep.max_fd_rel_error = std::max(rep.max_fd_rel_error, std::abs(fd.determinant() - det) / std::abs(det));
    }
    return rep;
}

void write_surfaces(const std::filesystem::path& path, const PartSurfaces& s) {
    nlohmann::json header = {
        {"format", "diffeo-surfaces v1"},
        {"box", {s.box.x(), s.box.y(), s.box.z()}},
        {"top", {{"x", s.top.x_axis()}, {"y", s.top.y_axis()}}},
        {"bottom", {{"x", s.bottom.x_axis()}, {"y", s.bottom.y_axis()}}},
        {"left", {{"x", s.left.axis()}}},
        {"right", {{"x", s.right.axis()}}},
        {"blocks", {"top", "bottom", "left", "right"}},
        {"dtype", "float32 little-endian, row-major with x fastest"},
    };
    std::string out = header.dump() + "\n";
    std::vector<double> all;
    for (const auto* v : {&s.top.values(), &s.bottom.values(), &s.left.values(), &s.right.values()})
        all.insert(all.end(), v->begin(), v->end());
    for (double v : all) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        char b[4];
        std::memcpy(b, &bits, 4);
        out.append(b, 4);
    }
    io::write_text(path, out);
}

PartSurfaces read_surfaces(const std::filesystem::path& path) {
    const std::string text = io::read_text(path);
    const auto nl = text.find('\n');
    if (nl == std::string::npos) fail(ErrorCode::Io, "surface file has no header line");
    const auto header = nlohmann::json::parse(text.substr(0, nl));
    std::size_t offset = nl + 1;
    const auto block = [&](std::size_t count) {
        if (offset + 4 * count > text.size()) fail(ErrorCode::Io, "surface file is truncated");
        std::vector<double> v(count);
        for (std::size_t i = 0; i < count; ++i) {
            std::uint32_t bits;
            std::memcpy(&bits, text.data() + offset + 4 * i, 4);
            if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
            v[i] = std::bit_cast<float>(bits);
        }
        offset += 4 * count;
        return v;
    };
    PartSurfaces s;
    const auto& box = header.at("box");
    s.box = {box[0].get<double>(), box[1].get<double>(), box[2].get<double>()};
    for (const char* name : {"top", "bottom"}) {
        auto x = header.at(name).at("x").get<std::vector<double>>();
        auto y = header.at(name).at("y").get<std::vector<double>>();
        auto vals = block(x.size() * y.size());
        (std::string(name) == "top" ? s.top : s.bottom) = HeightField2D(std::move(x), std::move(y), std::move(vals));
    }
    for (const char* name : {"left", "right"}) {
        auto x = header.at(name).at("x").get<std::vector<double>>();
        auto vals = block(x.size());
        (std::string(name) == "left" ? s.left : s.right) = Profile1D(std::move(x), std::move(vals));
    }
    if (offset != text.size()) fail(ErrorCode::Io, "trailing bytes in surface file");
    return s;
}

PartSurfaces synthetic_pocket_part(int pockets, double depth, double side_wave, int nx, int ny) {
    PartSurfaces s;
    const double lx = s.box.x(), ly = s.box.y(), lz = s.box.z();
    std::vector<double> xs(static_cast<std::size_t>(nx)), ys(static_cast<std::size_t>(ny));
    for (int i = 0; i < nx; ++i) xs[static_cast<std::size_t>(i)] = lx * i / (nx - 1);
    for (int j = 0; j < ny; ++j) ys[static_cast<std::size_t>(j)] = ly * j / (ny - 1);

    const auto smoothstep = [](double t) {
        t = std::clamp(t, 0.0, 1.0);
        return t * t * (3 - 2 * t);
    };
    const double pitch = lx / pockets;
    const double half_x = 0.35 * pitch, half_y = 0.35 * ly, wall = 0.1 * pitch;
    std::vector<double> top(xs.size() * ys.size());
    for (std::size_t j = 0; j < ys.size(); ++j)
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double k = std::floor(xs[i] / pitch);
            const double cx = (std::min(k, pockets - 1.0) + 0.5) * pitch;
            const double fx = smoothstep((half_x - std::abs(xs[i] - cx)) / wall);
            const double fy = smoothstep((half_y - std::abs(ys[j] - 0.5 * ly)) / wall);
            top[i + xs.size() * j] = lz - depth * fx * fy;
        }
    s.top = HeightField2D(xs, ys, std::move(top));
    s.bottom = HeightField2D::constant(0.0, 0.0, lx, 0.0, ly);
    std::vector<double> left(xs.size()), right(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double t = std::sin(M_PI * xs[i] / lx);
        left[i] = ly - side_wave * t * t;
        right[i] = 0.5 * side_wave * t * t;
    }
    s.left = Profile1D(xs, std::move(left));
    s.right = Profile1D(xs, std::move(right));
    return s;
}

}  // namespace diffeo
