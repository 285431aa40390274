#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

namespace diffeo {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Piecewise-linear profile over a strictly increasing axis; constant
/// extrapolation outside it.
class Profile1D {
public:
    Profile1D() = default;
    Profile1D(std::vector<double> axis, std::vector<double> values);
    static Profile1D constant(double value, double x0 = 0.0, double x1 = 1.0);

    double operator()(double x) const;
    double derivative(double x) const;

    const std::vector<double>& axis() const { return axis_; }
    const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> axis_;
    std::vector<double> values_;
};

/// Piecewise-bilinear height field on a tensor grid; values[i + nx * j].
class HeightField2D {
public:
    HeightField2D() = default;
    HeightField2D(std::vector<double> x_axis, std::vector<double> y_axis, std::vector<double> values);
    static HeightField2D constant(double value, double x0 = 0.0, double x1 = 1.0, double y0 = 0.0, double y1 = 1.0);

    double operator()(double x, double y) const;
    /// (d/dx, d/dy) of the bilinear patch containing (x, y).
    Eigen::Vector2d gradient(double x, double y) const;

    const std::vector<double>& x_axis() const { return x_; }
    const std::vector<double>& y_axis() const { return y_; }
    const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> values_;
};

/// Top T(x, y), bottom B(x, y), left L(x) and right R(x) surfaces of a
/// pocket-type part, and the shared box extents.
struct PartSurfaces {
    HeightField2D top;
    HeightField2D bottom;
    Profile1D left;
    Profile1D right;
    Vec3 box{600.0, 240.0, 30.0};
};

/// (u, v, w) = (x, s_y (y - R) / (L - R), s_z (z - B) / (T - B)).
Vec3 volume_parameterize(const PartSurfaces& s, const Vec3& p);

/// Closed-form inverse of volume_parameterize.
Vec3 inverse_parameterize(const PartSurfaces& s, const Vec3& q);

/// Analytic Jacobian (lower triangular) of volume_parameterize.
Mat3 jacobian(const PartSurfaces& s, const Vec3& p);

/// det = (s_y / (L - R)) * (s_z / (T - B)).
double jacobian_det(const PartSurfaces& s, const Vec3& p);

struct VolparamReport {
    std::size_t samples = 0;
    double min_det = 0.0;
    double max_det = 0.0;
    Vec3 min_det_at = Vec3::Zero();
    Vec3 max_det_at = Vec3::Zero();
    double max_fd_rel_error = 0.0;   // analytic vs central-difference determinant
    double max_roundtrip_error = 0.0;  // |X(X^-1(q)) - q| / |box|
};

/// Samples `n` points uniformly in the shared box (plus every grid node of
/// the surfaces), maps them into the part, and certifies the map there.
VolparamReport certify_volume_map(const PartSurfaces& s, std::size_t n, std::uint64_t seed);

/// Throws DegenerateGap at the first surface grid node where T - B or L - R <= 1e-9.
void check_surfaces(const PartSurfaces& s);

/// Surface file: one line of JSON header (axis grids, box, block layout)
/// followed by little-endian float32 blocks T, B, L, R.
void write_surfaces(const std::filesystem::path& path, const PartSurfaces& s);
PartSurfaces read_surfaces(const std::filesystem::path& path);

/// Synthetic 600 x 240 x 30 mm part with `pockets` rectangular pockets of
/// the given depth (a smooth-walled dip in the top surface). A non-zero
/// side_wave pinches the side walls inward by up to that many mm mid-length.
PartSurfaces synthetic_pocket_part(int pockets, double depth, double side_wave = 0.0, int nx = 121, int ny = 49);

}  // namespace diffeo
