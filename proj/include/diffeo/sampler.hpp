#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "diffeo/harmonic_map.hpp"

namespace diffeo {

/// Vertex-centred lattice including the boundary, point (i, j) stored at i + rx * j.
std::vector<Vec2> uniform_grid(const SharedDomain2D& shared, int rx, int ry);

/// Barycentric weights of p in triangle (a, b, c); weights sum to one.
std::array<double, 3> barycentric(const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c);

struct PointLocation {
    int tri = -1;
    std::array<double, 3> weights{};  // aligned with the triangle's vertex order
    bool snapped = false;             // accepted through the boundary-gap tolerance
};

/// Point location over the shared-domain image of a mapped mesh, accelerated
/// by a uniform bucket grid (bucket size about the mean mapped edge length).
/// Holds a reference to `mapped`, which must outlive the locator.
class PointLocator {
public:
    explicit PointLocator(const MappedMesh& mapped);

    /// Throws OutsideMesh when q is farther than 1e-9 x diameter from every triangle.
    PointLocation locate(const Vec2& q) const;

    /// Reference scan over every triangle.
    PointLocation locate_brute_force(const Vec2& q) const;

private:
    std::optional<PointLocation> try_triangle(int t, const Vec2& q) const;

    const MappedMesh* mapped_;
    Vec2 origin_;
    double cell_ = 1.0;
    int nx_ = 1;
    int ny_ = 1;
    std::vector<int> offsets_;
    std::vector<int> items_;
    double tolerance_ = 0.0;
};

std::vector<PointLocation> locate_points(const PointLocator& locator, std::span<const Vec2> shared_points);

/// x^pS = alpha x_i + beta x_j + gamma x_k over each containing triangle.
std::vector<Vec2> pull_back(const MappedMesh& mapped, std::span<const PointLocation> locations);

/// Per-vertex values interpolated with the same barycentric weights.
std::vector<double> sample_vertex_field(const TriMesh& mesh, std::span<const double> values,
                                        std::span<const PointLocation> locations);

std::vector<double> sample_function(std::span<const Vec2> physics_points,
                                    const std::function<double(const Vec2&)>& field);

/// A labelled or unlabelled sample on the shared grid.
struct GridSample {
    std::string id;
    int rx = 0;
    int ry = 0;
    SharedDomain2D shared;
    std::uint64_t seed = 0;
    std::vector<Vec2> shared_points;
    std::vector<Vec2> physics_points;
    std::vector<double> param_field;
    std::optional<std::vector<double>> solution_field;

    std::size_t size() const { return static_cast<std::size_t>(rx) * static_cast<std::size_t>(ry); }
};

/// Builds the grid sample for a mapped mesh: lattice, location, pull-back.
GridSample sample_grid(const MappedMesh& mapped, const SharedDomain2D& shared, int rx, int ry);

/// Writes "<id>.json" plus one little-endian float32 file per tensor named
/// "<id>_<field>.f32". Two-channel tensors interleave (x, y) per point.
/// Returns the CRC-32 of every written tensor file keyed by field name.
std::vector<std::pair<std::string, std::uint32_t>> write_grid_sample(const std::filesystem::path& dir,
                                                                     const GridSample& sample);
GridSample read_grid_sample(const std::filesystem::path& dir, const std::string& id);

}  // namespace diffeo
