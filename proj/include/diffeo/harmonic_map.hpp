#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "diffeo/mesh.hpp"

namespace diffeo {

/// Axis-aligned rectangle [x_min, x_max] x [y_min, y_max].
struct SharedDomain2D {
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;

    void validate() const;
    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double perimeter() const { return 2.0 * (width() + height()); }
    double diameter() const;
    /// Point at arc length s (mod perimeter) walking CCW from the lower-left corner.
    Vec2 point_at(double s) const;
};

enum class WeightMode {
    Clamped,  // w_ij <- max(w_ij, epsilon)
    Raw,      // cotangent weights as computed
};

struct HarmonicOptions {
    WeightMode mode = WeightMode::Clamped;
    double clamp_epsilon = 1e-8;
    /// Re-solve with uniform (Tutte) weights if the solution folds.
    bool uniform_fallback = true;
};

struct MappedMesh {
    TriMesh mesh;
    std::vector<Vec2> shared_coords;  // one per mesh vertex
};

struct BijectivityReport {
    double min_mapped_area = 0.0;
    int fold_count = 0;
    bool ok = false;
};

/// Places the loop on the rectangle perimeter by cumulative arc-length
/// fraction, loop[0] at the lower-left corner, walking CCW. Fractions within
/// 1e-12 of a corner land exactly on it.
std::vector<Vec2> parameterize_boundary(std::span<const Vec2> loop, const SharedDomain2D& shared);

/// Copy of a CCW polygon, starting at its lowest-then-leftmost vertex, with
/// points inserted where the arc-length parameterization reaches the
/// rectangle's corners. Meshing this outline puts a vertex on every corner.
std::vector<Vec2> insert_corner_anchors(std::span<const Vec2> polygon, const SharedDomain2D& shared);

EdgeWeightTable preprocess_weights(const EdgeWeightTable& weights, WeightMode mode, double epsilon = 1e-8);

/// Solves the Dirichlet problem L f = b with the given edge weights (one
/// sparse Cholesky factorization, two right-hand sides). When the result has
/// folded triangles and `uniform_fallback` is set, the system is re-solved
/// with unit weights; FoldOver is thrown if that also folds.
MappedMesh solve_harmonic(const TriMesh& mesh, const EdgeWeightTable& weights, const SharedDomain2D& shared,
                          const HarmonicOptions& options = {});

/// Cotangent weights, preprocessing and solve in one call.
MappedMesh harmonic_map(const TriMesh& mesh, const SharedDomain2D& shared, const HarmonicOptions& options = {});

BijectivityReport validate_bijectivity(const MappedMesh& mapped);

/// max over interior vertices of |sum_j w_ij (f_j - f_i)| / diameter.
double harmonic_residual(const TriMesh& mesh, const EdgeWeightTable& weights, std::span<const Vec2> coords,
                         double diameter);

/// Sidecar format: "SHAREDCOORDS v1 <n>" then n lines "x y" (17 significant digits).
void write_shared_coords(std::ostream& os, std::span<const Vec2> coords);
std::vector<Vec2> read_shared_coords(std::istream& is);
void save_mapped_mesh(const std::filesystem::path& off_path, const std::filesystem::path& coords_path,
                      const MappedMesh& mapped);
MappedMesh load_mapped_mesh(const std::filesystem::path& off_path, const std::filesystem::path& coords_path);

}  // namespace diffeo
