#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rseik/manifold.hpp"

namespace rseik {

struct SpatialGrid {
    int d = 2;
    std::array<int, 3> dims{1, 1, 1};
    double h = 1.0;
    Vec3 origin = Vec3::Zero();
    std::vector<std::uint8_t> mask;  // empty, or one byte per spatial node; nonzero = wall

    static SpatialGrid make(int d, std::array<int, 3> dims, double h, const Vec3& origin);

    std::size_t size() const { return std::size_t(dims[0]) * dims[1] * dims[2]; }
    std::size_t index(int i, int j, int k) const { return std::size_t(i) + std::size_t(dims[0]) * (j + std::size_t(dims[1]) * k); }
    std::array<int, 3> coords(std::size_t s) const;
    Vec3 position(std::size_t s) const;
    bool inside(int i, int j, int k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
    }
    bool masked(std::size_t s) const { return !mask.empty() && mask[s] != 0; }
    // Continuous grid coordinates (x - origin) / h.
    Vec3 to_grid(const Vec3& x) const { return (x - origin) / h; }
    double diameter() const;
};

enum class SphereKind { s1_uniform, s2_icosphere };

const char* sphere_kind_name(SphereKind k);

struct SphereGrid {
    SphereKind kind = SphereKind::s1_uniform;
    int level_or_count = 0;
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<std::vector<int>> adjacency;
    double spacing = 0;  // angular step for s1, mean edge angle for s2

    int size() const { return static_cast<int>(vertices.size()); }
    int dim() const { return kind == SphereKind::s1_uniform ? 2 : 3; }
    int nearest(const Vec3& n) const;
    // Interpolation weights of n against the tessellation: up to 3 (vertex, weight) pairs.
    std::vector<std::pair<int, double>> interpolation(const Vec3& n) const;
};

SphereGrid build_s1(int N);
SphereGrid build_s2_icosphere(int k);
bool triangle_is_acute(const Vec3& a, const Vec3& b, const Vec3& c);

struct ProductGrid {
    SpatialGrid spatial;
    SphereGrid sphere;

    std::size_t size() const { return spatial.size() * sphere.vertices.size(); }
    std::size_t node(std::size_t s, int o) const { return std::size_t(o) + sphere.vertices.size() * s; }
    std::size_t spatial_of(std::size_t node) const { return node / sphere.vertices.size(); }
    int orientation_of(std::size_t node) const { return static_cast<int>(node % sphere.vertices.size()); }
    PointPO point(std::size_t node) const;
    // Nearest node to p; throws DomainError outside the grid.
    std::size_t snap(const PointPO& p) const;
};

struct SellingPair {
    double rho = 0;
    Eigen::Vector3i w = Eigen::Vector3i::Zero();
};

std::array<SellingPair, 6> selling_decompose(const Eigen::Matrix3d& D);
std::array<SellingPair, 3> selling_decompose_2d(const Eigen::Matrix2d& D);

struct OffsetScheme {
    int orientation = 0;
    std::vector<SellingPair> pairs;
};

OffsetScheme orient_offsets(int orientation, const Vec3& n, const std::vector<SellingPair>& pairs);

// Offset schemes for all orientations of a product grid, decomposing D_n^eps.
std::vector<OffsetScheme> build_offset_schemes(const SphereGrid& sphere, double eps);

// Spatial part of the metric (up to a constant factor) for orientation n in the plane.
QuadNorm spatial_norm_2d(Variant variant, double eps, const Vec3& n);

inline constexpr int default_offset_cap = 64;

// Cyclic fan of integer offsets; consecutive entries form the facets.
std::vector<Eigen::Vector2i> build_spatial_stencil_2d(const QuadNorm& F, int cap = default_offset_cap);

bool acuteness_check(const std::vector<Eigen::VectorXd>& facet, const QuadNorm& F, double tol = 1e-12);
// Variant for arbitrary norms; the differential is taken by central differences.
bool acuteness_check(const std::vector<Eigen::VectorXd>& facet,
                     const std::function<double(const Eigen::VectorXd&)>& F, double tol = 1e-6);

struct StencilVertex {
    Eigen::Vector2i dx = Eigen::Vector2i::Zero();
    int dtheta = 0;
};

struct Facet {
    std::array<int, 3> v{-1, -1, -1};
    int size = 0;
};

struct SLStencil {
    int orientation = 0;
    std::vector<StencilVertex> vertices;
    std::vector<Facet> facets;
};

// Joins spatial facets (vertex index lists into the spatial offsets) with angular facets.
SLStencil product_stencil(int orientation, const std::vector<Eigen::Vector2i>& spatial_offsets,
                          const std::vector<std::vector<int>>& spatial_facets, const std::vector<int>& angular_steps,
                          const std::vector<std::vector<int>>& angular_facets);
// Fan x {+dtheta, -dtheta}, the usual d = 2 construction.
SLStencil fan_product_stencil(int orientation, const std::vector<Eigen::Vector2i>& fan);

// Tangent coordinates (h dx, dtheta * step) of a stencil vertex.
Eigen::VectorXd vertex_tangent(const StencilVertex& v, double h, double dtheta);
bool audit_stencil(const SLStencil& st, const QuadNorm& F3, double h, double dtheta);

// Per-vertex (neighbor, weight) pairs with sum_e w_e (g . t_e)_+^2 ~ |g|^2 on tangent vectors g.
using AngularWeights = std::vector<std::vector<std::pair<int, double>>>;
AngularWeights angular_upwind_weights(const SphereGrid& sphere);
// Log-map tangent at vertex a pointing to vertex b.
Vec3 log_map(const Vec3& a, const Vec3& b);

// Nonnegative least squares min |Ax - b|, x >= 0 (Lawson-Hanson).
Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

}  // namespace rseik
