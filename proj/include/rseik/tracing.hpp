#pragma once

#include <optional>
#include <vector>

#include "rseik/cost.hpp"
#include "rseik/errors.hpp"
#include "rseik/solver_fm.hpp"

namespace rseik {

enum class PathMode { plus, minus, boundary };
const char* mode_name(PathMode m);

struct PathSample {
    double t = 0;
    PointPO p;
    PathMode mode = PathMode::plus;
    double u = 0;  // distance map value at the sample
};

// Samples run from the end state (t = 0) to the seed (t = 1); travel direction is seed to end.
struct GeodesicPath {
    std::vector<PathSample> samples;
    double length = 0;
    PointPO source, end;
};

struct TraceError : ConvergenceError {
    TraceError(const std::string& what, double residual, GeodesicPath partial_path)
        : ConvergenceError(what, residual), partial(std::move(partial_path)) {}
    GeodesicPath partial;
};

struct TraceConfig {
    double dt = 0;           // F-length per step; 0 selects h * min cost / 2
    double seed_radius = 0;  // stop once U falls below this; 0 selects dt
    double smoothing = 0;    // Gaussian scale of the spatial derivative, grid units
    long max_steps = 0;      // 0 selects 50 U(end) / dt
    double boundary_band = 1e-3;
};

// Interpolated cost at an off-grid state.
CostSample cost_at(const CostField& cost, const PointPO& p);

// Central differences of the interpolated map. With `ridge`, axes along which U decreases both
// ways use the steeper one-sided slope (a subgradient at Maxwell points).
Cotangent grid_gradient(const DistanceMap& U, const PointPO& p, double smoothing = 0, bool ridge = false);

GeodesicPath backtrack(const DistanceMap& U, const CostField& cost, const ModelParams& params, const PointPO& end,
                       const TraceConfig& config = {});

// Trapezoidal F-length over chords traversed from the seed toward the end.
double path_length(const GeodesicPath& path, const CostField& cost, const ModelParams& params);

enum class InterestKind { cusp, keypoint };
const char* interest_name(InterestKind k);

struct InterestPoint {
    InterestKind kind;
    double t0, t1;
    Vec3 x;
};

struct InterestThresholds {
    double cusp_band = 0.1;       // hysteresis on the normalised n.xdot
    double keypoint_ratio = 0.1;  // C1 |xdot| <= ratio * C2 |ndot|
    int keypoint_persistence = 3;
    double keypoint_min_angle = -1;  // total rotation a keypoint needs; negative selects the orientation spacing
};

std::vector<InterestPoint> detect_interest_points(const GeodesicPath& path, const CostField& cost,
                                                  const InterestThresholds& th = {});

// True when the spatial travel between the interval and either end of the path is at most `tol`.
bool touches_endpoint(const GeodesicPath& path, const InterestPoint& ip, double tol);

enum class EndpointCase { A, B, C1, C2, unknown };
const char* endpoint_case_name(EndpointCase c);

// Upper bound on |y| of the C2 case: x * integral_0^phi sqrt(1 + m sinh^2 s) ds,
// phi = arcsinh(x / sqrt(4 - x^2)), m = (x^2 - 4) / x^2, for 0 <= x < 2.
double c2_bound(double x);

EndpointCase classify_endpoint_2d(const PointPO& p, std::optional<bool> in_R);

}  // namespace rseik
