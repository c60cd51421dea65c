#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace rseik {

using Vec3 = Eigen::Vector3d;

enum class Variant { symmetric, forward };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);

// State (x, n). For d = 2 the third components of x and n are zero.
struct PointPO {
    int d = 2;
    Vec3 x = Vec3::Zero();
    Vec3 n = Vec3::UnitX();

    static PointPO make(int d, const Vec3& x, const Vec3& n);
    static PointPO make2(double x, double y, double theta);
    double theta() const;
};

struct Tangent {
    Vec3 xdot = Vec3::Zero();
    Vec3 ndot = Vec3::Zero();
};

struct Cotangent {
    Vec3 xhat = Vec3::Zero();
    Vec3 nhat = Vec3::Zero();
};

// Projects ndot onto the tangent plane of the sphere at p.n.
Tangent make_tangent(const PointPO& p, const Vec3& xdot, const Vec3& ndot);
Cotangent make_cotangent(const PointPO& p, const Vec3& xhat, const Vec3& nhat);
// d = 2 convenience: angular velocity expressed as dtheta.
Tangent make_tangent2(const PointPO& p, double xd, double yd, double thetadot);

struct ModelParams {
    Variant variant = Variant::symmetric;
    double epsilon = 0.1;
    bool allow_exact = false;

    void validate() const;
};

inline constexpr double default_cost_floor = 1e-6;

struct CostSample {
    double c1 = 1.0;
    double c2 = 1.0;

    void validate(double delta = default_cost_floor) const;
};

double finsler_cost(const ModelParams& params, const CostSample& cost, const PointPO& p, const Tangent& v);
double dual_cost(const ModelParams& params, const CostSample& cost, const PointPO& p, const Cotangent& ph);

// Asymmetric norm v -> sqrt(<Mv,v> + (w.v)_-^2).
struct QuadNorm {
    Eigen::MatrixXd M;
    Eigen::VectorXd w;

    double operator()(const Eigen::VectorXd& v) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& v) const;
};

double generic_dual_norm(const Eigen::MatrixXd& M, const Eigen::VectorXd& w, const Eigen::VectorXd& ph);

// The metric at p written as a QuadNorm acting on (xdot, ndot) stacked in R^{2d}.
QuadNorm assemble_norm(const ModelParams& params, const CostSample& cost, const PointPO& p);
Eigen::VectorXd stack(const PointPO& p, const Tangent& v);
Eigen::VectorXd stack(const PointPO& p, const Cotangent& ph);

enum class MetricKind { G, Gtilde };

double metric_tensor_apply(const CostSample& cost, const PointPO& p, double eps, const Tangent& v);
Tangent inverse_metric_apply(const CostSample& cost, const PointPO& p, double eps, MetricKind which,
                             const Cotangent& ph);

Eigen::MatrixXd dn_matrix(const Vec3& n, double eps, int d);

std::vector<Tangent> control_set_boundary(const ModelParams& params, const CostSample& cost, const PointPO& p,
                                          int samples);

// Tangent-plane basis at n (d-1 unit vectors orthogonal to n).
std::vector<Vec3> tangent_basis(const PointPO& p);

}  // namespace rseik
