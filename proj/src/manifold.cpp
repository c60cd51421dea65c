#include "rseik/manifold.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "rseik/errors.hpp"

namespace rseik {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double pos(double a) { return a > 0 ? a : 0.0; }
double neg(double a) { return a < 0 ? -a : 0.0; }

void check_unit(const PointPO& p) {
    double nn = p.n.norm();
    if (!(std::abs(nn - 1.0) <= 1e-9)) throw DomainError("orientation is not a unit vector (|n| = " + std::to_string(nn) + ")");
    if (p.d != 2 && p.d != 3) throw DomainError("dimension must be 2 or 3");
}

void check_cost(const CostSample& c) {
    if (!(c.c1 >= 0) || !(c.c2 >= 0) || !std::isfinite(c.c1) || !std::isfinite(c.c2))
        throw DomainError("cost must be finite and nonnegative");
}

}  // namespace

const char* variant_name(Variant v) { return v == Variant::symmetric ? "symmetric" : "forward"; }

Variant parse_variant(const std::string& s) {
    if (s == "symmetric") return Variant::symmetric;
    if (s == "forward") return Variant::forward;
    throw DomainError("unknown variant '" + s + "' (expected symmetric or forward)");
}

PointPO PointPO::make(int d, const Vec3& x, const Vec3& n) {
    if (d != 2 && d != 3) throw DomainError("dimension must be 2 or 3");
    PointPO p;
    p.d = d;
    p.x = x;
    p.n = n;
    if (d == 2) {
        p.x.z() = 0;
        p.n.z() = 0;
    }
    double nn = p.n.norm();
    if (!(nn > 0) || !std::isfinite(nn)) throw DomainError("orientation must be a nonzero finite vector");
    p.n /= nn;
    return p;
}

PointPO PointPO::make2(double x, double y, double theta) {
    return make(2, Vec3(x, y, 0), Vec3(std::cos(theta), std::sin(theta), 0));
}

double PointPO::theta() const { return std::atan2(n.y(), n.x()); }

Tangent make_tangent(const PointPO& p, const Vec3& xdot, const Vec3& ndot) {
    Tangent t;
    t.xdot = xdot;
    t.ndot = ndot - ndot.dot(p.n) * p.n;
    if (p.d == 2) {
        t.xdot.z() = 0;
        t.ndot.z() = 0;
    }
    return t;
}

Cotangent make_cotangent(const PointPO& p, const Vec3& xhat, const Vec3& nhat) {
    Cotangent c;
    c.xhat = xhat;
    c.nhat = nhat - nhat.dot(p.n) * p.n;
    if (p.d == 2) {
        c.xhat.z() = 0;
        c.nhat.z() = 0;
    }
    return c;
}

Tangent make_tangent2(const PointPO& p, double xd, double yd, double thetadot) {
    Vec3 perp(-p.n.y(), p.n.x(), 0);
    return make_tangent(p, Vec3(xd, yd, 0), thetadot * perp);
}

void ModelParams::validate() const {
    if (!std::isfinite(epsilon) || epsilon > 1.0 || epsilon < 0.0)
        throw DomainError("epsilon must lie in (0, 1]");
    if (epsilon == 0.0 && !allow_exact) throw DomainError("epsilon = 0 requires allow_exact");
}

void CostSample::validate(double delta) const {
    check_cost(*this);
    if (c1 < delta || c2 < delta) throw DomainError("cost below floor " + std::to_string(delta));
}

double finsler_cost(const ModelParams& params, const CostSample& cost, const PointPO& p, const Tangent& v) {
    params.validate();
    check_cost(cost);
    check_unit(p);
    const double s = v.xdot.dot(p.n);
    const double perp2 = (v.xdot - s * p.n).squaredNorm();
    const double ang2 = cost.c2 * cost.c2 * v.ndot.squaredNorm();
    const double c12 = cost.c1 * cost.c1;
    const double eps = params.epsilon;
    if (eps == 0.0) {
        if (std::sqrt(perp2) > 1e-9 * v.xdot.norm()) return inf;
        if (params.variant == Variant::forward && s < 0) return inf;
        return std::sqrt(c12 * s * s + ang2);
    }
    const double ie2 = 1.0 / (eps * eps);
    double spatial;
    if (params.variant == Variant::symmetric)
        spatial = s * s + ie2 * perp2;
    else
        spatial = pos(s) * pos(s) + ie2 * perp2 + ie2 * neg(s) * neg(s);
    return std::sqrt(c12 * spatial + ang2);
}

double dual_cost(const ModelParams& params, const CostSample& cost, const PointPO& p, const Cotangent& ph) {
    params.validate();
    check_cost(cost);
    check_unit(p);
    const double s = ph.xhat.dot(p.n);
    const double perp2 = (ph.xhat - s * p.n).squaredNorm();
    const double ang = ph.nhat.squaredNorm() / (cost.c2 * cost.c2);
    const double ic12 = 1.0 / (cost.c1 * cost.c1);
    const double e2 = params.epsilon * params.epsilon;
    double spatial;
    if (params.variant == Variant::symmetric)
        spatial = s * s + e2 * perp2;
    else
        spatial = pos(s) * pos(s) + e2 * neg(s) * neg(s) + e2 * perp2;
    return std::sqrt(ic12 * spatial + ang);
}

double QuadNorm::operator()(const Eigen::VectorXd& v) const {
    double q = v.dot(M * v);
    double a = w.size() ? neg(w.dot(v)) : 0.0;
    return std::sqrt(std::max(0.0, q) + a * a);
}

Eigen::VectorXd QuadNorm::gradient(const Eigen::VectorXd& v) const {
    double f = (*this)(v);
    if (f == 0) return Eigen::VectorXd::Zero(v.size());
    double wv = w.size() ? w.dot(v) : 0.0;
    Eigen::VectorXd g = M * v;
    if (wv < 0) g += wv * w;
    return g / f;
}

double generic_dual_norm(const Eigen::MatrixXd& M, const Eigen::VectorXd& w, const Eigen::VectorXd& ph) {
    const auto n = M.rows();
    if (M.cols() != n || w.size() != n || ph.size() != n) throw DomainError("dimension mismatch in generic_dual_norm");
    if ((M - M.transpose()).norm() > 1e-12 * std::max(1.0, M.norm())) throw DomainError("matrix is not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(M);
    if (llt.info() != Eigen::Success || M.ldlt().vectorD().minCoeff() <= 0)
        throw DomainError("matrix is not positive definite");
    Eigen::VectorXd minv_w = llt.solve(w);
    Eigen::MatrixXd Mw = M + w * w.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt2(Mw);
    double quad = ph.dot(llt2.solve(ph));
    Eigen::VectorXd what = minv_w / std::sqrt(1.0 + w.dot(minv_w));
    double a = pos(ph.dot(what));
    return std::sqrt(std::max(0.0, quad) + a * a);
}

Eigen::MatrixXd dn_matrix(const Vec3& n, double eps, int d) {
    if (d != 2 && d != 3) throw DomainError("dimension must be 2 or 3");
    Eigen::VectorXd nn = n.head(d);
    if (!(std::abs(nn.norm() - 1.0) <= 1e-9)) throw DomainError("orientation is not a unit vector");
    Eigen::MatrixXd P = nn * nn.transpose();
    return P + eps * eps * (Eigen::MatrixXd::Identity(d, d) - P);
}

QuadNorm assemble_norm(const ModelParams& params, const CostSample& cost, const PointPO& p) {
    params.validate();
    check_unit(p);
    if (params.epsilon <= 0) throw SingularityError("assembled norm requires epsilon > 0");
    const int d = p.d;
    QuadNorm F;
    F.M = Eigen::MatrixXd::Zero(2 * d, 2 * d);
    F.M.topLeftCorner(d, d) = cost.c1 * cost.c1 * dn_matrix(p.n, params.epsilon, d).inverse();
    F.M.bottomRightCorner(d, d) = cost.c2 * cost.c2 * Eigen::MatrixXd::Identity(d, d);
    F.w = Eigen::VectorXd::Zero(2 * d);
    if (params.variant == Variant::forward) {
        double e = params.epsilon;
        F.w.head(d) = cost.c1 * std::sqrt(1.0 / (e * e) - 1.0) * p.n.head(d);
    }
    return F;
}

Eigen::VectorXd stack(const PointPO& p, const Tangent& v) {
    Eigen::VectorXd s(2 * p.d);
    s << v.xdot.head(p.d), v.ndot.head(p.d);
    return s;
}

Eigen::VectorXd stack(const PointPO& p, const Cotangent& ph) {
    Eigen::VectorXd s(2 * p.d);
    s << ph.xhat.head(p.d), ph.nhat.head(p.d);
    return s;
}

double metric_tensor_apply(const CostSample& cost, const PointPO& p, double eps, const Tangent& v) {
    ModelParams mp{Variant::symmetric, eps, eps == 0.0};
    double f = finsler_cost(mp, cost, p, v);
    return f * f;
}

Tangent inverse_metric_apply(const CostSample& cost, const PointPO& p, double eps, MetricKind which,
                             const Cotangent& ph) {
    check_unit(p);
    check_cost(cost);
    if (!(eps > 0)) throw SingularityError("inverse metric is singular for epsilon = 0");
    const double ic12 = 1.0 / (cost.c1 * cost.c1);
    Vec3 xd;
    if (which == MetricKind::G) {
        double s = ph.xhat.dot(p.n);
        Vec3 perp = ph.xhat - s * p.n;
        xd = ic12 * (s * p.n + eps * eps * perp);
    } else {
        xd = eps * eps * ic12 * ph.xhat;
    }
    return make_tangent(p, xd, ph.nhat / (cost.c2 * cost.c2));
}

std::vector<Vec3> tangent_basis(const PointPO& p) {
    if (p.d == 2) return {Vec3(-p.n.y(), p.n.x(), 0)};
    Vec3 a = std::abs(p.n.x()) < 0.6 ? Vec3::UnitX() : (std::abs(p.n.y()) < 0.6 ? Vec3::UnitY() : Vec3::UnitZ());
    Vec3 e1 = (a - a.dot(p.n) * p.n).normalized();
    Vec3 e2 = p.n.cross(e1);
    return {e1, e2};
}

std::vector<Tangent> control_set_boundary(const ModelParams& params, const CostSample& cost, const PointPO& p,
                                          int samples) {
    params.validate();
    check_unit(p);
    if (samples < 1) throw DomainError("samples must be at least 1");
    const bool exact = params.epsilon == 0.0;
    const int d = p.d;
    std::vector<Vec3> spatial;
    if (exact)
        spatial.push_back(p.n);
    else
        for (int i = 0; i < d; ++i) spatial.push_back(Vec3::Unit(i));
    std::vector<Vec3> angular = tangent_basis(p);
    const int k = static_cast<int>(spatial.size() + angular.size());

    std::vector<Eigen::VectorXd> dirs;
    dirs.reserve(samples);
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    std::mt19937_64 rng(12345);
    std::normal_distribution<double> gauss;
    for (int i = 0; i < samples; ++i) {
        Eigen::VectorXd u(k);
        if (k == 2) {
            double a = 2 * std::numbers::pi * i / samples;
            u << std::cos(a), std::sin(a);
        } else if (k == 3) {
            double z = 1.0 - (2.0 * i + 1.0) / samples;
            double r = std::sqrt(std::max(0.0, 1 - z * z));
            u << r * std::cos(golden * i), r * std::sin(golden * i), z;
        } else {
            do {
                for (int j = 0; j < k; ++j) u(j) = gauss(rng);
            } while (u.norm() < 1e-8);
            u.normalize();
        }
        dirs.push_back(u);
    }

    std::vector<Tangent> out;
    out.reserve(samples);
    for (auto& u : dirs) {
        if (exact && params.variant == Variant::forward) u(0) = std::abs(u(0));
        Vec3 xd = Vec3::Zero(), nd = Vec3::Zero();
        for (size_t j = 0; j < spatial.size(); ++j) xd += u(j) * spatial[j];
        for (size_t j = 0; j < angular.size(); ++j) nd += u(spatial.size() + j) * angular[j];
        Tangent t = make_tangent(p, xd, nd);
        double f = finsler_cost(params, cost, p, t);
        t.xdot /= f;
        t.ndot /= f;
        out.push_back(t);
    }
    return out;
}

}  // namespace rseik
