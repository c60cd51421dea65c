#include "rseik/tracing.hpp"

#include <cmath>
#include <functional>
#include <numbers>

namespace rseik {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

double interp(const DistanceMap& U, const PointPO& p) { return interpolate_field(U.grid, U.values, p); }

bool inside_box(const SpatialGrid& sp, const Vec3& x) {
    Vec3 g = sp.to_grid(x);
    for (int a = 0; a < sp.d; ++a)
        if (g(a) < -1e-9 || g(a) > sp.dims[a] - 1 + 1e-9) return false;
    return true;
}

// Derivative from samples at -delta and +delta around the centre value, one-sided near infinities.
double difference(double um, double u0, double up, double delta, bool ridge) {
    bool fm = std::isfinite(um), fp = std::isfinite(up);
    if (ridge && fm && fp && std::isfinite(u0)) {
        // On a ridge (U decreases both ways) take the steeper one-sided slope: a subgradient.
        double dm = (u0 - um) / delta, dp = (up - u0) / delta;
        if (dm > 0 && dp < 0) return -dp > dm ? dp : dm;
    }
    if (fm && fp) return (up - um) / (2 * delta);
    if (fp && std::isfinite(u0)) return (up - u0) / delta;
    if (fm && std::isfinite(u0)) return (u0 - um) / delta;
    return 0;
}

PointPO rotate(const PointPO& p, const Vec3& t, double angle) {
    Vec3 n = std::cos(angle) * p.n + std::sin(angle) * t;
    return PointPO::make(p.d, p.x, n);
}

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb, double whole,
               double tol, int depth) {
    double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6 * (fa + 4 * flm + fm), right = (b - m) / 6 * (fm + 4 * frm + fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15 * tol) return left + right + delta / 15;
    return simpson(f, a, m, fa, flm, fm, left, tol / 2, depth - 1) + simpson(f, m, b, fm, frm, fb, right, tol / 2, depth - 1);
}

}  // namespace

const char* mode_name(PathMode m) {
    switch (m) {
        case PathMode::plus: return "plus";
        case PathMode::minus: return "minus";
        default: return "boundary";
    }
}

const char* interest_name(InterestKind k) { return k == InterestKind::cusp ? "cusp" : "keypoint"; }

const char* endpoint_case_name(EndpointCase c) {
    switch (c) {
        case EndpointCase::A: return "A";
        case EndpointCase::B: return "B";
        case EndpointCase::C1: return "C1";
        case EndpointCase::C2: return "C2";
        default: return "unknown";
    }
}

CostSample cost_at(const CostField& cost, const PointPO& p) {
    double c1 = interpolate_field(cost.grid, cost.c1, p), c2 = interpolate_field(cost.grid, cost.c2, p);
    if (!std::isfinite(c1) || !std::isfinite(c2)) throw DomainError("state lies inside a masked region");
    return {c1, c2};
}

Cotangent grid_gradient(const DistanceMap& U, const PointPO& p, double smoothing, bool ridge) {
    const auto& sp = U.grid.spatial;
    if (!inside_box(sp, p.x)) throw DomainError("gradient requested outside the grid");
    const double h = sp.h;
    const double u0 = interp(U, p);

    // Spatial derivative: central differences of the interpolant, optionally Gaussian-averaged.
    std::vector<std::pair<Vec3, double>> taps = {{Vec3::Zero(), 1.0}};
    if (smoothing > 0) {
        taps.clear();
        int r = static_cast<int>(std::ceil(2 * smoothing));
        int rz = sp.d == 3 ? r : 0;
        for (int k = -rz; k <= rz; ++k)
            for (int j = -r; j <= r; ++j)
                for (int i = -r; i <= r; ++i) {
                    Vec3 o(i, j, k);
                    double w = std::exp(-o.squaredNorm() / (2 * smoothing * smoothing));
                    Vec3 x = p.x + h * o;
                    if (inside_box(sp, x)) taps.push_back({h * o, w});
                }
    }
    Vec3 xh = Vec3::Zero();
    double wsum = 0;
    for (auto& [o, w] : taps) {
        PointPO c = PointPO::make(p.d, p.x + o, p.n);
        double uc = o.isZero() ? u0 : interp(U, c);
        Vec3 g = Vec3::Zero();
        for (int a = 0; a < sp.d; ++a) {
            Vec3 e = Vec3::Unit(a) * h;
            double um = inside_box(sp, c.x - e) ? interp(U, PointPO::make(p.d, c.x - e, p.n)) : inf;
            double up = inside_box(sp, c.x + e) ? interp(U, PointPO::make(p.d, c.x + e, p.n)) : inf;
            g(a) = difference(um, uc, up, h, ridge);
        }
        xh += w * g;
        wsum += w;
    }
    xh /= wsum;

    // Angular derivative along geodesic directions of the sphere.
    const double delta = U.grid.sphere.spacing;
    auto basis = tangent_basis(p);
    Vec3 nh = Vec3::Zero();
    if (p.d == 2) {
        const Vec3& t = basis[0];
        nh = difference(interp(U, rotate(p, t, -delta)), u0, interp(U, rotate(p, t, delta)), delta, ridge) * t;
    } else {
        // Least squares over six directions in the tangent plane.
        Eigen::Matrix<double, 6, 2> A;
        Eigen::Matrix<double, 6, 1> b;
        int rows = 0;
        for (int k = 0; k < 3; ++k) {
            double a = std::numbers::pi * k / 3;
            Vec3 t = std::cos(a) * basis[0] + std::sin(a) * basis[1];
            double d = difference(interp(U, rotate(p, t, -delta)), u0, interp(U, rotate(p, t, delta)), delta, ridge);
            A.row(rows) << std::cos(a), std::sin(a);
            b(rows++) = d;
        }
        Eigen::Vector2d c = A.topRows(rows).colPivHouseholderQr().solve(b.head(rows));
        nh = c(0) * basis[0] + c(1) * basis[1];
    }
    return make_cotangent(p, xh, nh);
}

GeodesicPath backtrack(const DistanceMap& U, const CostField& cost, const ModelParams& params, const PointPO& end,
                       const TraceConfig& config) {
    if (params.variant != U.variant || std::abs(params.epsilon - U.epsilon) > 1e-12)
        throw DomainError("model parameters do not match the distance map metadata");
    if (U.seeds.empty()) throw DomainError("distance map carries no seed");
    const auto& sp = U.grid.spatial;
    if (end.d != sp.d) throw DomainError("end state dimension does not match the grid");
    if (!inside_box(sp, end.x)) throw DomainError("end state lies outside the grid");
    const double u_end = interp(U, end);
    if (!std::isfinite(u_end)) throw DomainError("end state is not reached by the distance map");

    const double dt = config.dt > 0 ? config.dt : 0.5 * sp.h * cost.min_cost();
    const double radius = config.seed_radius > 0 ? config.seed_radius : 2 * sp.h * cost.min_cost();
    const long budget = config.max_steps > 0 ? config.max_steps : static_cast<long>(std::ceil(50 * u_end / dt)) + 10;

    // Nearest seed (by distance-map semantics all seeds have value 0).
    PointPO seed = U.seeds.front();
    for (const auto& s : U.seeds)
        if ((s.x - end.x).norm() < (seed.x - end.x).norm()) seed = s;

    GeodesicPath path;
    path.end = end;
    path.source = seed;
    std::vector<PathSample>& S = path.samples;
    PointPO p = end;
    double u = u_end;
    const bool forward = params.variant == Variant::forward;

    auto mode_of = [&](const Cotangent& du, const PointPO& q) {
        if (!forward) return PathMode::plus;
        double dun = du.xhat.dot(q.n);
        double norm = std::sqrt(du.xhat.squaredNorm() + du.nhat.squaredNorm());
        if (std::abs(dun) < config.boundary_band * norm) return PathMode::boundary;
        return dun < 0 ? PathMode::minus : PathMode::plus;
    };

    while (u > radius) {
        if (static_cast<long>(S.size()) >= budget) {
            path.length = path_length(path, cost, params);
            throw TraceError("backtracking exceeded its step budget", u, path);
        }
        Cotangent du = grid_gradient(U, p, config.smoothing, true);
        double dun = du.xhat.dot(p.n);
        double norm = std::sqrt(du.xhat.squaredNorm() + du.nhat.squaredNorm());
        PathMode mode = mode_of(du, p);
        MetricKind kind = forward && dun < 0 ? MetricKind::Gtilde : MetricKind::G;
        S.push_back({0, p, mode, u});
        CostSample c = cost_at(cost, p);
        Tangent v = inverse_metric_apply(c, p, params.epsilon, kind, du);
        double f = finsler_cost(params, c, p, v);
        if (!(f > 1e-14) || !(norm > 1e-14)) {
            path.length = path_length(path, cost, params);
            throw StationaryPointError("distance map gradient vanishes away from the seed");
        }
        // Step of F-length dt against the travel direction, halved until U decreases.
        double step = dt;
        PointPO q;
        double uq = inf;
        for (int tries = 0; tries < 30; ++tries) {
            Vec3 x = p.x - step / f * v.xdot;
            Vec3 n = p.n - step / f * v.ndot;
            q = PointPO::make(p.d, x, n);
            if (inside_box(sp, q.x)) uq = interp(U, q);
            if (uq < u - 1e-12 * std::max(1.0, u)) break;
            uq = inf;
            step *= 0.5;
        }
        if (!std::isfinite(uq)) {
            // Non-differentiable point (e.g. a Maxwell point): accept the best decreasing probe among
            // pure rotations and axis translations of F-length dt.
            std::vector<Tangent> probes;
            for (const auto& t : tangent_basis(p)) {
                probes.push_back(make_tangent(p, Vec3::Zero(), t));
                probes.push_back(make_tangent(p, Vec3::Zero(), -t));
            }
            for (int a = 0; a < sp.d; ++a) {
                probes.push_back(make_tangent(p, Vec3::Unit(a), Vec3::Zero()));
                probes.push_back(make_tangent(p, -Vec3::Unit(a), Vec3::Zero()));
            }
            for (const auto& w : probes) {
                // Travel direction is w, so the backward step goes against it.
                double fw = finsler_cost(params, c, p, w);
                if (!(fw > 0) || !std::isfinite(fw)) continue;
                PointPO r = PointPO::make(p.d, p.x - dt / fw * w.xdot, p.n - dt / fw * w.ndot);
                if (!inside_box(sp, r.x)) continue;
                double ur = interp(U, r);
                if (ur < u - 1e-12 * std::max(1.0, u) && !(ur >= uq)) {
                    uq = ur;
                    q = r;
                }
            }
            // Discrete pits of the distance map can be a few cells wide: widen the search to moves of
            // up to 4 cells along +-n combined with rotations of up to 4 angular spacings.
            const double dth = U.grid.sphere.spacing;
            for (int k = 1; k <= 4 && !std::isfinite(uq); ++k) {
                for (int a = -k; a <= k; ++a) {
                    for (double along : {-1.0, 0.0, 1.0}) {
                        for (const auto& t : tangent_basis(p)) {
                            if (a == 0 && along == 0) continue;
                            PointPO r = rotate(PointPO::make(p.d, p.x + along * k * sp.h * p.n, p.n), t, a * dth);
                            if (!inside_box(sp, r.x)) continue;
                            double ur = interp(U, r);
                            if (ur < u - 1e-12 * std::max(1.0, u) && !(ur >= uq)) {
                                uq = ur;
                                q = r;
                            }
                        }
                    }
                }
            }
        }
        if (!std::isfinite(uq)) {
            // The interpolated map is flat at grid scale around the seed; stop there.
            double angle = std::acos(std::clamp(p.n.dot(seed.n), -1.0, 1.0));
            if ((p.x - seed.x).norm() <= 3 * sp.h && angle <= 3 * U.grid.sphere.spacing) break;
            path.length = path_length(path, cost, params);
            throw StationaryPointError("no descent step found away from the seed");
        }
        p = q;
        u = uq;
    }
    if (S.empty() || S.back().u != u) {
        PathMode m = S.empty() ? PathMode::plus : S.back().mode;
        if (u > 0) m = mode_of(grid_gradient(U, p, config.smoothing, true), p);
        S.push_back({0, p, m, u});
    }
    if ((p.x - seed.x).norm() > 0 || (p.n - seed.n).norm() > 0) S.push_back({0, seed, S.back().mode, 0.0});

    // Parametrise by normalised F-length from the end.
    std::vector<double> acc(S.size(), 0.0);
    for (std::size_t k = 1; k < S.size(); ++k) {
        const PathSample& a = S[k];
        const PathSample& b = S[k - 1];
        Tangent tv = make_tangent(a.p, b.p.x - a.p.x, b.p.n - a.p.n);
        double seg = 0.5 * (finsler_cost(params, cost_at(cost, a.p), a.p, tv) + finsler_cost(params, cost_at(cost, b.p), b.p, tv));
        acc[k] = acc[k - 1] + std::max(seg, 1e-300);
    }
    for (std::size_t k = 0; k < S.size(); ++k) S[k].t = acc.back() > 0 ? acc[k] / acc.back() : 0.0;
    path.length = acc.back();
    return path;
}

double path_length(const GeodesicPath& path, const CostField& cost, const ModelParams& params) {
    const auto& S = path.samples;
    double len = 0;
    for (std::size_t k = 1; k < S.size(); ++k) {
        const PointPO& a = S[k].p;      // closer to the seed
        const PointPO& b = S[k - 1].p;  // closer to the end
        Tangent tv = make_tangent(a, b.x - a.x, b.n - a.n);
        len += 0.5 * (finsler_cost(params, cost_at(cost, a), a, tv) + finsler_cost(params, cost_at(cost, b), b, tv));
    }
    return len;
}

std::vector<InterestPoint> detect_interest_points(const GeodesicPath& path, const CostField& cost,
                                                  const InterestThresholds& th) {
    std::vector<InterestPoint> out;
    const auto& S = path.samples;
    const std::size_t n = S.size();
    if (n < 3) return out;
    // Travel-direction chords (seed toward end) at each sample.
    std::vector<double> s(n), ratio_ok(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::size_t a = std::min(n - 1, k + 1), b = k == 0 ? 0 : k - 1;
        Vec3 dx = S[b].p.x - S[a].p.x;
        Vec3 dn = S[b].p.n - S[a].p.n;
        CostSample c = cost_at(cost, S[k].p);
        double sx = c.c1 * dx.norm(), sn = c.c2 * dn.norm();
        s[k] = sx + sn > 0 ? c.c1 * S[k].p.n.dot(dx) / (sx + sn) : 0.0;
        ratio_ok[k] = sn > 0 && sx <= th.keypoint_ratio * sn;
    }
    // Cusps: n.xdot swings from above +band to below -band or vice versa.
    int last_sign = 0;
    std::size_t last_idx = 0;
    for (std::size_t k = 0; k < n; ++k) {
        int sg = s[k] > th.cusp_band ? 1 : s[k] < -th.cusp_band ? -1 : 0;
        if (sg == 0) continue;
        if (last_sign != 0 && sg != last_sign) {
            std::size_t m = last_idx;
            for (std::size_t j = last_idx; j <= k; ++j)
                if (std::abs(s[j]) < std::abs(s[m])) m = j;
            out.push_back({InterestKind::cusp, S[last_idx].t, S[k].t, S[m].p.x});
        }
        last_sign = sg;
        last_idx = k;
    }
    // Keypoints: runs of near-pure rotation that turn by at least one orientation step.
    const double min_angle = th.keypoint_min_angle >= 0 ? th.keypoint_min_angle : cost.grid.sphere.spacing;
    for (std::size_t k = 0; k < n;) {
        if (!ratio_ok[k]) {
            ++k;
            continue;
        }
        std::size_t j = k;
        while (j + 1 < n && ratio_ok[j + 1]) ++j;
        double turned = 0;
        for (std::size_t q = k; q < j; ++q) turned += std::acos(std::clamp(S[q].p.n.dot(S[q + 1].p.n), -1.0, 1.0));
        // A rotation across which the spatial direction reverses is the zero-speed instant of a cusp.
        int before = 0, after = 0;
        for (std::size_t q = k; q-- > 0;)
            if (std::abs(s[q]) > th.cusp_band) {
                before = s[q] > 0 ? 1 : -1;
                break;
            }
        for (std::size_t q = j + 1; q < n; ++q)
            if (std::abs(s[q]) > th.cusp_band) {
                after = s[q] > 0 ? 1 : -1;
                break;
            }
        bool reversal = before != 0 && after != 0 && before != after;
        if (static_cast<int>(j - k + 1) >= th.keypoint_persistence && turned >= min_angle && !reversal) out.push_back({InterestKind::keypoint, S[k].t, S[j].t, S[(k + j) / 2].p.x});
        k = j + 1;
    }
    return out;
}

bool touches_endpoint(const GeodesicPath& path, const InterestPoint& ip, double tol) {
    const auto& S = path.samples;
    double head = 0, tail = 0;
    for (std::size_t k = 1; k < S.size(); ++k) {
        double step = (S[k].p.x - S[k - 1].p.x).norm();
        if (S[k].t <= ip.t0) head += step;
        if (S[k - 1].t >= ip.t1) tail += step;
    }
    return head <= tol || tail <= tol;
}

double c2_bound(double x) {
    if (!(x >= 0 && x < 2)) throw DomainError("the C2 bound is defined for 0 <= x < 2");
    if (x == 0) return 0;
    const double phi = std::asinh(x / std::sqrt(4 - x * x));
    const double m = (x * x - 4) / (x * x);
    auto f = [m](double t) {
        double sh = std::sinh(t);
        return std::sqrt(std::max(0.0, 1 + m * sh * sh));
    };
    double fa = f(0), fb = f(phi), fm = f(phi / 2);
    double whole = phi / 6 * (fa + 4 * fm + fb);
    return x * simpson(f, 0, phi, fa, fm, fb, whole, 1e-12, 50);
}

EndpointCase classify_endpoint_2d(const PointPO& p, std::optional<bool> in_R) {
    const double x = p.x.x(), y = p.x.y();
    if (x < 0) return EndpointCase::B;
    if (!in_R) return EndpointCase::unknown;
    if (*in_R) return EndpointCase::A;
    if (x >= 2) return EndpointCase::C1;
    if (std::abs(y) <= c2_bound(x)) return EndpointCase::C2;
    return EndpointCase::unknown;
}

}  // namespace rseik
