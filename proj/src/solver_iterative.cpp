#include "rseik/solver_iterative.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <thread>

#include "rseik/errors.hpp"

namespace rseik {

namespace {

double pos(double x) { return x > 0 ? x : 0; }

}  // namespace

IterativeScheme::IterativeScheme(const CostField& cost, const ModelParams& params) : cost_(cost), params_(params) {
    params.validate();
    if (!(params.epsilon > 0)) throw DomainError("the solvers require epsilon > 0");
    cost.validate();
    const auto& g = cost.grid;
    no_ = g.sphere.size();
    const int d = g.spatial.d;
    // Offsets x +- h n in grid units share their fractional part across spatial nodes.
    auto corners = [&](const Vec3& off) {
        std::vector<Corner> cs;
        int base[3] = {0, 0, 0};
        double fr[3] = {0, 0, 0};
        for (int a = 0; a < d; ++a) {
            base[a] = static_cast<int>(std::floor(off(a)));
            fr[a] = off(a) - base[a];
        }
        for (int m = 0; m < (1 << d); ++m) {
            Corner c{base[0], base[1], base[2], 1.0};
            for (int a = 0; a < d; ++a) {
                int bit = (m >> a) & 1;
                (a == 0 ? c.di : a == 1 ? c.dj : c.dk) += bit;
                c.w *= bit ? fr[a] : 1 - fr[a];
            }
            if (c.w > 1e-15) cs.push_back(c);
        }
        return cs;
    };
    for (int o = 0; o < no_; ++o) {
        const Vec3& n = g.sphere.vertices[o];
        ahead_.push_back(corners(n));
        behind_.push_back(corners(-n));
    }
    if (d == 3) angular_ = angular_upwind_weights(g.sphere);

    const double e2 = params.epsilon * params.epsilon, h2 = g.spatial.h * g.spatial.h;
    const double dth2 = g.sphere.spacing * g.sphere.spacing;
    double worst = 0;
    for (std::size_t p = 0; p < g.size(); ++p) {
        if (g.spatial.masked(g.spatial_of(p))) continue;
        double ic1 = 1 / (cost.c1[p] * cost.c1[p]), ic2 = 1 / (cost.c2[p] * cost.c2[p]);
        double ang = 0;
        if (d == 2) {
            ang = 1 / dth2;
        } else {
            for (auto& [j, w] : angular_[g.orientation_of(p)]) ang += w;
        }
        worst = std::max(worst, ic1 * ((1 - e2) + e2 * d) / h2 + ic2 * ang);
    }
    monotone_dt_ = worst > 0 ? 0.9 / std::sqrt(worst) : 1.0;
}

double IterativeScheme::cfl_dt() const {
    double cmin = std::numeric_limits<double>::infinity();
    const auto& g = cost_.grid;
    for (std::size_t p = 0; p < g.size(); ++p) {
        if (g.spatial.masked(g.spatial_of(p))) continue;
        cmin = std::min({cmin, cost_.c1[p], cost_.c2[p]});
    }
    return 0.4 * g.spatial.h * cmin * std::min(1.0, params_.epsilon);
}

double IterativeScheme::default_clamp() const {
    const auto& g = cost_.grid;
    double c1 = 0, c2 = 0;
    for (std::size_t p = 0; p < g.size(); ++p) {
        if (g.spatial.masked(g.spatial_of(p))) continue;
        c1 = std::max(c1, cost_.c1[p]);
        c2 = std::max(c2, cost_.c2[p]);
    }
    return 10 * (g.spatial.diameter() * c1 + std::numbers::pi * c2);
}

double IterativeScheme::sample(std::size_t s, int o, const std::vector<Corner>& corners, const std::vector<double>& u,
                               double clamp) const {
    const auto& g = cost_.grid;
    auto c = g.spatial.coords(s);
    double v = 0;
    for (const auto& k : corners) {
        int i = c[0] + k.di, j = c[1] + k.dj, l = c[2] + k.dk;
        double x = g.spatial.inside(i, j, l) ? u[g.node(g.spatial.index(i, j, l), o)] : clamp;
        v += k.w * x;
    }
    return v;
}

double IterativeScheme::hamiltonian(std::size_t p, const std::vector<double>& u, double clamp) const {
    const auto& g = cost_.grid;
    const auto& sp = g.spatial;
    const std::size_t s = g.spatial_of(p);
    const int o = g.orientation_of(p);
    const double h = sp.h, e2 = params_.epsilon * params_.epsilon;
    const double u0 = u[p];

    double am = (u0 - sample(s, o, behind_[o], u, clamp)) / h;
    double ap = (sample(s, o, ahead_[o], u, clamp) - u0) / h;
    double dir = params_.variant == Variant::forward ? pos(am) : std::max(pos(am), pos(-ap));

    auto c = sp.coords(s);
    double grad2 = 0;
    for (int a = 0; a < sp.d; ++a) {
        double best = 0;
        for (int sgn : {-1, 1}) {
            std::array<int, 3> q = c;
            q[a] += sgn;
            double v = sp.inside(q[0], q[1], q[2]) ? u[g.node(sp.index(q[0], q[1], q[2]), o)] : clamp;
            best = std::max(best, pos(u0 - v));
        }
        grad2 += best * best / (h * h);
    }
    double ang = 0;
    if (sp.d == 2) {
        double best = std::max(pos(u0 - u[g.node(s, (o + 1) % no_)]), pos(u0 - u[g.node(s, (o + no_ - 1) % no_)]));
        ang = best * best / (g.sphere.spacing * g.sphere.spacing);
    } else {
        for (auto& [j, w] : angular_[o]) {
            double t = pos(u0 - u[g.node(s, j)]);
            ang += w * t * t;
        }
    }
    const double c1 = cost_.c1[p], c2 = cost_.c2[p];
    return std::sqrt(((1 - e2) * dir * dir + e2 * grad2) / (c1 * c1) + ang / (c2 * c2));
}

void IterativeScheme::step(const std::vector<double>& u, std::vector<double>& out, double dt, double clamp,
                           const std::vector<std::size_t>& seeds, int threads) const {
    const auto& g = cost_.grid;
    out.resize(u.size());
    const bool masked = !g.spatial.mask.empty();
    auto work = [&](std::size_t b, std::size_t e) {
        for (std::size_t p = b; p < e; ++p) {
            if (masked && g.spatial.masked(g.spatial_of(p))) {
                out[p] = clamp;
                continue;
            }
            out[p] = std::min(clamp, u[p] + dt * (1 - hamiltonian(p, u, clamp)));
        }
    };
    threads = std::max(1, threads);
    if (threads == 1) {
        work(0, u.size());
    } else {
        std::vector<std::thread> pool;
        std::size_t chunk = (u.size() + threads - 1) / threads;
        for (int t = 0; t < threads; ++t) {
            std::size_t b = std::min(u.size(), t * chunk), e = std::min(u.size(), b + chunk);
            pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    for (auto s : seeds) out[s] = 0;
}

std::vector<double> morphological_delta(const ProductGrid& g, const std::vector<std::size_t>& seeds, double clamp) {
    std::vector<double> u(g.size(), clamp);
    for (auto s : seeds) u[s] = 0;
    return u;
}

std::vector<double> iterate_step(const std::vector<double>& u, const CostField& cost, const ModelParams& params, double dt,
                                 double clamp, const std::vector<std::size_t>& seeds) {
    IterativeScheme scheme(cost, params);
    std::vector<double> out;
    scheme.step(u, out, dt, clamp, seeds);
    return out;
}

DistanceMap iterative_solve(const CostField& cost, const ModelParams& params, const std::vector<PointPO>& seeds,
                            const IterConfig& config, IterStats* stats) {
    auto t0 = std::chrono::steady_clock::now();
    if (seeds.empty()) throw DomainError("at least one seed is required");
    if (!(config.theta > 0)) throw DomainError("theta must be positive");
    if (config.dt < 0) throw DomainError("dt must be positive");
    IterativeScheme scheme(cost, params);
    const ProductGrid& g = cost.grid;
    std::vector<std::size_t> seed_nodes;
    for (const auto& sd : seeds) {
        if (sd.d != g.spatial.d) throw DomainError("seed dimension does not match the grid");
        std::size_t node = g.snap(sd);
        if (g.spatial.masked(g.spatial_of(node))) throw DomainError("seed lies on a masked node");
        seed_nodes.push_back(node);
    }
    IterStats local;
    IterStats& S = stats ? *stats : local;
    S = IterStats{};
    S.dt = config.dt > 0 ? config.dt : config.rule == DtRule::cfl ? scheme.cfl_dt() : scheme.monotone_dt();
    S.clamp = config.clamp > 0 ? config.clamp : scheme.default_clamp();
    const double clamp = S.clamp;

    std::vector<double> u = morphological_delta(g, seed_nodes, clamp), next;
    for (int it = 1; it <= config.max_outer; ++it) {
        scheme.step(u, next, S.dt, clamp, seed_nodes, config.threads);
        double change = 0, mx = 0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            double v = next[i];
            if (!std::isfinite(v) || v < -S.dt)
                throw InstabilityError("explicit iteration diverged at outer step " + std::to_string(it), S.dt / 2);
            change = std::max(change, std::abs(v - u[i]));
            mx = std::max(mx, v);
        }
        u.swap(next);
        S.outer = it;
        S.residual = change;
        S.max_history.push_back(mx);
        if (change < config.theta) break;
    }
    S.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!(S.residual < config.theta))
        throw ConvergenceError("iterative solver did not converge in " + std::to_string(config.max_outer) + " outer steps",
                               S.residual);

    DistanceMap U;
    U.grid = g;
    U.variant = params.variant;
    U.epsilon = params.epsilon;
    U.xi = cost.xi;
    U.backend = Backend::automatic;
    U.seeds = seeds;
    U.values = std::move(u);
    U.states.assign(g.size(), NodeState::accepted);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (U.values[i] >= clamp) {
            U.values[i] = std::numeric_limits<double>::infinity();
            U.states[i] = NodeState::far;
        }
    return U;
}

}  // namespace rseik
