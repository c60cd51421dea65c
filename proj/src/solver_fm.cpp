#include "rseik/solver_fm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <queue>
#include <sstream>

#include "rseik/errors.hpp"
#include "rseik/pogrid.hpp"

namespace rseik {

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

// Interior stationary point of sqrt(xi^T Q xi) + xi.u over the open simplex, k <= 3.
// Returns +inf when the minimum lies on the boundary (covered by sub-facets) or Q is degenerate.
double simplex_min(int k, const double Q[3][3], const double u[3], double xi[3]) {
    if (k == 1) {
        xi[0] = 1;
        return u[0] + std::sqrt(std::max(0.0, Q[0][0]));
    }
    double Qi[3][3];
    if (k == 2) {
        double det = Q[0][0] * Q[1][1] - Q[0][1] * Q[1][0];
        if (!(det > 1e-13 * Q[0][0] * Q[1][1])) return inf;
        Qi[0][0] = Q[1][1] / det;
        Qi[1][1] = Q[0][0] / det;
        Qi[0][1] = Qi[1][0] = -Q[0][1] / det;
    } else {
        double c00 = Q[1][1] * Q[2][2] - Q[1][2] * Q[2][1];
        double c01 = Q[1][2] * Q[2][0] - Q[1][0] * Q[2][2];
        double c02 = Q[1][0] * Q[2][1] - Q[1][1] * Q[2][0];
        double det = Q[0][0] * c00 + Q[0][1] * c01 + Q[0][2] * c02;
        if (!(det > 1e-13 * Q[0][0] * Q[1][1] * Q[2][2])) return inf;
        double id = 1.0 / det;
        Qi[0][0] = c00 * id;
        Qi[0][1] = Qi[1][0] = c01 * id;
        Qi[0][2] = Qi[2][0] = c02 * id;
        Qi[1][1] = (Q[0][0] * Q[2][2] - Q[0][2] * Q[2][0]) * id;
        Qi[1][2] = Qi[2][1] = (Q[0][2] * Q[1][0] - Q[0][0] * Q[1][2]) * id;
        Qi[2][2] = (Q[0][0] * Q[1][1] - Q[0][1] * Q[1][0]) * id;
    }
    double a = 0, b = 0, c = 0;
    double Qu[3] = {0, 0, 0}, Q1[3] = {0, 0, 0};
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            Q1[i] += Qi[i][j];
            Qu[i] += Qi[i][j] * u[j];
        }
    for (int i = 0; i < k; ++i) {
        a += Q1[i];
        b += Qu[i] * 1.0;
        c += u[i] * Qu[i];
    }
    double disc = b * b - a * (c - 1.0);
    if (!(a > 0) || !(disc > 0)) return inf;
    double s = std::sqrt(disc);
    double mu = (b + s) / a;
    for (int i = 0; i < k; ++i) {
        xi[i] = (mu * Q1[i] - Qu[i]) / s;
        if (xi[i] < -1e-12) return inf;
    }
    return mu;
}

struct BlockCheck {
    // Intermediate lattice points between 0 and w, excluding both ends.
    static std::vector<Eigen::Vector3i> through(const Eigen::Vector3i& w) {
        std::vector<Eigen::Vector3i> pts;
        int steps = 2 * w.cwiseAbs().maxCoeff();
        for (int t = 1; t < steps; ++t) {
            Eigen::Vector3d x = w.cast<double>() * (double(t) / steps);
            Eigen::Vector3i r(static_cast<int>(std::lround(x.x())), static_cast<int>(std::lround(x.y())),
                              static_cast<int>(std::lround(x.z())));
            if (r == Eigen::Vector3i::Zero() || r == w) continue;
            if (pts.empty() || pts.back() != r) pts.push_back(r);
        }
        return pts;
    }
};

class GridAccess {
public:
    explicit GridAccess(const ProductGrid& g) : g_(g), no_(g.sphere.size()), has_mask_(!g.spatial.mask.empty()) {}

    // Spatial index of s + w, -1 outside the grid, -2 if masked or if the segment crosses a wall.
    long offset(std::size_t s, const Eigen::Vector3i& w, const std::vector<Eigen::Vector3i>* through) const {
        auto c = g_.spatial.coords(s);
        int i = c[0] + w.x(), j = c[1] + w.y(), k = c[2] + w.z();
        if (!g_.spatial.inside(i, j, k)) return -1;
        std::size_t t = g_.spatial.index(i, j, k);
        if (has_mask_) {
            if (g_.spatial.masked(t)) return -2;
            if (through)
                for (const auto& r : *through)
                    if (g_.spatial.masked(g_.spatial.index(c[0] + r.x(), c[1] + r.y(), c[2] + r.z()))) return -2;
        }
        return static_cast<long>(t);
    }

    const ProductGrid& g_;
    int no_;
    bool has_mask_;
};

class SemiLagrangian2D final : public UpdateScheme {
public:
    SemiLagrangian2D(const CostField& cost, const ModelParams& params, int cap)
        : cost_(cost), acc_(cost.grid), params_(params) {
        const auto& g = cost.grid;
        no_ = g.sphere.size();
        h_ = g.spatial.h;
        dth_ = g.sphere.spacing;
        const double e = params.epsilon;
        fc_ = params.variant == Variant::forward ? 1.0 / (e * e) - 1.0 : 0.0;
        for (int k = 0; k < no_; ++k) {
            // U(p) is the distance from the seed to p, so the update reads F(p, p - q): the
            // asymmetric part is evaluated along the reversed orientation.
            const Vec3 n = -g.sphere.vertices[k];
            Orient o;
            o.fan = build_spatial_stencil_2d(spatial_norm_2d(params.variant, e, n), cap);
            o.Dinv = dn_matrix(n, e, 2).inverse();
            for (const auto& f : o.fan) {
                Eigen::Vector2d a = h_ * f.cast<double>();
                o.a.push_back(a);
                o.bn.push_back(a.dot(n.head<2>()));
                Eigen::Vector3i w(f.x(), f.y(), 0);
                o.w.push_back(w);
                o.through.push_back(BlockCheck::through(w));
            }
            orients_.push_back(std::move(o));
        }
    }

    double apply(std::size_t p, const std::vector<double>& u) const override {
        return evaluate(p, -1, u, nullptr);
    }

    double update(std::size_t p, int vi, const std::vector<double>& u, const std::vector<NodeState>& st) const override {
        return evaluate(p, vi, u, &st);
    }

    void dependents(std::size_t q, const std::function<void(std::size_t, int)>& f) const override {
        const auto& g = cost_.grid;
        std::size_t s = g.spatial_of(q);
        int k = g.orientation_of(q);
        const Orient& o = orients_[k];
        for (std::size_t j = 0; j < o.fan.size(); ++j) {
            long t = acc_.offset(s, -o.w[j], nullptr);
            if (t >= 0) f(g.node(t, k), static_cast<int>(j));
        }
        int kp = (k + 1) % no_, km = (k + no_ - 1) % no_;
        f(g.node(s, kp), static_cast<int>(orients_[kp].fan.size()) + 1);
        f(g.node(s, km), static_cast<int>(orients_[km].fan.size()));
    }

private:
    struct Orient {
        std::vector<Eigen::Vector2i> fan;
        std::vector<Eigen::Vector2d> a;
        std::vector<double> bn;
        std::vector<Eigen::Vector3i> w;
        std::vector<std::vector<Eigen::Vector3i>> through;
        Eigen::Matrix2d Dinv;
    };

    // Vertex local indices: 0..m-1 spatial fan, m = +dtheta, m+1 = -dtheta.
    double subset_value(const Orient& o, int m, double c1sq, double c2sq, int k, const int* vs, const double* uv) const {
        double best = inf;
        const int pieces = fc_ > 0 ? 2 : 1;
        double bnv[3];
        for (int i = 0; i < k; ++i) bnv[i] = vs[i] < m ? o.bn[vs[i]] : 0.0;
        for (int piece = 0; piece < pieces; ++piece) {
            double Q[3][3];
            for (int i = 0; i < k; ++i)
                for (int j = i; j < k; ++j) {
                    double q;
                    int a = vs[i], b = vs[j];
                    if (a < m && b < m) {
                        q = c1sq * o.a[a].dot(o.Dinv * o.a[b]);
                        if (piece == 1) q += c1sq * fc_ * bnv[i] * bnv[j];
                    } else if (a >= m && b >= m) {
                        q = c2sq * dth_ * dth_ * (a == b ? 1.0 : -1.0);
                    } else {
                        q = 0;
                    }
                    Q[i][j] = Q[j][i] = q;
                }
            double xi[3];
            double mu = simplex_min(k, Q, uv, xi);
            if (!(mu < best)) continue;
            double zn = 0, scale = 0;
            for (int i = 0; i < k; ++i) {
                zn += xi[i] * bnv[i];
                scale += std::abs(xi[i] * bnv[i]);
            }
            double tol = 1e-12 * scale;
            if (pieces == 2 && ((piece == 0 && zn < -tol) || (piece == 1 && zn > tol))) continue;
            best = mu;
        }
        return best;
    }

    double evaluate(std::size_t p, int vi, const std::vector<double>& u, const std::vector<NodeState>* st) const {
        const auto& g = cost_.grid;
        std::size_t s = g.spatial_of(p);
        int k = g.orientation_of(p);
        const Orient& o = orients_[k];
        const int m = static_cast<int>(o.fan.size());
        const double c1 = cost_.c1[p], c2 = cost_.c2[p];
        const double c1sq = c1 * c1, c2sq = c2 * c2;

        // Status per vertex: value (inf if unusable) and blocked flag.
        auto vertex = [&](int v, double& val, bool& blocked) {
            std::size_t node;
            blocked = false;
            if (v < m) {
                long t = acc_.offset(s, o.w[v], &o.through[v]);
                if (t == -2) {
                    blocked = true;
                    val = inf;
                    return;
                }
                if (t < 0) {
                    val = inf;
                    return;
                }
                node = g.node(t, k);
            } else {
                int kk = v == m ? (k + 1) % no_ : (k + no_ - 1) % no_;
                node = g.node(s, kk);
            }
            val = u[node];
            if (st && (*st)[node] != NodeState::accepted) val = inf;
        };

        double best = inf;
        auto facet = [&](int a, int b, int c) {
            int ids[3] = {a, b, c};
            double vals[3];
            bool blk;
            for (int i = 0; i < 3; ++i) {
                vertex(ids[i], vals[i], blk);
                if (blk) return;
            }
            // Enumerate non-empty subsets (containing vi when given) of finite vertices.
            for (int mask = 1; mask < 8; ++mask) {
                int vs[3];
                double uv[3];
                int cnt = 0;
                bool ok = true, has_vi = vi < 0;
                for (int i = 0; i < 3 && ok; ++i) {
                    if (!(mask & (1 << i))) continue;
                    if (!std::isfinite(vals[i])) ok = false;
                    if (ids[i] == vi) has_vi = true;
                    vs[cnt] = ids[i];
                    uv[cnt++] = vals[i];
                }
                if (!ok || !has_vi) continue;
                best = std::min(best, subset_value(o, m, c1sq, c2sq, cnt, vs, uv));
            }
        };
        if (vi < 0) {
            for (int j = 0; j < m; ++j) {
                facet(j, (j + 1) % m, m);
                facet(j, (j + 1) % m, m + 1);
            }
        } else if (vi < m) {
            int jm = (vi + m - 1) % m, jp = (vi + 1) % m;
            for (int th : {m, m + 1}) {
                facet(jm, vi, th);
                facet(vi, jp, th);
            }
        } else {
            for (int j = 0; j < m; ++j) facet(j, (j + 1) % m, vi);
        }
        return best;
    }

    const CostField& cost_;
    GridAccess acc_;
    ModelParams params_;
    int no_;
    double h_, dth_, fc_;
    std::vector<Orient> orients_;
};

class HamiltonianScheme final : public UpdateScheme {
public:
    HamiltonianScheme(const CostField& cost, const ModelParams& params) : cost_(cost), acc_(cost.grid), params_(params) {
        const auto& g = cost.grid;
        no_ = g.sphere.size();
        h_ = g.spatial.h;
        sym_ = params.variant == Variant::symmetric;
        eps2_ = params.epsilon * params.epsilon;
        auto schemes = build_offset_schemes(g.sphere, params.epsilon);
        for (auto& sc : schemes) {
            Orient o;
            for (auto& pr : sc.pairs) {
                if (!(pr.rho > 0)) continue;
                o.w.push_back(pr.w);
                o.rho.push_back(pr.rho);
                o.through.push_back(BlockCheck::through(pr.w));
            }
            orients_.push_back(std::move(o));
        }
        weights_ = angular_upwind_weights(g.sphere);
        // Reverse angular adjacency: which orientations read orientation k.
        readers_.resize(no_);
        for (int k = 0; k < no_; ++k)
            for (auto& [j, w] : weights_[k]) readers_[j].push_back(k);
    }

    double apply(std::size_t p, const std::vector<double>& u) const override { return evaluate(p, u, nullptr); }

    double update(std::size_t p, int, const std::vector<double>& u, const std::vector<NodeState>& st) const override {
        return evaluate(p, u, &st);
    }

    void dependents(std::size_t q, const std::function<void(std::size_t, int)>& f) const override {
        const auto& g = cost_.grid;
        std::size_t s = g.spatial_of(q);
        int k = g.orientation_of(q);
        const Orient& o = orients_[k];
        for (std::size_t i = 0; i < o.w.size(); ++i) {
            long t = acc_.offset(s, o.w[i], nullptr);
            if (t >= 0) f(g.node(t, k), static_cast<int>(i));
            long t2 = acc_.offset(s, -o.w[i], nullptr);
            if (t2 >= 0) f(g.node(t2, k), static_cast<int>(o.w.size() + i));
        }
        for (int r : readers_[k]) f(g.node(s, r), -1);
    }

private:
    struct Orient {
        std::vector<Eigen::Vector3i> w;
        std::vector<double> rho;
        std::vector<std::vector<Eigen::Vector3i>> through;
    };

    double evaluate(std::size_t p, const std::vector<double>& u, const std::vector<NodeState>* st) const {
        const auto& g = cost_.grid;
        std::size_t s = g.spatial_of(p);
        int k = g.orientation_of(p);
        const Orient& o = orients_[k];
        auto value = [&](std::size_t node) {
            if (st && (*st)[node] != NodeState::accepted) return inf;
            return u[node];
        };
        const double ic1 = 1.0 / (cost_.c1[p] * cost_.c1[p] * h_ * h_);
        const double ic2 = 1.0 / (cost_.c2[p] * cost_.c2[p]);
        std::pair<double, double> terms[64];
        int nt = 0;
        for (std::size_t i = 0; i < o.w.size(); ++i) {
            long t = acc_.offset(s, -o.w[i], &o.through[i]);
            long t2 = acc_.offset(s, o.w[i], &o.through[i]);
            double v = t >= 0 ? value(g.node(t, k)) : inf;
            double v2 = t2 >= 0 ? value(g.node(t2, k)) : inf;
            if (sym_) {
                v = std::min(v, v2);
            } else if (std::isfinite(v2)) {
                // Reverse gear: eps^2 (n.p)_-^2 term of the forward dual.
                terms[nt++] = {v2, eps2_ * o.rho[i] * ic1};
            }
            if (std::isfinite(v)) terms[nt++] = {v, o.rho[i] * ic1};
        }
        for (auto& [j, w] : weights_[k]) {
            double v = value(g.node(s, j));
            if (std::isfinite(v) && nt < 64) terms[nt++] = {v, w * ic2};
        }
        if (nt == 0) return inf;
        std::sort(terms, terms + nt);
        double A = 0, B = 0, C = 0, lam = inf;
        for (int i = 0; i < nt; ++i) {
            double v = terms[i].first, c = terms[i].second;
            A += c;
            B += c * v;
            C += c * v * v;
            double disc = B * B - A * (C - 1.0);
            lam = (B + std::sqrt(std::max(0.0, disc))) / A;
            if (i + 1 == nt || lam <= terms[i + 1].first) break;
        }
        return lam;
    }

    const CostField& cost_;
    GridAccess acc_;
    ModelParams params_;
    int no_;
    double h_, eps2_;
    bool sym_;
    std::vector<Orient> orients_;
    AngularWeights weights_;
    std::vector<std::vector<int>> readers_;
};

}  // namespace

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::semi_lagrangian: return "semi_lagrangian";
        case Backend::hamiltonian_fd: return "hamiltonian_fd";
        default: return "auto";
    }
}

Backend parse_backend(const std::string& s) {
    if (s == "semi_lagrangian") return Backend::semi_lagrangian;
    if (s == "hamiltonian_fd") return Backend::hamiltonian_fd;
    if (s == "auto") return Backend::automatic;
    throw DomainError("unknown backend '" + s + "' (expected semi_lagrangian, hamiltonian_fd or auto)");
}

Backend resolve_backend(Backend b, int d) {
    if (b == Backend::automatic) return d == 2 ? Backend::semi_lagrangian : Backend::hamiltonian_fd;
    if (b == Backend::semi_lagrangian && d == 3)
        throw DomainError("semi-Lagrangian stencils are not available for d = 3; use the hamiltonian_fd backend");
    return b;
}

std::unique_ptr<UpdateScheme> make_scheme(const CostField& cost, const ModelParams& params, Backend backend, int cap) {
    params.validate();
    if (!(params.epsilon > 0)) throw DomainError("the solvers require epsilon > 0");
    cost.validate();
    Backend b = resolve_backend(backend, cost.grid.spatial.d);
    if ((cost.grid.spatial.d == 2) != (cost.grid.sphere.kind == SphereKind::s1_uniform))
        throw DomainError("sphere tessellation does not match the spatial dimension");
    if (b == Backend::semi_lagrangian) return std::make_unique<SemiLagrangian2D>(cost, params, cap);
    return std::make_unique<HamiltonianScheme>(cost, params);
}

DistanceMap fast_march(const CostField& cost, const ModelParams& params, const std::vector<PointPO>& seeds,
                       const SolveConfig& config, SolveStats* stats) {
    auto t0 = std::chrono::steady_clock::now();
    if (seeds.empty()) throw DomainError("at least one seed is required");
    auto scheme = make_scheme(cost, params, config.backend, config.offset_cap);
    const ProductGrid& g = cost.grid;
    DistanceMap U;
    U.grid = g;
    U.variant = params.variant;
    U.epsilon = params.epsilon;
    U.xi = cost.xi;
    U.backend = resolve_backend(config.backend, g.spatial.d);
    U.seeds = seeds;
    U.values.assign(g.size(), inf);
    U.states.assign(g.size(), NodeState::far);
    SolveStats local;
    SolveStats& S = stats ? *stats : local;
    S = SolveStats{};

    using Entry = std::pair<double, std::size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
    for (const auto& sd : seeds) {
        if (sd.d != g.spatial.d) throw DomainError("seed dimension does not match the grid");
        std::size_t node = g.snap(sd);
        if (g.spatial.masked(g.spatial_of(node))) throw DomainError("seed lies on a masked node");
        U.values[node] = 0;
        U.states[node] = NodeState::trial;
        heap.push({0.0, node});
        ++S.pushes;
    }
    std::vector<std::uint8_t> is_stop;
    std::size_t stop_left = 0;
    if (!config.stop.empty()) {
        is_stop.assign(g.size(), 0);
        for (const auto& sp : config.stop) {
            std::size_t node = g.snap(sp);
            if (!is_stop[node]) {
                is_stop[node] = 1;
                ++stop_left;
            }
        }
    }
    auto& values = U.values;
    auto& states = U.states;
    const bool masked = !g.spatial.mask.empty();
    while (!heap.empty()) {
        auto [v, q] = heap.top();
        heap.pop();
        ++S.pops;
        if (states[q] == NodeState::accepted || v > values[q]) continue;
        states[q] = NodeState::accepted;
        ++S.accepted;
        if (config.record_order) S.order.push_back(q);
        if (stop_left && is_stop[q] && --stop_left == 0) break;
        scheme->dependents(q, [&](std::size_t p, int vi) {
            if (states[p] == NodeState::accepted) return;
            if (masked && g.spatial.masked(g.spatial_of(p))) return;
            // Causal updates never undercut the accepted value; the clamp only absorbs round-off.
            double c = std::max(scheme->update(p, vi, values, states), v);
            ++S.updates;
            if (c < values[p]) {
                values[p] = c;
                states[p] = NodeState::trial;
                heap.push({c, p});
                ++S.pushes;
            }
        });
    }
    S.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return U;
}

double interpolate_field(const ProductGrid& g, const std::vector<double>& values, const PointPO& p) {
    const auto& sp = g.spatial;
    Vec3 x = sp.to_grid(p.x);
    int lo[3] = {0, 0, 0};
    double fr[3] = {0, 0, 0};
    for (int a = 0; a < sp.d; ++a) {
        double c = std::clamp(x(a), 0.0, double(sp.dims[a] - 1));
        lo[a] = std::min(static_cast<int>(std::floor(c)), std::max(0, sp.dims[a] - 2));
        fr[a] = c - lo[a];
    }
    auto ang = g.sphere.interpolation(p.n);
    double num = 0, den = 0;
    const int corners = 1 << sp.d;
    for (int m = 0; m < corners; ++m) {
        int c[3] = {0, 0, 0};
        double w = 1;
        for (int a = 0; a < sp.d; ++a) {
            int bit = (m >> a) & 1;
            c[a] = std::min(lo[a] + bit, sp.dims[a] - 1);
            w *= bit ? fr[a] : 1 - fr[a];
        }
        if (w <= 0) continue;
        std::size_t s = sp.index(c[0], c[1], c[2]);
        for (auto& [o, wa] : ang) {
            double v = values[g.node(s, o)];
            if (!std::isfinite(v) || wa <= 0) continue;
            num += w * wa * v;
            den += w * wa;
        }
    }
    return den > 0 ? num / den : inf;
}

double DistanceMap::interpolate(const PointPO& p) const { return interpolate_field(grid, values, p); }

nlohmann::json DistanceMap::metadata() const {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& p : seeds) {
        nlohmann::json e = nlohmann::json::array();
        for (int i = 0; i < p.d; ++i) e.push_back(p.x(i));
        for (int i = 0; i < p.d; ++i) e.push_back(p.n(i));
        s.push_back(e);
    }
    return {{"variant", variant_name(variant)}, {"epsilon", epsilon}, {"xi", xi}, {"backend", backend_name(backend)}, {"seeds", s}};
}

std::string encode_distance(const DistanceMap& U) { return encode_pogrid(U.grid, "distance", {&U.values}, U.metadata()); }

DistanceMap decode_distance(const std::string& bytes) {
    PogridData d = decode_pogrid(bytes);
    if (d.quantity != "distance") throw ParseError("expected quantity 'distance', found '" + d.quantity + "'");
    DistanceMap U;
    U.grid = std::move(d.grid);
    U.values = std::move(d.channels.at(0));
    U.states.assign(U.values.size(), NodeState::far);
    for (std::size_t i = 0; i < U.values.size(); ++i)
        if (std::isfinite(U.values[i])) U.states[i] = NodeState::accepted;
    try {
        U.variant = parse_variant(d.header.value("variant", std::string("symmetric")));
        U.epsilon = d.header.value("epsilon", 0.1);
        U.xi = d.header.value("xi", 1.0);
        U.backend = parse_backend(d.header.value("backend", std::string("auto")));
        if (d.header.contains("seeds"))
            for (const auto& e : d.header.at("seeds")) {
                auto v = e.get<std::vector<double>>();
                int dd = U.grid.spatial.d;
                if (static_cast<int>(v.size()) != 2 * dd) throw ParseError("header: malformed seed entry");
                Vec3 x = Vec3::Zero(), n = Vec3::Zero();
                for (int i = 0; i < dd; ++i) {
                    x(i) = v[i];
                    n(i) = v[dd + i];
                }
                U.seeds.push_back(PointPO::make(dd, x, n));
            }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("header metadata malformed: ") + e.what());
    }
    return U;
}

void store_distance(const std::string& path, const DistanceMap& U) { write_file(path, encode_distance(U)); }
DistanceMap load_distance(const std::string& path) { return decode_distance(read_file(path)); }

HopfLaxResult hopf_lax_update(const std::vector<std::vector<HopfLaxVertex>>& facets, const QuadNorm& F) {
    HopfLaxResult res;
    const bool has_w = F.w.size() > 0 && F.w.norm() > 0;
    Eigen::MatrixXd M2 = F.M;
    if (has_w) M2 += F.w * F.w.transpose();
    for (std::size_t fi = 0; fi < facets.size(); ++fi) {
        const auto& f = facets[fi];
        const int kf = static_cast<int>(f.size());
        if (kf < 1 || kf > 3) throw DomainError("facets must have 1 to 3 vertices");
        for (int mask = 1; mask < (1 << kf); ++mask) {
            int idx[3], k = 0;
            bool ok = true;
            for (int i = 0; i < kf; ++i)
                if (mask & (1 << i)) {
                    if (!std::isfinite(f[i].value)) ok = false;
                    idx[k++] = i;
                }
            if (!ok) continue;
            double u[3], bw[3];
            for (int i = 0; i < k; ++i) {
                u[i] = f[idx[i]].value;
                bw[i] = has_w ? F.w.dot(f[idx[i]].offset) : 0.0;
            }
            for (int piece = 0; piece < (has_w ? 2 : 1); ++piece) {
                const Eigen::MatrixXd& M = piece == 0 ? F.M : M2;
                double Q[3][3], xi[3];
                for (int i = 0; i < k; ++i)
                    for (int j = 0; j < k; ++j) Q[i][j] = f[idx[i]].offset.dot(M * f[idx[j]].offset);
                double mu = simplex_min(k, Q, u, xi);
                if (!(mu < res.value)) continue;
                double zw = 0, scale = 0;
                for (int i = 0; i < k; ++i) {
                    zw += xi[i] * bw[i];
                    scale += std::abs(xi[i] * bw[i]);
                }
                if (has_w && ((piece == 0 && zw < -1e-12 * scale) || (piece == 1 && zw > 1e-12 * scale))) continue;
                res.value = mu;
                res.facet = static_cast<int>(fi);
                res.weights.assign(kf, 0.0);
                for (int i = 0; i < k; ++i) res.weights[idx[i]] = std::max(0.0, xi[i]);
            }
        }
    }
    return res;
}

double solve_positive_part_quadratic(std::vector<std::pair<double, double>> terms) {
    std::vector<std::pair<double, double>> t;
    for (auto& [c, v] : terms)
        if (std::isfinite(v) && c > 0) t.push_back({v, c});
    if (t.empty()) return inf;
    std::sort(t.begin(), t.end());
    double A = 0, B = 0, C = 0, lam = inf;
    for (std::size_t i = 0; i < t.size(); ++i) {
        A += t[i].second;
        B += t[i].second * t[i].first;
        C += t[i].second * t[i].first * t[i].first;
        lam = (B + std::sqrt(std::max(0.0, B * B - A * (C - 1.0)))) / A;
        if (i + 1 == t.size() || lam <= t[i + 1].first) break;
    }
    return lam;
}

double hamiltonian_update_3d(const std::vector<HamiltonianTerm>& spatial, const std::vector<HamiltonianTerm>& angular) {
    std::vector<std::pair<double, double>> t;
    for (auto& s : spatial) t.push_back({s.coef, s.value});
    for (auto& a : angular) t.push_back({a.coef, a.value});
    return solve_positive_part_quadratic(t);
}

CausalityReport check_causality(std::size_t n, const std::function<std::vector<double>(const std::vector<double>&)>& op,
                                std::size_t trials, std::mt19937_64& rng, double value_scale) {
    CausalityReport rep;
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (std::size_t tr = 0; tr < trials; ++tr) {
        std::vector<double> u(n);
        for (auto& x : u) x = uni(rng) < 0.1 ? inf : value_scale * uni(rng);
        double t = value_scale * uni(rng);
        std::vector<double> v = u;
        for (auto& x : v)
            if (x >= t) x = uni(rng) < 0.2 ? inf : t + value_scale * uni(rng);
        auto a = op(u), b = op(v);
        ++rep.trials;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if ((a[i] <= t || b[i] <= t) && a[i] != b[i]) {
                ++rep.violations;
                if (rep.witness.empty()) {
                    std::ostringstream os;
                    os.precision(17);
                    os << "trial " << tr << ", node " << i << ", threshold " << t << ": " << a[i] << " vs " << b[i];
                    rep.witness = os.str();
                }
                break;
            }
        }
    }
    return rep;
}

ResidualStats eikonal_residual(const DistanceMap& U, const CostField& cost, const ModelParams& params, int margin) {
    const ProductGrid& g = U.grid;
    const auto& sp = g.spatial;
    const int no = g.sphere.size();
    const double h = sp.h;
    std::vector<double> res;
    std::vector<Vec3> seed_x;
    for (auto& s : U.seeds) seed_x.push_back(s.x);
    auto near_mask = [&](const std::array<int, 3>& c) {
        if (sp.mask.empty()) return false;
        int kz = sp.d == 3 ? margin : 0;
        for (int dk = -kz; dk <= kz; ++dk)
            for (int dj = -margin; dj <= margin; ++dj)
                for (int di = -margin; di <= margin; ++di) {
                    int i = c[0] + di, j = c[1] + dj, k = c[2] + dk;
                    if (sp.inside(i, j, k) && sp.masked(sp.index(i, j, k))) return true;
                }
        return false;
    };
    for (std::size_t s = 0; s < sp.size(); ++s) {
        auto c = sp.coords(s);
        bool inner = true;
        for (int a = 0; a < sp.d; ++a) inner = inner && c[a] >= margin && c[a] < sp.dims[a] - margin;
        if (!inner) continue;
        Vec3 x = sp.position(s);
        bool far_seed = true;
        for (auto& sx : seed_x) far_seed = far_seed && (x - sx).norm() > margin * h;
        if (!far_seed || near_mask(c)) continue;
        for (int o = 0; o < no; ++o) {
            std::size_t node = g.node(s, o);
            double u0 = U.values[node];
            if (!std::isfinite(u0)) continue;
            Vec3 xh = Vec3::Zero();
            bool ok = true;
            for (int a = 0; a < sp.d && ok; ++a) {
                std::array<int, 3> cm = c, cp = c;
                cm[a] -= 1;
                cp[a] += 1;
                double um = U.values[g.node(sp.index(cm[0], cm[1], cm[2]), o)];
                double up = U.values[g.node(sp.index(cp[0], cp[1], cp[2]), o)];
                if (!std::isfinite(um) || !std::isfinite(up)) ok = false;
                if (um <= up && um < u0)
                    xh(a) = (u0 - um) / h;
                else if (up < u0)
                    xh(a) = (up - u0) / h;
            }
            if (!ok) continue;
            PointPO p = g.point(node);
            Vec3 nh = Vec3::Zero();
            if (sp.d == 2) {
                double um = U.values[g.node(s, (o + no - 1) % no)], up = U.values[g.node(s, (o + 1) % no)];
                if (!std::isfinite(um) || !std::isfinite(up)) continue;
                double dth = g.sphere.spacing, d = 0;
                if (um <= up && um < u0)
                    d = (u0 - um) / dth;
                else if (up < u0)
                    d = (up - u0) / dth;
                nh = d * Vec3(-p.n.y(), p.n.x(), 0);
            } else {
                Eigen::MatrixXd A(g.sphere.adjacency[o].size(), 3);
                Eigen::VectorXd b(A.rows());
                int r = 0;
                for (int j : g.sphere.adjacency[o]) {
                    double uj = U.values[g.node(s, j)];
                    if (!std::isfinite(uj)) {
                        ok = false;
                        break;
                    }
                    A.row(r) = log_map(p.n, g.sphere.vertices[j]).transpose();
                    b(r++) = uj - u0;
                }
                if (!ok) continue;
                nh = A.colPivHouseholderQr().solve(b);
            }
            double fs = dual_cost(params, cost.at(node), p, make_cotangent(p, xh, nh));
            res.push_back(std::abs(fs - 1.0));
        }
    }
    ResidualStats st;
    st.count = res.size();
    if (res.empty()) return st;
    std::sort(res.begin(), res.end());
    st.median = res[res.size() / 2];
    st.p90 = res[std::min(res.size() - 1, res.size() * 9 / 10)];
    return st;
}

}  // namespace rseik
