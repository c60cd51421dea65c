#include "rseik/tessellation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "rseik/errors.hpp"

namespace rseik {

SpatialGrid SpatialGrid::make(int d, std::array<int, 3> dims, double h, const Vec3& origin) {
    if (d != 2 && d != 3) throw DomainError("dimension must be 2 or 3");
    if (!(h > 0) || !std::isfinite(h)) throw DomainError("grid scale h must be positive");
    if (d == 2) dims[2] = 1;
    for (int i = 0; i < d; ++i)
        if (dims[i] < 2) throw DomainError("grid extents must be at least 2");
    SpatialGrid g;
    g.d = d;
    g.dims = dims;
    g.h = h;
    g.origin = origin;
    if (d == 2) g.origin.z() = 0;
    return g;
}

std::array<int, 3> SpatialGrid::coords(std::size_t s) const {
    int i = static_cast<int>(s % dims[0]);
    s /= dims[0];
    int j = static_cast<int>(s % dims[1]);
    int k = static_cast<int>(s / dims[1]);
    return {i, j, k};
}

Vec3 SpatialGrid::position(std::size_t s) const {
    auto c = coords(s);
    return origin + h * Vec3(c[0], c[1], c[2]);
}

double SpatialGrid::diameter() const {
    double s = 0;
    for (int i = 0; i < d; ++i) s += std::pow(h * (dims[i] - 1), 2);
    return std::sqrt(s);
}

const char* sphere_kind_name(SphereKind k) { return k == SphereKind::s1_uniform ? "s1_uniform" : "s2_icosphere"; }

int SphereGrid::nearest(const Vec3& n) const {
    int best = 0;
    double bd = -2;
    for (int i = 0; i < size(); ++i) {
        double c = vertices[i].dot(n);
        if (c > bd) {
            bd = c;
            best = i;
        }
    }
    return best;
}

std::vector<std::pair<int, double>> SphereGrid::interpolation(const Vec3& n) const {
    if (kind == SphereKind::s1_uniform) {
        const int N = size();
        double a = std::atan2(n.y(), n.x()) / spacing;
        double fl = std::floor(a);
        double t = a - fl;
        int i0 = ((static_cast<int>(fl) % N) + N) % N;
        return {{i0, 1 - t}, {(i0 + 1) % N, t}};
    }
    int v = nearest(n);
    std::vector<std::pair<int, double>> best;
    double best_min = -1e300;
    auto try_triangle = [&](const std::array<int, 3>& tri) {
        Eigen::Matrix3d A;
        for (int c = 0; c < 3; ++c) A.col(c) = vertices[tri[c]];
        Eigen::Vector3d b = A.partialPivLu().solve(n);
        double s = b.sum();
        if (!(s > 0)) return;
        b /= s;
        double mn = b.minCoeff();
        if (mn > best_min) {
            best_min = mn;
            best = {{tri[0], b(0)}, {tri[1], b(1)}, {tri[2], b(2)}};
        }
    };
    for (const auto& tri : triangles)
        if (tri[0] == v || tri[1] == v || tri[2] == v) try_triangle(tri);
    if (best_min < -1e-9)
        for (const auto& tri : triangles) try_triangle(tri);
    for (auto& [i, w] : best) w = std::max(0.0, w);
    double s = 0;
    for (auto& [i, w] : best) s += w;
    for (auto& [i, w] : best) w /= s;
    return best;
}

SphereGrid build_s1(int N) {
    if (N < 4) throw DomainError("s1 discretization needs at least 4 orientations");
    SphereGrid g;
    g.kind = SphereKind::s1_uniform;
    g.level_or_count = N;
    g.spacing = 2 * std::numbers::pi / N;
    for (int i = 0; i < N; ++i) {
        double a = g.spacing * i;
        g.vertices.emplace_back(std::cos(a), std::sin(a), 0);
        g.adjacency.push_back({(i + N - 1) % N, (i + 1) % N});
    }
    return g;
}

SphereGrid build_s2_icosphere(int k) {
    if (k < 0) throw DomainError("refinement level must be nonnegative");
    const double phi = (1 + std::sqrt(5.0)) / 2;
    std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
                           {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1},  {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
    for (auto& x : v) x.normalize();
    std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int level = 0; level < k; ++level) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            int id = static_cast<int>(v.size()) - 1;
            mid.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> nf;
        nf.reserve(f.size() * 4);
        for (auto& t : f) {
            int a = midpoint(t[0], t[1]), b = midpoint(t[1], t[2]), c = midpoint(t[2], t[0]);
            nf.push_back({t[0], a, c});
            nf.push_back({t[1], b, a});
            nf.push_back({t[2], c, b});
            nf.push_back({a, b, c});
        }
        f = std::move(nf);
    }
    SphereGrid g;
    g.kind = SphereKind::s2_icosphere;
    g.level_or_count = k;
    g.vertices = v;
    g.triangles = f;
    std::vector<std::set<int>> adj(v.size());
    double total = 0;
    int edges = 0;
    for (auto& t : f)
        for (int e = 0; e < 3; ++e) {
            int a = t[e], b = t[(e + 1) % 3];
            if (adj[a].insert(b).second) {
                adj[b].insert(a);
                total += std::acos(std::clamp(v[a].dot(v[b]), -1.0, 1.0));
                ++edges;
            }
        }
    for (auto& s : adj) g.adjacency.emplace_back(s.begin(), s.end());
    g.spacing = total / edges;
    return g;
}

bool triangle_is_acute(const Vec3& a, const Vec3& b, const Vec3& c) {
    return (b - a).dot(c - a) > 0 && (a - b).dot(c - b) > 0 && (a - c).dot(b - c) > 0;
}

PointPO ProductGrid::point(std::size_t node) const {
    return PointPO::make(spatial.d, spatial.position(spatial_of(node)), sphere.vertices[orientation_of(node)]);
}

std::size_t ProductGrid::snap(const PointPO& p) const {
    Vec3 g = spatial.to_grid(p.x);
    std::array<int, 3> c{0, 0, 0};
    for (int i = 0; i < spatial.d; ++i) {
        if (!(g(i) >= -0.5 && g(i) <= spatial.dims[i] - 0.5)) throw DomainError("state lies outside the grid");
        c[i] = std::clamp(static_cast<int>(std::lround(g(i))), 0, spatial.dims[i] - 1);
    }
    return node(spatial.index(c[0], c[1], c[2]), sphere.nearest(p.n));
}

namespace {

template <int N>
void check_spd(const Eigen::Matrix<double, N, N>& D) {
    if ((D - D.transpose()).norm() > 1e-12 * D.norm()) throw DomainError("matrix is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(D);
    double lo = es.eigenvalues().minCoeff(), hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0)) throw DomainError("matrix is not positive definite");
    if (hi / lo > 1e9) throw DomainError("matrix condition number exceeds 1e9");
}

constexpr int selling_cap = 1000;

}  // namespace

std::array<SellingPair, 6> selling_decompose(const Eigen::Matrix3d& D) {
    check_spd<3>(D);
    std::array<Eigen::Vector3i, 4> e = {Eigen::Vector3i(1, 0, 0), Eigen::Vector3i(0, 1, 0), Eigen::Vector3i(0, 0, 1),
                                        Eigen::Vector3i(-1, -1, -1)};
    auto dot = [&](int i, int j) { return e[i].cast<double>().dot(D * e[j].cast<double>()); };
    static constexpr int pairs[6][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2}, {1, 2, 0, 3}, {1, 3, 0, 2}, {2, 3, 0, 1}};
    int iter = 0;
    for (;; ++iter) {
        if (iter >= selling_cap) {
            std::ostringstream os;
            os << "superbase reduction did not converge for D =\n" << D;
            throw AlgorithmError(os.str());
        }
        bool changed = false;
        for (const auto& pr : pairs) {
            int i = pr[0], j = pr[1], k = pr[2], l = pr[3];
            if (dot(i, j) > 0) {
                Eigen::Vector3i ei = e[i];
                e[i] = -ei;
                e[k] += ei;
                e[l] += ei;
                changed = true;
                break;
            }
        }
        if (!changed) break;
    }
    std::array<SellingPair, 6> out;
    for (int p = 0; p < 6; ++p) {
        int i = pairs[p][0], j = pairs[p][1], k = pairs[p][2], l = pairs[p][3];
        out[p].rho = -dot(i, j);
        out[p].w = e[k].cross(e[l]);
    }
    return out;
}

std::array<SellingPair, 3> selling_decompose_2d(const Eigen::Matrix2d& D) {
    check_spd<2>(D);
    std::array<Eigen::Vector2i, 3> e = {Eigen::Vector2i(1, 0), Eigen::Vector2i(0, 1), Eigen::Vector2i(-1, -1)};
    auto dot = [&](int i, int j) { return e[i].cast<double>().dot(D * e[j].cast<double>()); };
    static constexpr int pairs[3][3] = {{0, 1, 2}, {0, 2, 1}, {1, 2, 0}};
    for (int iter = 0;; ++iter) {
        if (iter >= selling_cap) {
            std::ostringstream os;
            os << "superbase reduction did not converge for D =\n" << D;
            throw AlgorithmError(os.str());
        }
        bool changed = false;
        for (const auto& pr : pairs) {
            int i = pr[0], j = pr[1], k = pr[2];
            if (dot(i, j) > 0) {
                Eigen::Vector2i ei = e[i], ej = e[j];
                e[i] = -ei;
                e[k] = ei - ej;
                changed = true;
                break;
            }
        }
        if (!changed) break;
    }
    std::array<SellingPair, 3> out;
    for (int p = 0; p < 3; ++p) {
        int i = pairs[p][0], j = pairs[p][1], k = pairs[p][2];
        out[p].rho = -dot(i, j);
        out[p].w = Eigen::Vector3i(-e[k].y(), e[k].x(), 0);
    }
    return out;
}

OffsetScheme orient_offsets(int orientation, const Vec3& n, const std::vector<SellingPair>& pairs) {
    OffsetScheme s;
    s.orientation = orientation;
    s.pairs = pairs;
    for (auto& p : s.pairs)
        if (n.dot(p.w.cast<double>()) < 0) p.w = -p.w;
    return s;
}

std::vector<OffsetScheme> build_offset_schemes(const SphereGrid& sphere, double eps) {
    std::vector<OffsetScheme> out;
    out.reserve(sphere.vertices.size());
    for (int o = 0; o < sphere.size(); ++o) {
        const Vec3& n = sphere.vertices[o];
        std::vector<SellingPair> pairs;
        if (sphere.dim() == 3) {
            Eigen::Matrix3d D = dn_matrix(n, eps, 3);
            auto a = selling_decompose(D);
            pairs.assign(a.begin(), a.end());
        } else {
            Eigen::Matrix2d D = dn_matrix(n, eps, 2);
            auto a = selling_decompose_2d(D);
            pairs.assign(a.begin(), a.end());
        }
        out.push_back(orient_offsets(o, n, pairs));
    }
    return out;
}

QuadNorm spatial_norm_2d(Variant variant, double eps, const Vec3& n) {
    if (!(eps > 0) || eps > 1) throw DomainError("epsilon must lie in (0, 1]");
    QuadNorm F;
    F.M = dn_matrix(n, eps, 2).inverse();
    F.w = Eigen::VectorXd::Zero(2);
    if (variant == Variant::forward) F.w = std::sqrt(1.0 / (eps * eps) - 1.0) * n.head(2);
    return F;
}

namespace {

bool pair_acute(const Eigen::VectorXd& u, const Eigen::VectorXd& v, const QuadNorm& F, double tol) {
    return F.gradient(u).dot(v) >= -tol * v.norm() && F.gradient(v).dot(u) >= -tol * u.norm();
}

}  // namespace

std::vector<Eigen::Vector2i> build_spatial_stencil_2d(const QuadNorm& F, int cap) {
    if (F.M.rows() != 2) throw DomainError("spatial stencil requires a planar metric");
    const std::array<Eigen::Vector2i, 4> base = {Eigen::Vector2i(1, 0), Eigen::Vector2i(0, 1), Eigen::Vector2i(-1, 0),
                                                 Eigen::Vector2i(0, -1)};
    std::vector<Eigen::Vector2i> fan;
    for (int b = 0; b < 4; ++b) {
        // Depth-first refinement keeps the fan in angular order.
        std::vector<std::pair<Eigen::Vector2i, Eigen::Vector2i>> stack{{base[b], base[(b + 1) % 4]}};
        while (!stack.empty()) {
            auto [u, v] = stack.back();
            stack.pop_back();
            if (pair_acute(u.cast<double>(), v.cast<double>(), F, 1e-12)) {
                fan.push_back(u);
                continue;
            }
            Eigen::Vector2i m = u + v;
            if (m.cast<double>().norm() > cap)
                throw StencilError("stencil offsets exceed the cap " + std::to_string(cap) +
                                   "; use a larger epsilon or a larger cap");
            stack.push_back({m, v});
            stack.push_back({u, m});
        }
    }
    return fan;
}

bool acuteness_check(const std::vector<Eigen::VectorXd>& facet, const QuadNorm& F, double tol) {
    for (size_t i = 0; i < facet.size(); ++i)
        for (size_t j = 0; j < facet.size(); ++j)
            if (i != j && F.gradient(facet[i]).dot(facet[j]) < -tol * facet[j].norm()) return false;
    return true;
}

bool acuteness_check(const std::vector<Eigen::VectorXd>& facet,
                     const std::function<double(const Eigen::VectorXd&)>& F, double tol) {
    for (size_t i = 0; i < facet.size(); ++i) {
        const Eigen::VectorXd& q = facet[i];
        for (size_t j = 0; j < facet.size(); ++j) {
            if (i == j) continue;
            // One-sided Richardson differences on both sides, so that a kink in the second derivative
            // at q (positive-part norms) does not bias the estimate.
            const Eigen::VectorXd& r = facet[j];
            double s = 1e-6 * q.norm() / std::max(1e-300, r.norm());
            double f0 = F(q);
            auto fwd = [&](double t) { return (F(q + t * r) - f0) / t; };
            auto bwd = [&](double t) { return (f0 - F(q - t * r)) / t; };
            double deriv = 0.5 * ((2 * fwd(s / 2) - fwd(s)) + (2 * bwd(s / 2) - bwd(s)));
            double scale = f0 / std::max(1e-300, q.norm()) * r.norm();
            if (deriv < -tol * scale) return false;
        }
    }
    return true;
}

SLStencil product_stencil(int orientation, const std::vector<Eigen::Vector2i>& spatial_offsets,
                          const std::vector<std::vector<int>>& spatial_facets, const std::vector<int>& angular_steps,
                          const std::vector<std::vector<int>>& angular_facets) {
    SLStencil st;
    st.orientation = orientation;
    for (const auto& o : spatial_offsets) st.vertices.push_back({o, 0});
    const int ns = static_cast<int>(spatial_offsets.size());
    for (int a : angular_steps) st.vertices.push_back({Eigen::Vector2i::Zero(), a});
    for (const auto& sf : spatial_facets)
        for (const auto& af : angular_facets) {
            Facet f;
            for (int i : sf) f.v[f.size++] = i;
            for (int i : af) f.v[f.size++] = ns + i;
            st.facets.push_back(f);
        }
    return st;
}

SLStencil fan_product_stencil(int orientation, const std::vector<Eigen::Vector2i>& fan) {
    const int m = static_cast<int>(fan.size());
    std::vector<std::vector<int>> sf;
    for (int j = 0; j < m; ++j) sf.push_back({j, (j + 1) % m});
    return product_stencil(orientation, fan, sf, {1, -1}, {{0}, {1}});
}

Eigen::VectorXd vertex_tangent(const StencilVertex& v, double h, double dtheta) {
    Eigen::VectorXd t(3);
    t << h * v.dx.x(), h * v.dx.y(), dtheta * v.dtheta;
    return t;
}

bool audit_stencil(const SLStencil& st, const QuadNorm& F3, double h, double dtheta) {
    for (const auto& f : st.facets) {
        std::vector<Eigen::VectorXd> pts;
        for (int i = 0; i < f.size; ++i) pts.push_back(vertex_tangent(st.vertices[f.v[i]], h, dtheta));
        if (!acuteness_check(pts, F3)) return false;
    }
    return true;
}

Vec3 log_map(const Vec3& a, const Vec3& b) {
    Vec3 t = b - a.dot(b) * a;
    double tn = t.norm();
    if (tn == 0) return Vec3::Zero();
    double ang = std::atan2(tn, a.dot(b));
    return ang / tn * t;
}

Eigen::VectorXd nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
    const int n = static_cast<int>(A.cols());
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(n, false);
    const double tol = 1e-12 * std::max(1.0, A.norm() * b.norm());
    for (int outer = 0; outer < 3 * n + 10; ++outer) {
        Eigen::VectorXd w = A.transpose() * (b - A * x);
        int t = -1;
        double best = tol;
        for (int j = 0; j < n; ++j)
            if (!passive[j] && w(j) > best) {
                best = w(j);
                t = j;
            }
        if (t < 0) break;
        passive[t] = true;
        for (int inner = 0; inner < 3 * n + 10; ++inner) {
            std::vector<int> P;
            for (int j = 0; j < n; ++j)
                if (passive[j]) P.push_back(j);
            Eigen::MatrixXd Ap(A.rows(), P.size());
            for (size_t c = 0; c < P.size(); ++c) Ap.col(c) = A.col(P[c]);
            Eigen::VectorXd zp = Ap.colPivHouseholderQr().solve(b);
            Eigen::VectorXd z = Eigen::VectorXd::Zero(n);
            for (size_t c = 0; c < P.size(); ++c) z(P[c]) = zp(c);
            bool ok = true;
            for (int j : P) ok = ok && z(j) > 0;
            if (ok) {
                x = z;
                break;
            }
            double alpha = 1;
            for (int j : P)
                if (z(j) <= 0) alpha = std::min(alpha, x(j) / (x(j) - z(j)));
            x += alpha * (z - x);
            for (int j : P)
                if (x(j) <= 1e-15) {
                    x(j) = 0;
                    passive[j] = false;
                }
        }
    }
    return x;
}

AngularWeights angular_upwind_weights(const SphereGrid& sphere) {
    AngularWeights out(sphere.vertices.size());
    if (sphere.kind == SphereKind::s1_uniform) {
        double w = 1.0 / (sphere.spacing * sphere.spacing);
        for (int i = 0; i < sphere.size(); ++i)
            for (int j : sphere.adjacency[i]) out[i].push_back({j, w});
        return out;
    }
    constexpr int samples = 72;
    for (int i = 0; i < sphere.size(); ++i) {
        const Vec3& n = sphere.vertices[i];
        PointPO p = PointPO::make(3, Vec3::Zero(), n);
        auto basis = tangent_basis(p);
        const auto& nb = sphere.adjacency[i];
        Eigen::MatrixXd A(samples, nb.size());
        Eigen::VectorXd b = Eigen::VectorXd::Ones(samples);
        std::vector<Vec3> t;
        for (int j : nb) t.push_back(log_map(n, sphere.vertices[j]));
        for (int s = 0; s < samples; ++s) {
            double a = 2 * std::numbers::pi * s / samples;
            Vec3 g = std::cos(a) * basis[0] + std::sin(a) * basis[1];
            for (size_t e = 0; e < nb.size(); ++e) {
                double c = std::max(0.0, g.dot(t[e]));
                A(s, e) = c * c;
            }
        }
        Eigen::VectorXd rho = nnls(A, b);
        for (size_t e = 0; e < nb.size(); ++e)
            if (rho(e) > 0) out[i].push_back({nb[e], rho(e)});
    }
    return out;
}

}  // namespace rseik
