#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "rseik/errors.hpp"
#include "rseik/manifold.hpp"

using namespace rseik;
using rseik::testing::random_cotangent;
using rseik::testing::random_point;
using rseik::testing::random_tangent;

namespace {

const CostSample unit_cost{1.0, 1.0};
const ModelParams sym01{Variant::symmetric, 0.1, false};
const ModelParams fwd01{Variant::forward, 0.1, false};

}  // namespace

TEST(FinslerCost, ExactSymmetricAligned) {
    ModelParams mp{Variant::symmetric, 0.0, true};
    auto p = PointPO::make2(0, 0, 0.3);
    EXPECT_NEAR(finsler_cost(mp, unit_cost, p, make_tangent(p, p.n, Vec3::Zero())), 1.0, 1e-15);
}

TEST(FinslerCost, ExactSymmetricPerpendicularIsInfinite) {
    ModelParams mp{Variant::symmetric, 0.0, true};
    auto p = PointPO::make2(0, 0, 0.3);
    Vec3 perp(-p.n.y(), p.n.x(), 0);
    EXPECT_TRUE(std::isinf(finsler_cost(mp, unit_cost, p, make_tangent(p, perp, Vec3::Zero()))));
}

TEST(FinslerCost, ExactForwardReverseIsInfinite) {
    ModelParams mp{Variant::forward, 0.0, true};
    auto p = PointPO::make2(0, 0, 0.3);
    EXPECT_TRUE(std::isinf(finsler_cost(mp, unit_cost, p, make_tangent(p, -p.n, Vec3::Zero()))));
    EXPECT_NEAR(finsler_cost(mp, unit_cost, p, make_tangent(p, 2 * p.n, Vec3::Zero())), 2.0, 1e-15);
}

TEST(FinslerCost, ForwardReverseCostsOneOverEpsilon) {
    auto p = PointPO::make2(0, 0, 1.1);
    EXPECT_NEAR(finsler_cost(fwd01, unit_cost, p, make_tangent(p, -p.n, Vec3::Zero())), 10.0, 1e-12);
}

TEST(FinslerCost, SymmetricSidewaysCostsOneOverEpsilon) {
    auto p = PointPO::make(3, Vec3::Zero(), Vec3(1, 2, 3));
    Vec3 perp = p.n.cross(Vec3::UnitX()).normalized();
    EXPECT_NEAR(finsler_cost(sym01, unit_cost, p, make_tangent(p, perp, Vec3::Zero())), 10.0, 1e-12);
}

TEST(FinslerCost, Errors) {
    PointPO bad;
    bad.d = 2;
    bad.n = Vec3(2, 0, 0);
    Tangent v;
    EXPECT_THROW(finsler_cost(sym01, unit_cost, bad, v), DomainError);
    auto p = PointPO::make2(0, 0, 0);
    EXPECT_THROW(finsler_cost(sym01, CostSample{-1, 1}, p, v), DomainError);
    EXPECT_THROW(finsler_cost(ModelParams{Variant::symmetric, 0.0, false}, unit_cost, p, v), DomainError);
    EXPECT_THROW(finsler_cost(ModelParams{Variant::symmetric, 1.5, false}, unit_cost, p, v), DomainError);
    EXPECT_THROW(dual_cost(sym01, unit_cost, bad, Cotangent{}), DomainError);
}

TEST(FinslerCost, TangencyProjection) {
    auto p = PointPO::make(3, Vec3::Zero(), Vec3(0, 0, 1));
    auto t = make_tangent(p, Vec3::Zero(), Vec3(1, 0, 5));
    EXPECT_NEAR(t.ndot.dot(p.n), 0.0, 1e-15);
    EXPECT_NEAR(PointPO::make(3, Vec3::Zero(), Vec3(3, 4, 12)).n.norm(), 1.0, 1e-12);
}

TEST(DualCost, Examples) {
    auto p = PointPO::make2(0, 0, 0.7);
    Vec3 perp(-p.n.y(), p.n.x(), 0);
    EXPECT_NEAR(dual_cost(sym01, unit_cost, p, make_cotangent(p, p.n, Vec3::Zero())), 1.0, 1e-14);
    EXPECT_NEAR(dual_cost(sym01, unit_cost, p, make_cotangent(p, perp, Vec3::Zero())), 0.1, 1e-14);
    EXPECT_NEAR(dual_cost(fwd01, unit_cost, p, make_cotangent(p, -p.n, Vec3::Zero())), 0.1, 1e-14);
}

TEST(DualCost, ExactForwardRemarkForm) {
    ModelParams mp{Variant::forward, 0.0, true};
    auto p = PointPO::make2(0, 0, 0.0);
    CostSample c{2.0, 0.5};
    auto ph = make_cotangent(p, Vec3(3, 7, 0), Vec3(0, 2, 0));
    EXPECT_NEAR(dual_cost(mp, c, p, ph), std::sqrt(9.0 / 4 + 4.0 / 0.25), 1e-12);
    auto ph2 = make_cotangent(p, Vec3(-3, 7, 0), Vec3(0, 2, 0));
    EXPECT_NEAR(dual_cost(mp, c, p, ph2), std::sqrt(4.0 / 0.25), 1e-12);
}

TEST(GenericDual, Examples) {
    Eigen::VectorXd ph = Eigen::Vector3d(1, 2, 2) / 3.0;
    EXPECT_NEAR(generic_dual_norm(Eigen::Matrix3d::Identity(), Eigen::Vector3d::Zero(), ph), 1.0, 1e-14);
    for (double w1 : {-2.0, 0.0, 0.7}) {
        for (double t : {-1.5, 0.4}) {
            Eigen::MatrixXd M(1, 1);
            M << 1;
            Eigen::VectorXd w(1), v(1);
            w << w1;
            v << t;
            double pp = std::max(0.0, w1 * t);
            EXPECT_NEAR(generic_dual_norm(M, w, v), std::sqrt((t * t + pp * pp) / (1 + w1 * w1)), 1e-14);
        }
    }
}

TEST(GenericDual, RandomMatchesBruteForce) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 20; ++trial) {
        int k = 2 + trial % 4;
        Eigen::MatrixXd A(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) A(i, j) = g(rng);
        Eigen::MatrixXd M = A * A.transpose() + 0.3 * Eigen::MatrixXd::Identity(k, k);
        Eigen::VectorXd w(k), ph(k);
        for (int i = 0; i < k; ++i) {
            w(i) = 2 * g(rng);
            ph(i) = g(rng);
        }
        QuadNorm F{M, w};
        double brute = rseik::testing::brute_dual(k, [&](const Eigen::VectorXd& v) { return F(v); }, ph, 100000, rng);
        EXPECT_NEAR(generic_dual_norm(M, w, ph), brute, 1e-3);
    }
}

TEST(GenericDual, NonSpdRejected) {
    Eigen::Matrix2d M;
    M << 1, 0, 0, -1;
    EXPECT_THROW(generic_dual_norm(M, Eigen::Vector2d::Zero(), Eigen::Vector2d(1, 0)), DomainError);
    Eigen::Matrix2d N;
    N << 1, 0.5, 0, 1;
    EXPECT_THROW(generic_dual_norm(N, Eigen::Vector2d::Zero(), Eigen::Vector2d(1, 0)), DomainError);
}

TEST(GenericDual, AssemblyReproducesClosedForms) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.05, 1.0), c(0.2, 3.0);
    for (int trial = 0; trial < 500; ++trial) {
        int d = 2 + trial % 2;
        ModelParams mp{trial % 4 < 2 ? Variant::symmetric : Variant::forward, u(rng), false};
        CostSample cs{c(rng), c(rng)};
        auto p = random_point(rng, d);
        auto v = random_tangent(rng, p);
        auto ph = random_cotangent(rng, p);
        QuadNorm F = assemble_norm(mp, cs, p);
        double f = finsler_cost(mp, cs, p, v);
        EXPECT_NEAR(F(stack(p, v)), f, 1e-9 * f);
        double ds = dual_cost(mp, cs, p, ph);
        EXPECT_NEAR(generic_dual_norm(F.M, F.w, stack(p, ph)), ds, 1e-9 * ds);
    }
}

TEST(MetricTensor, Examples) {
    auto p = PointPO::make2(0, 0, 0.4);
    EXPECT_NEAR(metric_tensor_apply(unit_cost, p, 0.5, make_tangent(p, p.n, Vec3::Zero())), 1.0, 1e-14);
    auto g = inverse_metric_apply(CostSample{2, 1}, p, 0.3, MetricKind::G, make_cotangent(p, p.n, Vec3::Zero()));
    EXPECT_NEAR((g.xdot - p.n / 4).norm(), 0.0, 1e-15);
    Vec3 xh(0.3, -2, 0);
    auto gt = inverse_metric_apply(CostSample{2, 1}, p, 0.3, MetricKind::Gtilde, make_cotangent(p, xh, Vec3::Zero()));
    EXPECT_NEAR((gt.xdot - 0.09 / 4 * xh).norm(), 0.0, 1e-15);
    EXPECT_THROW(inverse_metric_apply(unit_cost, p, 0.0, MetricKind::G, Cotangent{}), SingularityError);
}

TEST(MetricTensor, InverseIsRieszRepresentative) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        int d = 2 + trial % 2;
        auto p = random_point(rng, d);
        CostSample cs{0.7, 1.9};
        double eps = 0.2;
        auto ph = random_cotangent(rng, p);
        auto g = inverse_metric_apply(cs, p, eps, MetricKind::G, ph);
        auto v = random_tangent(rng, p);
        // Polarization: G(g, v) = (G(g+v) - G(g-v)) / 4 must equal <ph, v>.
        Tangent a{g.xdot + v.xdot, g.ndot + v.ndot}, b{g.xdot - v.xdot, g.ndot - v.ndot};
        double pol = (metric_tensor_apply(cs, p, eps, a) - metric_tensor_apply(cs, p, eps, b)) / 4;
        double pairing = ph.xhat.dot(v.xdot) + ph.nhat.dot(v.ndot);
        EXPECT_NEAR(pol, pairing, 1e-9 * (1 + std::abs(pairing)));
    }
}

TEST(DnMatrix, Examples) {
    Eigen::MatrixXd D = dn_matrix(Vec3::UnitZ(), 0.2, 3);
    Eigen::Matrix3d expected = Eigen::Vector3d(0.04, 0.04, 1).asDiagonal();
    EXPECT_NEAR((D - expected).norm(), 0.0, 1e-15);
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        auto p = random_point(rng, 3);
        EXPECT_NEAR((dn_matrix(p.n, 1.0, 3) - Eigen::Matrix3d::Identity()).norm(), 0.0, 1e-14);
        Eigen::MatrixXd Dn = dn_matrix(p.n, 0.3, 3);
        EXPECT_NEAR((Dn * p.n - p.n).norm(), 0.0, 1e-14);
    }
    EXPECT_THROW(dn_matrix(Vec3(1, 1, 0), 0.5, 2), DomainError);
}

TEST(ControlSet, SymmetricIsotropicIsEuclideanSphere) {
    ModelParams mp{Variant::symmetric, 1.0, false};
    auto p = PointPO::make2(0, 0, 0.2);
    auto pts = control_set_boundary(mp, unit_cost, p, 200);
    ASSERT_EQ(pts.size(), 200u);
    for (auto& v : pts) EXPECT_NEAR(std::sqrt(v.xdot.squaredNorm() + v.ndot.squaredNorm()), 1.0, 1e-12);
}

TEST(ControlSet, ForwardIsAsymmetric) {
    auto p = PointPO::make2(0, 0, 0.0);
    EXPECT_NEAR(finsler_cost(fwd01, unit_cost, p, make_tangent(p, p.n, Vec3::Zero())), 1.0, 1e-12);
    EXPECT_NEAR(finsler_cost(fwd01, unit_cost, p, make_tangent(p, -0.1 * p.n, Vec3::Zero())), 1.0, 1e-12);
    auto pts = control_set_boundary(fwd01, unit_cost, p, 2000);
    double max_fwd = 0, max_back = 0;
    for (auto& v : pts) {
        max_fwd = std::max(max_fwd, v.xdot.dot(p.n));
        max_back = std::max(max_back, -v.xdot.dot(p.n));
    }
    EXPECT_NEAR(max_fwd, 1.0, 0.02);
    EXPECT_NEAR(max_back, 0.1, 0.002);
}

TEST(ControlSet, AllOnUnitLevelSet) {
    std::mt19937_64 rng(5);
    for (int d : {2, 3}) {
        for (auto mp : {sym01, fwd01, ModelParams{Variant::forward, 0.0, true}, ModelParams{Variant::symmetric, 0.0, true}}) {
            auto p = random_point(rng, d);
            CostSample cs{1.3, 0.6};
            for (auto& v : control_set_boundary(mp, cs, p, 300)) EXPECT_NEAR(finsler_cost(mp, cs, p, v), 1.0, 1e-9);
        }
    }
}

TEST(Properties, HomogeneitySubadditivityCoercivity) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.02, 1.0), lam(0.0, 10.0);
    for (int trial = 0; trial < 10000; ++trial) {
        int d = 2 + trial % 2;
        ModelParams mp{trial % 2 ? Variant::forward : Variant::symmetric, u(rng), false};
        CostSample cs{u(rng) + 0.1, u(rng) + 0.1};
        auto p = random_point(rng, d);
        auto v0 = random_tangent(rng, p), v1 = random_tangent(rng, p);
        double f0 = finsler_cost(mp, cs, p, v0), f1 = finsler_cost(mp, cs, p, v1);
        double l = lam(rng);
        EXPECT_NEAR(finsler_cost(mp, cs, p, Tangent{l * v0.xdot, l * v0.ndot}), l * f0, 1e-14 * (1 + l * f0));
        EXPECT_EQ(finsler_cost(mp, cs, p, Tangent{4.0 * v0.xdot, 4.0 * v0.ndot}), 4.0 * f0);
        EXPECT_LE(finsler_cost(mp, cs, p, Tangent{v0.xdot + v1.xdot, v0.ndot + v1.ndot}), f0 + f1 + 1e-12);
        double delta = std::min(cs.c1, cs.c2) * std::min(1.0, mp.epsilon);
        EXPECT_GE(f0, delta * std::sqrt(v0.xdot.squaredNorm() + v0.ndot.squaredNorm()) * (1 - 1e-14));
    }
}

TEST(Properties, EpsilonMonotoneAndVariantOrder) {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 2000; ++trial) {
        int d = 2 + trial % 2;
        auto p = random_point(rng, d);
        auto v = random_tangent(rng, p);
        double prev = std::numeric_limits<double>::infinity();
        for (double eps : {0.02, 0.1, 0.3, 0.5, 1.0}) {
            double f = finsler_cost(ModelParams{Variant::symmetric, eps, false}, unit_cost, p, v);
            EXPECT_LE(f, prev);
            prev = f;
            double fp = finsler_cost(ModelParams{Variant::forward, eps, false}, unit_cost, p, v);
            EXPECT_GE(fp, f);
            if (v.xdot.dot(p.n) >= 0) {
                EXPECT_EQ(fp, f);
            } else if (eps < 1.0) {
                EXPECT_GT(fp, f);
            }
        }
    }
}

TEST(Properties, PointwiseConvergenceOnConstraint) {
    auto p = PointPO::make(3, Vec3::Zero(), Vec3(1, -1, 2));
    auto v = make_tangent(p, 1.7 * p.n, Vec3(0.3, 0.2, -0.4));
    double f0 = finsler_cost(ModelParams{Variant::symmetric, 0.0, true}, unit_cost, p, v);
    double prev_gap = std::numeric_limits<double>::infinity();
    for (double eps : {0.5, 0.1, 0.02}) {
        double gap = std::abs(finsler_cost(ModelParams{Variant::symmetric, eps, false}, unit_cost, p, v) - f0);
        EXPECT_LE(gap, prev_gap);
        prev_gap = gap;
    }
    EXPECT_LT(prev_gap, 1e-9);
}

TEST(Properties, DualityConsistencyAndFenchel) {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 40; ++trial) {
        int d = 2 + trial % 2;
        ModelParams mp{trial % 4 < 2 ? Variant::symmetric : Variant::forward, 0.1 + 0.2 * (trial % 3), false};
        CostSample cs{0.5 + 0.1 * (trial % 5), 1.2};
        auto p = random_point(rng, d);
        auto ph = random_cotangent(rng, p);
        Eigen::VectorXd c = rseik::testing::cotangent_coords(p, ph);
        auto F = [&](const Eigen::VectorXd& a) { return finsler_cost(mp, cs, p, rseik::testing::tangent_from_coords(p, a)); };
        double brute = rseik::testing::brute_dual(2 * d - 1, F, c, 100000, rng);
        double ds = dual_cost(mp, cs, p, ph);
        EXPECT_NEAR(ds, brute, 1e-3 * std::max(1.0, ds));
        for (int k = 0; k < 100; ++k) {
            auto v = random_tangent(rng, p);
            EXPECT_LE(ph.xhat.dot(v.xdot) + ph.nhat.dot(v.ndot), ds * finsler_cost(mp, cs, p, v) + 1e-12);
        }
    }
}

TEST(Properties, PrimalDualSaturation) {
    std::mt19937_64 rng(24);
    for (int trial = 0; trial < 300; ++trial) {
        int d = 2 + trial % 2;
        ModelParams mp{trial % 2 ? Variant::symmetric : Variant::forward, 0.15, false};
        CostSample cs{0.8, 1.3};
        auto p = random_point(rng, d);
        auto ph = random_cotangent(rng, p);
        // Skip the non-smooth set of the forward dual.
        if (mp.variant == Variant::forward && std::abs(ph.xhat.dot(p.n)) < 1e-3) continue;
        const double h = 1e-6;
        Vec3 gx, gn = Vec3::Zero();
        for (int i = 0; i < 3; ++i) {
            Cotangent a = ph, b = ph;
            a.xhat(i) += h;
            b.xhat(i) -= h;
            gx(i) = (dual_cost(mp, cs, p, a) - dual_cost(mp, cs, p, b)) / (2 * h);
        }
        for (const Vec3& e : tangent_basis(p)) {
            Cotangent a = ph, b = ph;
            a.nhat += h * e;
            b.nhat -= h * e;
            gn += (dual_cost(mp, cs, p, a) - dual_cost(mp, cs, p, b)) / (2 * h) * e;
        }
        if (d == 2) gx.z() = 0;
        EXPECT_NEAR(finsler_cost(mp, cs, p, make_tangent(p, gx, gn)), 1.0, 1e-6);
    }
}

TEST(Properties, ReversalSymmetry) {
    std::mt19937_64 rng(25);
    for (int trial = 0; trial < 1000; ++trial) {
        auto p = random_point(rng, 2 + trial % 2);
        auto v = random_tangent(rng, p);
        Tangent r{-v.xdot, -v.ndot};
        EXPECT_EQ(finsler_cost(sym01, unit_cost, p, v), finsler_cost(sym01, unit_cost, p, r));
        if (std::abs(v.xdot.dot(p.n)) > 1e-6)
            EXPECT_NE(finsler_cost(fwd01, unit_cost, p, v), finsler_cost(fwd01, unit_cost, p, r));
    }
}
