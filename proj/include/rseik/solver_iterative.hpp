#pragma once

#include <vector>

#include "rseik/cost.hpp"
#include "rseik/solver_fm.hpp"

namespace rseik {

enum class DtRule {
    monotone,  // 0.9 / sqrt(max_p sum of scheme coefficients): the explicit step is monotone
    cfl        // 0.4 h min(C) min(1, eps)
};

struct IterConfig {
    double dt = 0;  // 0 selects the step from `rule`
    DtRule rule = DtRule::monotone;
    double theta = 1e-4;
    int max_outer = 200000;
    double clamp = 0;  // 0 selects 10 x the grid diameter in cost units
    int threads = 1;
};

struct IterStats {
    int outer = 0;
    double residual = 0;
    double dt = 0;
    double clamp = 0;
    double seconds = 0;
    std::vector<double> max_history;
};

// Explicit upwind scheme for u_r = 1 - F*(p, du), with +inf represented by a finite clamp.
class IterativeScheme {
public:
    IterativeScheme(const CostField& cost, const ModelParams& params);

    double monotone_dt() const { return monotone_dt_; }
    double cfl_dt() const;
    double default_clamp() const;
    // Discrete F*(p, Du) at a node.
    double hamiltonian(std::size_t node, const std::vector<double>& u, double clamp) const;
    // out = min(clamp, u + dt (1 - H)), masked nodes stay at clamp, seeds are pinned to 0.
    void step(const std::vector<double>& u, std::vector<double>& out, double dt, double clamp,
              const std::vector<std::size_t>& seeds, int threads = 1) const;

private:
    struct Corner {
        int di, dj, dk;
        double w;
    };
    double sample(std::size_t s, int o, const std::vector<Corner>& corners, const std::vector<double>& u, double clamp) const;

    const CostField& cost_;
    ModelParams params_;
    int no_;
    std::vector<std::vector<Corner>> ahead_, behind_;
    AngularWeights angular_;
    double monotone_dt_ = 0;
};

// Morphological delta: 0 on seed nodes, clamp elsewhere.
std::vector<double> morphological_delta(const ProductGrid& g, const std::vector<std::size_t>& seeds, double clamp);

std::vector<double> iterate_step(const std::vector<double>& u, const CostField& cost, const ModelParams& params, double dt,
                                 double clamp, const std::vector<std::size_t>& seeds);

DistanceMap iterative_solve(const CostField& cost, const ModelParams& params, const std::vector<PointPO>& seeds,
                            const IterConfig& config = {}, IterStats* stats = nullptr);

}  // namespace rseik
