#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "rseik/cost.hpp"
#include "rseik/manifold.hpp"
#include "rseik/tessellation.hpp"

namespace rseik {

enum class Backend { semi_lagrangian, hamiltonian_fd, automatic };
const char* backend_name(Backend b);
Backend parse_backend(const std::string& s);

enum class NodeState : std::uint8_t { far, trial, accepted };

struct DistanceMap {
    ProductGrid grid;
    std::vector<double> values;
    std::vector<NodeState> states;
    Variant variant = Variant::symmetric;
    double epsilon = 0.1;
    double xi = 1.0;
    Backend backend = Backend::automatic;
    std::vector<PointPO> seeds;

    double value_at(const PointPO& p) const { return values[grid.snap(p)]; }
    double interpolate(const PointPO& p) const;
    nlohmann::json metadata() const;
};

// Multilinear in space times sphere interpolation; infinite corners are dropped and the
// remaining weights renormalized. Positions are clamped to the grid box.
double interpolate_field(const ProductGrid& g, const std::vector<double>& values, const PointPO& p);

std::string encode_distance(const DistanceMap& U);
DistanceMap decode_distance(const std::string& bytes);
void store_distance(const std::string& path, const DistanceMap& U);
DistanceMap load_distance(const std::string& path);

struct SolveConfig {
    Backend backend = Backend::automatic;
    std::vector<PointPO> stop;
    int offset_cap = default_offset_cap;
    bool record_order = false;
};

struct SolveStats {
    std::size_t accepted = 0;
    std::size_t pops = 0;
    std::size_t pushes = 0;
    std::size_t updates = 0;
    double seconds = 0;
    std::vector<std::size_t> order;
};

// Discrete update operator Lambda on a product grid.
class UpdateScheme {
public:
    virtual ~UpdateScheme() = default;
    // Full operator: value at `node` computed from all current values.
    virtual double apply(std::size_t node, const std::vector<double>& u) const = 0;
    // Nodes p whose update reads q, each with the local vertex index of q in p's stencil.
    virtual void dependents(std::size_t q, const std::function<void(std::size_t, int)>& f) const = 0;
    // Candidate at p after q (local index vi) was accepted, reading accepted values only.
    virtual double update(std::size_t p, int vi, const std::vector<double>& u, const std::vector<NodeState>& st) const = 0;
};

std::unique_ptr<UpdateScheme> make_scheme(const CostField& cost, const ModelParams& params, Backend backend,
                                          int offset_cap = default_offset_cap);
Backend resolve_backend(Backend b, int d);

DistanceMap fast_march(const CostField& cost, const ModelParams& params, const std::vector<PointPO>& seeds,
                       const SolveConfig& config = {}, SolveStats* stats = nullptr);

struct HopfLaxVertex {
    Eigen::VectorXd offset;  // q - p
    double value;
};

struct HopfLaxResult {
    double value = std::numeric_limits<double>::infinity();
    int facet = -1;
    std::vector<double> weights;
};

// min over facets and barycentric xi of F(sum xi_i q_i) + sum xi_i u_i, sub-facets included.
HopfLaxResult hopf_lax_update(const std::vector<std::vector<HopfLaxVertex>>& facets, const QuadNorm& F);

// Largest root lambda of sum_k c_k (lambda - v_k)_+^2 = 1.
double solve_positive_part_quadratic(std::vector<std::pair<double, double>> terms);

struct HamiltonianTerm {
    double coef;
    double value;
};
double hamiltonian_update_3d(const std::vector<HamiltonianTerm>& spatial, const std::vector<HamiltonianTerm>& angular);

struct CausalityReport {
    std::size_t trials = 0;
    std::size_t violations = 0;
    std::string witness;
};

// Operator over nodes 0..n-1; checks that equal values below t give equal outputs at or below t.
CausalityReport check_causality(std::size_t n, const std::function<std::vector<double>(const std::vector<double>&)>& op,
                                std::size_t trials, std::mt19937_64& rng, double value_scale = 1.0);

struct ResidualStats {
    std::size_t count = 0;
    double median = 0;
    double p90 = 0;
};

// |F*(p, DU) - 1| with one-sided upwind differences, on accepted nodes at least `margin` nodes away
// from the seeds, the grid boundary and masked nodes.
ResidualStats eikonal_residual(const DistanceMap& U, const CostField& cost, const ModelParams& params, int margin = 3);

}  // namespace rseik
