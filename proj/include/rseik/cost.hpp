#pragma once

#include <string>
#include <vector>

#include "rseik/manifold.hpp"
#include "json.hpp"
#include "rseik/tessellation.hpp"

namespace rseik {

struct DensityField {
    ProductGrid grid;
    std::vector<double> values;
};

struct CostField {
    ProductGrid grid;
    std::vector<double> c1, c2;
    double xi = 1.0;
    double delta = default_cost_floor;

    static CostField uniform(const ProductGrid& grid, double c1 = 1.0, double c2 = 1.0);
    CostSample at(std::size_t node) const { return {c1[node], c2[node]}; }
    // Checks the floor on every unmasked node; masked spatial nodes may carry +inf.
    void validate() const;
    double min_cost() const;
};

CostField cost_from_density(const DensityField& W, double sigma, int p_exp, double xi,
                            double delta = default_cost_floor);

struct TubeSpec {
    std::vector<Vec3> centerline;  // polyline in world coordinates
    double radius = 1.0;
    double kappa = 8.0;
    double amplitude = 1.0;
};

// Spatial distance to the polyline and the tangent of the closest segment.
struct TubeProjection {
    double distance;
    Vec3 tangent;
    Vec3 closest;
};
TubeProjection project_on_tube(const TubeSpec& tube, const Vec3& x);

DensityField synth_tube_phantom(const ProductGrid& grid, const std::vector<TubeSpec>& tubes);

// Density amplitude that makes a bundle's cost 1/2 of the unit-amplitude bundle's (equal maxima otherwise).
double half_cost_amplitude(double sigma, int p_exp);

enum class PhantomPreset { two_crossings, torsion_parallel, pompidou_mask };
PhantomPreset parse_preset(const std::string& name);
const char* preset_name(PhantomPreset p);

// Reference centerlines of the presets on a grid of n^3 voxels with h = 1 and origin 0.
struct PhantomLayout {
    std::vector<TubeSpec> tubes;
    std::vector<std::string> names;
};
PhantomLayout two_crossings_layout(int n = 32);
PhantomLayout torsion_parallel_layout(int n = 32, double cheap_amplitude = 1.0);

// Floor plan with walls (nonzero = wall) for the two-exit demo; nx by ny pixels.
std::vector<std::uint8_t> pompidou_walls(int nx, int ny);

std::string encode_density(const DensityField& W, const nlohmann::json& extra = {});
std::string encode_cost(const CostField& C, const nlohmann::json& extra = {});
DensityField load_density(const std::string& path);
void store_density(const std::string& path, const DensityField& W);
CostField load_cost(const std::string& path);
void store_cost(const std::string& path, const CostField& C);
CostField decode_cost(const std::string& bytes);
DensityField decode_density(const std::string& bytes);

// PGM/PBM (P1, P2, P4, P5) mask reader; dark pixels (below half of maxval) are walls.
// Image rows run top to bottom; returned rows run bottom to top (y up).
std::vector<std::uint8_t> read_pnm_mask(const std::string& path, int& nx, int& ny);

}  // namespace rseik
