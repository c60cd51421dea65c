#include "rseik/cost.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <functional>
#include <sstream>

#include "rseik/errors.hpp"
#include "rseik/pogrid.hpp"

namespace rseik {

CostField CostField::uniform(const ProductGrid& grid, double c1, double c2) {
    CostField c;
    c.grid = grid;
    c.c1.assign(grid.size(), c1);
    c.c2.assign(grid.size(), c2);
    c.xi = c1 / c2;
    c.validate();
    return c;
}

void CostField::validate() const {
    if (c1.size() != grid.size() || c2.size() != grid.size()) throw DomainError("cost field size does not match the grid");
    if (!(delta > 0)) throw DomainError("cost floor must be positive");
    const int no = grid.sphere.size();
    for (std::size_t i = 0; i < c1.size(); ++i) {
        if (grid.spatial.masked(i / no)) continue;
        if (!(c1[i] >= delta) || !(c2[i] >= delta) || !std::isfinite(c1[i]) || !std::isfinite(c2[i]))
            throw DomainError("cost at node " + std::to_string(i) + " is below the floor " + std::to_string(delta) +
                              " or not finite");
    }
}

double CostField::min_cost() const {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < c1.size(); ++i) m = std::min({m, c1[i], c2[i]});
    return m;
}

CostField cost_from_density(const DensityField& W, double sigma, int p_exp, double xi, double delta) {
    if (!(sigma >= 0)) throw DomainError("sigma must be nonnegative");
    if (p_exp < 1) throw DomainError("exponent p must be a positive integer");
    if (!(xi > 0)) throw DomainError("xi must be positive");
    if (W.values.size() != W.grid.size()) throw DomainError("density size does not match the grid");
    double mx = 0;
    for (double w : W.values) {
        if (!std::isfinite(w)) throw DomainError("density contains non-finite values");
        mx = std::max(mx, w);
    }
    CostField c;
    c.grid = W.grid;
    c.xi = xi;
    c.delta = delta;
    c.c1.resize(W.values.size());
    c.c2.resize(W.values.size());
    for (std::size_t i = 0; i < W.values.size(); ++i) {
        double C = 1.0;
        if (mx > 0) C = 1.0 / (1.0 + sigma * std::pow(std::max(0.0, W.values[i]) / mx, p_exp));
        c.c2[i] = C;
        c.c1[i] = xi * C;
    }
    c.validate();
    return c;
}

TubeProjection project_on_tube(const TubeSpec& tube, const Vec3& x) {
    if (tube.centerline.size() < 2) throw DomainError("tube centerline needs at least two points");
    TubeProjection best{std::numeric_limits<double>::infinity(), Vec3::UnitX(), Vec3::Zero()};
    for (std::size_t i = 0; i + 1 < tube.centerline.size(); ++i) {
        const Vec3& a = tube.centerline[i];
        Vec3 ab = tube.centerline[i + 1] - a;
        double len2 = ab.squaredNorm();
        if (!(len2 > 1e-24)) throw DomainError("degenerate tangent: repeated centerline point");
        double t = std::clamp((x - a).dot(ab) / len2, 0.0, 1.0);
        Vec3 c = a + t * ab;
        double dist = (x - c).norm();
        if (dist < best.distance) best = {dist, ab / std::sqrt(len2), c};
    }
    return best;
}

DensityField synth_tube_phantom(const ProductGrid& grid, const std::vector<TubeSpec>& tubes) {
    DensityField W;
    W.grid = grid;
    W.values.assign(grid.size(), 0.0);
    const int no = grid.sphere.size();
    for (const auto& tube : tubes) {
        if (!(tube.radius > 0) || !(tube.kappa >= 0)) throw DomainError("tube radius must be positive and kappa nonnegative");
        for (std::size_t i = 0; i + 1 < tube.centerline.size(); ++i)
            if ((tube.centerline[i + 1] - tube.centerline[i]).squaredNorm() <= 1e-24)
                throw DomainError("degenerate tangent: repeated centerline point");
    }
    for (std::size_t s = 0; s < grid.spatial.size(); ++s) {
        Vec3 x = grid.spatial.position(s);
        for (const auto& tube : tubes) {
            auto pr = project_on_tube(tube, x);
            double q = pr.distance / tube.radius;
            if (q > 5) continue;
            double bump = tube.amplitude * std::exp(-2 * q * q);
            for (int o = 0; o < no; ++o) {
                double c = std::abs(grid.sphere.vertices[o].dot(pr.tangent));
                W.values[grid.node(s, o)] += bump * std::pow(c, tube.kappa);
            }
        }
    }
    return W;
}

double half_cost_amplitude(double sigma, int p_exp) {
    // Normalising by the cheap bundle's maximum a: unit bundle C = 1/(1 + sigma a^-p), cheap C = 1/(1 + sigma).
    // Requiring the former to be twice the latter gives a^p = 2 sigma / (sigma - 1).
    if (!(sigma > 1)) throw DomainError("a half-cost bundle requires sigma > 1");
    return std::pow(2 * sigma / (sigma - 1), 1.0 / p_exp);
}

PhantomPreset parse_preset(const std::string& name) {
    if (name == "two_crossings") return PhantomPreset::two_crossings;
    if (name == "torsion_parallel") return PhantomPreset::torsion_parallel;
    if (name == "pompidou_mask") return PhantomPreset::pompidou_mask;
    throw DomainError("unknown preset '" + name + "' (expected two_crossings, torsion_parallel or pompidou_mask)");
}

const char* preset_name(PhantomPreset p) {
    switch (p) {
        case PhantomPreset::two_crossings: return "two_crossings";
        case PhantomPreset::torsion_parallel: return "torsion_parallel";
        default: return "pompidou_mask";
    }
}

namespace {

std::vector<Vec3> sample_curve(const std::function<Vec3(double)>& f, double t0, double t1, int n) {
    std::vector<Vec3> pts;
    for (int i = 0; i <= n; ++i) pts.push_back(f(t0 + (t1 - t0) * i / n));
    return pts;
}

}  // namespace

PhantomLayout two_crossings_layout(int n) {
    const double s = n / 32.0;
    const double c = 16 * s;
    PhantomLayout L;
    TubeSpec straight;
    straight.centerline = {Vec3(2 * s, c, c), Vec3(n - 3 * s, c, c)};
    straight.radius = 3 * s;
    TubeSpec arc;
    // Circle of radius 10 centred below the straight tube; it crosses the straight tube twice.
    const double R = 10 * s, cy = 14 * s;
    const double pi = std::numbers::pi;
    arc.centerline = sample_curve([&](double a) { return Vec3(c + R * std::cos(a), cy + R * std::sin(a), c); },
                                  7 * pi / 6, -pi / 6, 200);
    arc.radius = 3 * s;
    L.tubes = {straight, arc};
    L.names = {"straight", "curved"};
    return L;
}

PhantomLayout torsion_parallel_layout(int n, double cheap_amplitude) {
    const double s = n / 32.0;
    const double pi = std::numbers::pi;
    PhantomLayout L;
    // Helical bundle around the axis y = 12, z = 16, running along x.
    TubeSpec helix;
    const double R = 3 * s, y0 = 12 * s, z0 = 16 * s;
    helix.centerline = sample_curve(
        [&](double t) { return Vec3(t, y0 + R * std::cos(2 * pi * (t - 2 * s) / (28 * s)), z0 + R * std::sin(2 * pi * (t - 2 * s) / (28 * s))); },
        2 * s, 30 * s, 300);
    helix.radius = 1.5 * s;
    // Cheap straight bundle parallel to the helix axis.
    TubeSpec parallel;
    parallel.centerline = {Vec3(2 * s, 19 * s, 16 * s), Vec3(30 * s, 19 * s, 16 * s)};
    parallel.radius = 1.5 * s;
    parallel.amplitude = cheap_amplitude;
    // Bundle crossing the helix.
    TubeSpec cross;
    cross.centerline = {Vec3(16 * s, 2 * s, 8 * s), Vec3(16 * s, 30 * s, 24 * s)};
    cross.radius = 1.5 * s;
    L.tubes = {helix, parallel, cross};
    L.names = {"torsion", "parallel", "crossing"};
    return L;
}

std::vector<std::uint8_t> pompidou_walls(int nx, int ny) {
    std::vector<std::uint8_t> m(std::size_t(nx) * ny, 0);
    auto wall = [&](double x0, double y0, double x1, double y1) {
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                double x = (i + 0.5) / nx, y = (j + 0.5) / ny;
                if (x >= x0 && x <= x1 && y >= y0 && y <= y1) m[std::size_t(j) * nx + i] = 1;
            }
    };
    const double t = 0.04;
    // Outer walls with two exits (left and right), inner partitions with doorways.
    wall(0, 0, 1, t);
    wall(0, 1 - t, 1, 1);
    wall(0, 0, t, 0.42);
    wall(0, 0.58, t, 1);
    wall(1 - t, 0, 1, 0.62);
    wall(1 - t, 0.78, 1, 1);
    wall(0.3, 0, 0.3 + t, 0.55);
    wall(0.3, 0.7, 0.3 + t, 1);
    wall(0.62, 0.3, 0.62 + t, 1);
    wall(0.45, 0.3, 0.62, 0.3 + t);
    return m;
}

std::string encode_density(const DensityField& W, const nlohmann::json& extra) {
    return encode_pogrid(W.grid, "density", {&W.values}, extra);
}

std::string encode_cost(const CostField& C, const nlohmann::json& extra) {
    nlohmann::json e = extra;
    e["xi"] = C.xi;
    e["delta"] = C.delta;
    // Masked spatial nodes are written as +inf cost.
    std::vector<double> a = C.c1, b = C.c2;
    const int no = C.grid.sphere.size();
    for (std::size_t i = 0; i < a.size(); ++i)
        if (C.grid.spatial.masked(i / no)) a[i] = b[i] = std::numeric_limits<double>::infinity();
    return encode_pogrid(C.grid, "cost", {&a, &b}, e);
}

DensityField decode_density(const std::string& bytes) {
    PogridData d = decode_pogrid(bytes);
    if (d.quantity != "density") throw ParseError("expected quantity 'density', found '" + d.quantity + "'");
    if (d.channels.size() != 1) throw ParseError("density files carry exactly one channel");
    return DensityField{std::move(d.grid), std::move(d.channels[0])};
}

CostField decode_cost(const std::string& bytes) {
    PogridData d = decode_pogrid(bytes);
    if (d.quantity != "cost") throw ParseError("expected quantity 'cost', found '" + d.quantity + "'");
    if (d.channels.size() != 2) throw ParseError("cost files carry two channels (c1, c2)");
    CostField c;
    c.grid = std::move(d.grid);
    c.c1 = std::move(d.channels[0]);
    c.c2 = std::move(d.channels[1]);
    c.xi = d.header.value("xi", 1.0);
    c.delta = d.header.value("delta", default_cost_floor);
    const int no = c.grid.sphere.size();
    const std::size_t ns = c.grid.spatial.size();
    std::vector<std::uint8_t> mask(ns, 0);
    bool any = false;
    for (std::size_t s = 0; s < ns; ++s) {
        bool all_inf = true;
        for (int o = 0; o < no; ++o) all_inf = all_inf && std::isinf(c.c1[c.grid.node(s, o)]);
        if (all_inf) {
            mask[s] = 1;
            any = true;
        }
    }
    if (any) c.grid.spatial.mask = std::move(mask);
    c.validate();
    return c;
}

DensityField load_density(const std::string& path) { return decode_density(read_file(path)); }
void store_density(const std::string& path, const DensityField& W) { write_file(path, encode_density(W)); }
CostField load_cost(const std::string& path) { return decode_cost(read_file(path)); }
void store_cost(const std::string& path, const CostField& C) { write_file(path, encode_cost(C)); }

std::vector<std::uint8_t> read_pnm_mask(const std::string& path, int& nx, int& ny) {
    std::string bytes = read_file(path);
    std::size_t pos = 0;
    auto skip = [&]() {
        while (pos < bytes.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() {
        skip();
        std::size_t start = pos;
        while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw ParseError("PNM: expected a number at byte " + std::to_string(start));
        return std::stoi(bytes.substr(start, pos - start));
    };
    if (bytes.size() < 2 || bytes[0] != 'P') throw ParseError("PNM: byte 0: missing 'P' magic");
    char kind = bytes[1];
    if (kind != '1' && kind != '2' && kind != '4' && kind != '5') throw ParseError("PNM: byte 1: unsupported format P" + std::string(1, kind));
    pos = 2;
    nx = number();
    ny = number();
    if (nx < 2 || ny < 2) throw ParseError("PNM: image must be at least 2x2");
    int maxval = 1;
    if (kind == '2' || kind == '5') maxval = number();
    std::vector<std::uint8_t> mask(std::size_t(nx) * ny, 0);
    auto set = [&](int idx, bool wall) {
        int row = idx / nx, col = idx % nx;
        mask[std::size_t(ny - 1 - row) * nx + col] = wall ? 1 : 0;
    };
    const int total = nx * ny;
    if (kind == '1' || kind == '2') {
        for (int i = 0; i < total; ++i) {
            int v;
            if (kind == '1') {
                skip();
                if (pos >= bytes.size()) throw ParseError("PNM: truncated pixel data at byte " + std::to_string(pos));
                v = bytes[pos++] - '0';
                set(i, v == 1);
            } else {
                v = number();
                set(i, v * 2 < maxval);
            }
        }
    } else {
        ++pos;
        if (kind == '4') {
            int row_bytes = (nx + 7) / 8;
            if (bytes.size() < pos + std::size_t(row_bytes) * ny) throw ParseError("PNM: truncated payload at byte " + std::to_string(pos));
            for (int r = 0; r < ny; ++r)
                for (int c = 0; c < nx; ++c) {
                    unsigned char b = bytes[pos + r * row_bytes + c / 8];
                    set(r * nx + c, (b >> (7 - c % 8)) & 1);
                }
        } else {
            if (maxval > 255) throw ParseError("PNM: 16-bit PGM is not supported");
            if (bytes.size() < pos + std::size_t(total)) throw ParseError("PNM: truncated payload at byte " + std::to_string(pos));
            for (int i = 0; i < total; ++i) set(i, static_cast<unsigned char>(bytes[pos + i]) * 2 < maxval);
        }
    }
    return mask;
}

}  // namespace rseik
