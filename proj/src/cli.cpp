#include "rseik/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"
#include "rseik/cost.hpp"
#include "rseik/errors.hpp"
#include "rseik/pogrid.hpp"
#include "rseik/solver_fm.hpp"
#include "rseik/solver_iterative.hpp"
#include "rseik/tracing.hpp"

namespace rseik {

using nlohmann::json;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

std::vector<double> split_numbers(const std::string& text, const std::string& what) {
    std::vector<double> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        double x = std::strtod(item.c_str(), &end);
        if (item.empty() || end != item.c_str() + item.size() || !std::isfinite(x))
            throw ParseError("bad " + what + " '" + text + "': '" + item + "' is not a number");
        v.push_back(x);
    }
    return v;
}

std::string format_number(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", x);
    return buf;
}

json state_json(const PointPO& p) {
    json j;
    j["x"] = std::vector<double>(p.x.data(), p.x.data() + p.d);
    j["n"] = std::vector<double>(p.n.data(), p.n.data() + p.d);
    return j;
}

// All option values of a subcommand, defaults included.
json options_json(const CLI::App& app) {
    json j = json::object();
    for (const CLI::Option* opt : app.get_options()) {
        std::string name = !opt->get_lnames().empty() ? opt->get_lnames().front() : opt->get_name();
        if (name == "help" || name == "-h,--help") continue;
        json v;
        if (opt->count() > 0) {
            const auto& r = opt->results();
            if (opt->get_expected_max() > 1 || r.size() > 1)
                v = r;
            else if (opt->get_type_size() == 0)
                v = true;
            else
                v = r.empty() ? json() : json(r.front());
        } else if (opt->get_type_size() == 0) {
            v = false;
        } else {
            v = opt->get_default_str();
        }
        j[name] = v;
    }
    return j;
}

void write_manifest(const std::string& path, const CLI::App& sub, const json& resolved, const json& inputs,
                    const json& outputs, double seconds, const json& stats) {
    json m;
    m["command"] = sub.get_name();
    m["parameters"] = options_json(sub);
    m["resolved"] = resolved;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["wall_clock_seconds"] = seconds;
    m["stats"] = stats;
    write_file(path, m.dump(2) + "\n");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Cost sources shared by solve and trace: exactly one of a cost file, a density file, a PNM mask
// or a uniform grid description.
struct CostSource {
    std::string cost, density, mask;
    std::vector<int> uniform;
    double h = 1.0;
    std::vector<double> origin;
    int orientations = 36;
    int sphere_level = 2;
    double sigma = 3.0;
    int power = 3;
    double xi = 0;  // 0 selects the source default: 0.1 for densities, 1 otherwise
    CLI::Option *h_opt = nullptr, *origin_opt = nullptr, *orient_opt = nullptr, *level_opt = nullptr;

    void add_to(CLI::App* app) {
        app->add_option("--cost", cost, "POGRID1 cost file");
        app->add_option("--density", density, "POGRID1 density file, converted with --sigma, --power and --xi");
        app->add_option("--mask", mask, "PGM/PBM wall mask; dark pixels are walls, cost 1 elsewhere");
        app->add_option("--uniform", uniform, "uniform-cost grid with spatial dimensions nx,ny[,nz]")->delimiter(',');
        h_opt = app->add_option("--spacing", h, "spatial step h for --uniform and --mask");
        origin_opt = app->add_option("--origin", origin, "grid origin (default: centred for --uniform, 0 for --mask)")
                         ->delimiter(',');
        orient_opt = app->add_option("--orientations", orientations, "number of orientations on the circle (d = 2)");
        level_opt = app->add_option("--sphere-level", sphere_level, "icosphere subdivision level (d = 3)");
        app->add_option("--sigma", sigma, "density contrast in C = 1/(1 + sigma |W+/max W+|^p)");
        app->add_option("--power", power, "exponent p of the density contrast");
        app->add_option("--xi", xi, "spatial/angular balance: C1 = xi C2 (0 selects the source default)");
    }

    int count() const { return !cost.empty() + !density.empty() + !mask.empty() + !uniform.empty(); }

    CostField build() const {
        if (count() != 1) throw DomainError("choose exactly one of --cost, --density, --mask and --uniform");
        const bool grid_flags = h_opt->count() || origin_opt->count() || orient_opt->count() || level_opt->count();
        if ((!cost.empty() || !density.empty()) && grid_flags)
            throw DomainError("--spacing, --origin, --orientations and --sphere-level conflict with a grid read from file");
        if (!(h > 0)) throw DomainError("--spacing must be positive");
        if (!cost.empty()) {
            CostField C = load_cost(cost);
            if (xi > 0) {
                for (std::size_t i = 0; i < C.c1.size(); ++i)
                    if (std::isfinite(C.c2[i])) C.c1[i] = xi * C.c2[i];
                C.xi = xi;
            }
            return C;
        }
        if (!density.empty()) return cost_from_density(load_density(density), sigma, power, xi > 0 ? xi : 0.1);
        const double x = xi > 0 ? xi : 1.0;
        if (!mask.empty()) {
            int nx = 0, ny = 0;
            auto m = read_pnm_mask(mask, nx, ny);
            Vec3 o = Vec3::Zero();
            if (!origin.empty()) {
                if (origin.size() != 2) throw DomainError("--origin needs 2 values for a mask");
                o = Vec3(origin[0], origin[1], 0);
            }
            if (level_opt->count()) throw DomainError("--sphere-level conflicts with a 2D mask");
            ProductGrid g{SpatialGrid::make(2, {nx, ny, 1}, h, o), build_s1(orientations)};
            g.spatial.mask = m;
            CostField C = CostField::uniform(g, x, 1.0);
            const int no = g.sphere.size();
            for (std::size_t i = 0; i < C.c1.size(); ++i)
                if (g.spatial.masked(i / no)) C.c1[i] = C.c2[i] = inf;
            return C;
        }
        const int d = static_cast<int>(uniform.size());
        if (d != 2 && d != 3) throw DomainError("--uniform needs 2 or 3 spatial dimensions");
        for (int v : uniform)
            if (v < 2) throw DomainError("--uniform dimensions must be at least 2");
        if (d == 2 && level_opt->count()) throw DomainError("--sphere-level conflicts with a 2D grid");
        if (d == 3 && orient_opt->count()) throw DomainError("--orientations conflicts with a 3D grid");
        Vec3 o = Vec3::Zero();
        if (!origin.empty()) {
            if (static_cast<int>(origin.size()) != d) throw DomainError("--origin must have one value per spatial dimension");
            for (int a = 0; a < d; ++a) o(a) = origin[a];
        } else {
            for (int a = 0; a < d; ++a) o(a) = -h * (uniform[a] - 1) / 2.0;
        }
        std::array<int, 3> dims{uniform[0], uniform[1], d == 3 ? uniform[2] : 1};
        ProductGrid g{SpatialGrid::make(d, dims, h, o), d == 2 ? build_s1(orientations) : build_s2_icosphere(sphere_level)};
        return CostField::uniform(g, x, 1.0);
    }

    json inputs() const {
        json j = json::object();
        if (!cost.empty()) j["cost"] = cost;
        if (!density.empty()) j["density"] = density;
        if (!mask.empty()) j["mask"] = mask;
        return j;
    }
};

bool same_grid(const ProductGrid& a, const ProductGrid& b) {
    return a.spatial.d == b.spatial.d && a.spatial.dims == b.spatial.dims && a.spatial.h == b.spatial.h &&
           a.spatial.origin == b.spatial.origin && a.sphere.kind == b.sphere.kind && a.sphere.size() == b.sphere.size();
}

// Runs f(i) for i in [0, n) on up to worker_count() threads; exceptions are collected per index.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f, std::vector<std::exception_ptr>& errors) {
    errors.assign(n, nullptr);
    const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(worker_count()));
    std::atomic<std::size_t> next{0};
    auto run = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                f(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    if (workers <= 1) {
        run();
        return;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run);
    for (auto& t : pool) t.join();
}

std::string numbered(const std::string& path, std::size_t i, std::size_t count) {
    if (count == 1) return path;
    std::filesystem::path p(path);
    std::string stem = p.stem().string() + "_" + std::to_string(i);
    return (p.parent_path() / (stem + p.extension().string())).string();
}

std::string sidecar_of(const std::string& csv) {
    std::filesystem::path p(csv);
    return (p.parent_path() / (p.stem().string() + ".json")).string();
}

std::string path_csv(const GeodesicPath& path, int d) {
    std::ostringstream os;
    os << "t,x,y" << (d == 3 ? ",z" : "") << ",nx,ny" << (d == 3 ? ",nz" : "") << ",mode,U\n";
    for (const auto& s : path.samples) {
        os << format_number(s.t);
        for (int a = 0; a < d; ++a) os << ',' << format_number(s.p.x(a));
        for (int a = 0; a < d; ++a) os << ',' << format_number(s.p.n(a));
        os << ',' << mode_name(s.mode) << ',' << format_number(s.u) << '\n';
    }
    return os.str();
}

PointPO best_orientation(const DistanceMap& U, const PointPO& p) {
    PointPO best = p;
    double bu = inf;
    for (const auto& v : U.grid.sphere.vertices) {
        PointPO q = PointPO::make(p.d, p.x, v);
        double u = U.interpolate(q);
        if (u < bu) {
            bu = u;
            best = q;
        }
    }
    return best;
}

struct Runner {
    std::ostream& out;
    std::ostream& err;
};

int cmd_solve(CLI::App& sub, const CostSource& src, const std::vector<std::string>& seeds,
              const std::vector<std::string>& stops, const std::string& variant, double epsilon,
              const std::string& backend, const std::string& solver, double theta, const std::string& out_path,
              Runner& io) {
    auto t0 = std::chrono::steady_clock::now();
    CostField C = src.build();
    const int d = C.grid.spatial.d;
    ModelParams P;
    P.variant = parse_variant(variant);
    P.epsilon = epsilon;
    P.validate();
    std::vector<PointPO> S, stop;
    for (const auto& s : seeds) S.push_back(parse_state(s, d));
    for (const auto& s : stops) stop.push_back(parse_state(s, d));
    json stats;
    DistanceMap U;
    if (solver == "fm") {
        SolveConfig cfg;
        cfg.backend = parse_backend(backend);
        cfg.stop = stop;
        SolveStats st;
        U = fast_march(C, P, S, cfg, &st);
        stats = {{"nodes", C.grid.size()}, {"accepted", st.accepted}, {"queue_pops", st.pops},
                 {"queue_pushes", st.pushes}, {"updates", st.updates}, {"solve_seconds", st.seconds}};
    } else if (solver == "iterative") {
        if (!stop.empty()) throw DomainError("--stop applies to the fast-marching solver only");
        for (const auto& p : S)
            if (C.grid.spatial.masked(C.grid.spatial_of(C.grid.snap(p)))) throw DomainError("seed lies on a masked node");
        IterConfig cfg;
        cfg.theta = theta;
        cfg.threads = worker_count();
        IterStats st;
        U = iterative_solve(C, P, S, cfg, &st);
        stats = {{"nodes", C.grid.size()}, {"outer_iterations", st.outer}, {"residual", st.residual},
                 {"dt", st.dt},           {"clamp", st.clamp},          {"solve_seconds", st.seconds}};
    } else {
        throw DomainError("unknown solver '" + solver + "' (expected fm or iterative)");
    }
    U.xi = C.xi;
    store_distance(out_path, U);
    json resolved = {{"dimension", d}, {"xi", C.xi}, {"grid", grid_descriptor(C.grid)},
                     {"backend", backend_name(solver == "fm" ? resolve_backend(parse_backend(backend), d) : U.backend)}};
    resolved["seeds"] = json::array();
    for (const auto& p : S) resolved["seeds"].push_back(state_json(p));
    write_manifest(out_path + ".manifest.json", sub, resolved, src.inputs(), {{"distance", out_path}},
                   seconds_since(t0), stats);
    io.out << "wrote " << out_path << " (" << C.grid.size() << " nodes)\n";
    return exit_ok;
}

int cmd_trace(CLI::App& sub, const CostSource& src, const std::string& dist_path, const std::vector<std::string>& ends,
              double step, bool all_orientations, double smoothing, double seed_radius, const std::string& out_path,
              Runner& io) {
    auto t0 = std::chrono::steady_clock::now();
    DistanceMap U = load_distance(dist_path);
    const int d = U.grid.spatial.d;
    CostField C;
    if (src.count() == 0) {
        C = CostField::uniform(U.grid, U.xi, 1.0);
    } else {
        C = src.build();
        if (!same_grid(C.grid, U.grid)) throw DomainError("cost grid does not match the distance map grid");
    }
    ModelParams P;
    P.variant = U.variant;
    P.epsilon = U.epsilon;
    TraceConfig cfg;
    cfg.dt = step;
    cfg.smoothing = smoothing;
    cfg.seed_radius = seed_radius;

    std::vector<PointPO> E;
    for (const auto& e : ends) {
        PointPO p = parse_state(e, d);
        E.push_back(all_orientations ? best_orientation(U, p) : p);
    }
    std::vector<GeodesicPath> paths(E.size());
    std::vector<std::exception_ptr> errors;
    parallel_for(E.size(), [&](std::size_t i) { paths[i] = backtrack(U, C, P, E[i], cfg); }, errors);

    json outputs = json::array();
    json stats = json::array();
    std::exception_ptr first_error;
    for (std::size_t i = 0; i < E.size(); ++i) {
        if (errors[i]) {
            if (!first_error) first_error = errors[i];
            continue;
        }
        const GeodesicPath& path = paths[i];
        std::string csv = numbered(out_path, i, E.size());
        write_file(csv, path_csv(path, d));
        json side;
        side["end"] = state_json(path.end);
        side["source"] = state_json(path.source);
        side["length"] = path.length;
        side["u_end"] = U.interpolate(path.end);
        side["samples"] = path.samples.size();
        side["interest_points"] = json::array();
        for (const auto& ip : detect_interest_points(path, C)) {
            side["interest_points"].push_back({{"kind", interest_name(ip.kind)},
                                               {"t0", ip.t0},
                                               {"t1", ip.t1},
                                               {"x", std::vector<double>(ip.x.data(), ip.x.data() + d)}});
        }
        write_file(sidecar_of(csv), side.dump(2) + "\n");
        outputs.push_back({{"path", csv}, {"interest_points", sidecar_of(csv)}});
        stats.push_back({{"samples", path.samples.size()}, {"length", path.length}});
        io.out << "wrote " << csv << " (" << path.samples.size() << " samples, length " << format_number(path.length)
               << ", " << side["interest_points"].size() << " interest points)\n";
    }
    json resolved = {{"variant", variant_name(U.variant)}, {"epsilon", U.epsilon}, {"xi", C.xi}};
    resolved["ends"] = json::array();
    for (const auto& p : E) resolved["ends"].push_back(state_json(p));
    json inputs = src.inputs();
    inputs["distance"] = dist_path;
    write_manifest(out_path + ".manifest.json", sub, resolved, inputs, outputs, seconds_since(t0), stats);
    if (first_error) std::rethrow_exception(first_error);
    return exit_ok;
}

int cmd_compare(CLI::App& sub, const std::string& a_path, const std::string& b_path, double tol,
                const std::string& out_path, Runner& io) {
    auto t0 = std::chrono::steady_clock::now();
    DistanceMap A = load_distance(a_path), B = load_distance(b_path);
    if (!same_grid(A.grid, B.grid)) throw DomainError("grid mismatch between " + a_path + " and " + b_path);
    const double h = A.grid.spatial.h;
    std::vector<double> rel;
    std::size_t finite_mismatch = 0, exceed = 0, below = 0;
    double max_rel = 0, min_signed = inf;
    for (std::size_t i = 0; i < A.values.size(); ++i) {
        double a = A.values[i], b = B.values[i];
        if (std::isfinite(a) != std::isfinite(b)) ++finite_mismatch;
        if (!std::isfinite(a) || !std::isfinite(b)) continue;
        double r = std::abs(a - b) / std::max(std::abs(b), h);
        rel.push_back(r);
        max_rel = std::max(max_rel, r);
        exceed += r > tol;
        below += a < b - 2 * h;
        min_signed = std::min(min_signed, a - b);
    }
    double median = 0;
    if (!rel.empty()) {
        auto mid = rel.begin() + static_cast<std::ptrdiff_t>(rel.size() / 2);
        std::nth_element(rel.begin(), mid, rel.end());
        median = *mid;
    }
    json report = {{"nodes_compared", rel.size()},
                   {"finite_mismatch", finite_mismatch},
                   {"max_relative", max_rel},
                   {"median_relative", median},
                   {"tolerance", tol},
                   {"exceeding_tolerance", exceed},
                   {"a_below_b_minus_2h", below},
                   {"min_a_minus_b", rel.empty() ? 0.0 : min_signed}};
    io.out << "nodes compared      " << rel.size() << "\n"
           << "finite mismatch     " << finite_mismatch << "\n"
           << "max relative diff   " << format_number(max_rel) << "\n"
           << "median relative     " << format_number(median) << "\n"
           << "exceeding " << format_number(tol) << "      " << exceed << "\n"
           << "a < b - 2h          " << below << "\n";
    if (!out_path.empty()) {
        write_file(out_path, report.dump(2) + "\n");
        write_manifest(out_path + ".manifest.json", sub, json::object(), {{"a", a_path}, {"b", b_path}},
                       {{"report", out_path}}, seconds_since(t0), report);
    }
    return exit_ok;
}

std::string pbm(const std::vector<std::uint8_t>& m, int nx, int ny) {
    std::ostringstream os;
    os << "P1\n" << nx << ' ' << ny << '\n';
    for (int row = 0; row < ny; ++row) {
        int j = ny - 1 - row;
        for (int i = 0; i < nx; ++i) os << (m[std::size_t(j) * nx + i] ? '1' : '0') << (i + 1 < nx ? ' ' : '\n');
    }
    return os.str();
}

int cmd_phantom(CLI::App& sub, const std::string& preset_name_in, int n, int level, double cheap, double sigma,
                int power, double xi, int nx, int ny, const std::string& out_path, const std::string& cost_out,
                Runner& io) {
    auto t0 = std::chrono::steady_clock::now();
    PhantomPreset preset = parse_preset(preset_name_in);
    json outputs, resolved = {{"preset", preset_name(preset)}};
    if (preset == PhantomPreset::pompidou_mask) {
        if (!cost_out.empty()) throw DomainError("--cost-out does not apply to the mask preset; solve with --mask");
        if (nx < 8 || ny < 8) throw DomainError("mask needs at least 8 x 8 pixels");
        write_file(out_path, pbm(pompidou_walls(nx, ny), nx, ny));
        outputs["mask"] = out_path;
        resolved["pixels"] = {nx, ny};
        io.out << "wrote " << out_path << " (" << nx << " x " << ny << " mask)\n";
    } else {
        if (n < 8) throw DomainError("--n must be at least 8");
        const double amp = cheap > 0 ? cheap : half_cost_amplitude(sigma, power);
        PhantomLayout L = preset == PhantomPreset::two_crossings ? two_crossings_layout(n) : torsion_parallel_layout(n, amp);
        ProductGrid g{SpatialGrid::make(3, {n, n, n}, 1.0, Vec3::Zero()), build_s2_icosphere(level)};
        DensityField W = synth_tube_phantom(g, L.tubes);
        store_density(out_path, W);
        outputs["density"] = out_path;
        resolved["tubes"] = L.names;
        if (preset == PhantomPreset::torsion_parallel) resolved["cheap_amplitude"] = amp;
        if (!cost_out.empty()) {
            store_cost(cost_out, cost_from_density(W, sigma, power, xi));
            outputs["cost"] = cost_out;
        }
        io.out << "wrote " << out_path << " (" << g.size() << " nodes)\n";
    }
    write_manifest(out_path + ".manifest.json", sub, resolved, json::object(), outputs, seconds_since(t0), json::object());
    return exit_ok;
}

int cmd_bench(CLI::App& sub, const std::vector<int>& sizes, int dim, int orientations, int level,
              const std::string& variant, double epsilon, int repeats, const std::string& out_path, Runner& io) {
    auto t0 = std::chrono::steady_clock::now();
    if (sizes.size() < 2) throw DomainError("--sizes needs at least two grid sizes");
    if (dim != 2 && dim != 3) throw DomainError("--dim must be 2 or 3");
    ModelParams P;
    P.variant = parse_variant(variant);
    P.epsilon = epsilon;
    P.validate();
    std::ostringstream csv;
    csv << "n,nodes,seconds,accepted,queue_pops\n";
    std::vector<double> lx, ly;
    json stats = json::array();
    for (int n : sizes) {
        if (n < 3) throw DomainError("bench sizes must be at least 3");
        const double h = 1.0 / (n - 1);
        Vec3 o = Vec3::Constant(-0.5);
        if (dim == 2) o.z() = 0;
        ProductGrid g{SpatialGrid::make(dim, {n, n, dim == 3 ? n : 1}, h, o),
                      dim == 2 ? build_s1(orientations) : build_s2_icosphere(level)};
        CostField C = CostField::uniform(g);
        PointPO seed = dim == 2 ? PointPO::make2(0, 0, 0) : PointPO::make(3, Vec3::Zero(), Vec3::UnitX());
        double best = inf;
        SolveStats st;
        for (int r = 0; r < std::max(1, repeats); ++r) {
            SolveStats s;
            fast_march(C, P, {seed}, {}, &s);
            if (s.seconds < best) {
                best = s.seconds;
                st = s;
            }
        }
        csv << n << ',' << g.size() << ',' << format_number(best) << ',' << st.accepted << ',' << st.pops << '\n';
        lx.push_back(std::log(double(g.size())));
        ly.push_back(std::log(best));
        stats.push_back({{"n", n}, {"nodes", g.size()}, {"seconds", best}});
    }
    const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
    const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    const double slope = sxy / sxx;
    write_file(out_path, csv.str());
    write_manifest(out_path + ".manifest.json", sub, {{"slope", slope}}, json::object(), {{"bench", out_path}},
                   seconds_since(t0), stats);
    io.out << csv.str() << "log-log slope " << format_number(slope) << "\n";
    return exit_ok;
}

}  // namespace

PointPO parse_state(const std::string& text, int d) {
    auto v = split_numbers(text, "state");
    auto unit = [&](Vec3 n) {
        if (!(n.norm() > 1e-12)) throw ParseError("bad state '" + text + "': orientation vector is zero");
        return Vec3(n / n.norm());
    };
    if (d == 2) {
        if (v.size() == 3) return PointPO::make2(v[0], v[1], v[2]);
        if (v.size() == 4) return PointPO::make(2, Vec3(v[0], v[1], 0), unit(Vec3(v[2], v[3], 0)));
        throw ParseError("bad state '" + text + "': expected x,y,theta or x,y,nx,ny for a 2D grid");
    }
    if (d == 3) {
        if (v.size() == 5) {
            const double th = v[3], ph = v[4];
            return PointPO::make(3, Vec3(v[0], v[1], v[2]),
                                 Vec3(std::cos(th) * std::cos(ph), std::sin(th) * std::cos(ph), std::sin(ph)));
        }
        if (v.size() == 6) return PointPO::make(3, Vec3(v[0], v[1], v[2]), unit(Vec3(v[3], v[4], v[5])));
        throw ParseError("bad state '" + text + "': expected x,y,z,theta,phi or x,y,z,nx,ny,nz for a 3D grid");
    }
    throw DomainError("dimension must be 2 or 3");
}

int worker_count() {
    if (const char* s = std::getenv("RSEIK_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(s, &end, 10);
        if (end != s && *end == '\0' && v > 0) return static_cast<int>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Reeds-Shepp car distance maps and geodesics on position-orientation space", "rseik"};
    app.require_subcommand(1);
    app.option_defaults()->always_capture_default();
    Runner io{out, err};

    // solve
    CLI::App* solve = app.add_subcommand("solve", "compute a distance map from one or more seeds");
    CostSource solve_src;
    solve_src.add_to(solve);
    std::vector<std::string> seeds, stops;
    std::string variant = "symmetric", backend = "auto", solver = "fm", solve_out;
    double epsilon = 0.1, theta = 1e-4;
    solve->add_option("--seed", seeds, "seed state(s); angles in radians")->required();
    solve->add_option("--stop", stops, "stop once these states are accepted");
    solve->add_option("--variant", variant, "symmetric or forward");
    solve->add_option("--epsilon", epsilon, "anisotropy parameter in (0, 1]");
    solve->add_option("--backend", backend, "auto, semi_lagrangian or hamiltonian_fd");
    solve->add_option("--solver", solver, "fm (fast marching) or iterative");
    solve->add_option("--theta", theta, "convergence tolerance of the iterative solver");
    solve->add_option("--out", solve_out, "output POGRID1 distance file")->required();

    // trace
    CLI::App* trace = app.add_subcommand("trace", "backtrack geodesics from end states to the seed");
    CostSource trace_src;
    trace_src.add_to(trace);
    std::string dist_path, trace_out;
    std::vector<std::string> ends;
    double step = 0.04, smoothing = 0, seed_radius = 0;
    bool all_orient = false;
    trace->add_option("--distance", dist_path, "POGRID1 distance file")->required();
    trace->add_option("--end", ends, "end state(s); angles in radians")->required();
    trace->add_option("--step", step, "F-length of a descent step");
    trace->add_flag("--all-orientations", all_orient, "ignore the end orientation and start from the best one");
    trace->add_option("--smoothing", smoothing, "Gaussian scale of the spatial derivative, in voxels");
    trace->add_option("--seed-radius", seed_radius, "stop once U falls below this (0 selects 2 h min C)");
    trace->add_option("--out", trace_out, "output CSV (numbered when several ends are given)")->required();

    // compare
    CLI::App* compare = app.add_subcommand("compare", "relative differences between two distance maps");
    std::string cmp_a, cmp_b, cmp_out;
    double tol = 0.05;
    compare->add_option("a", cmp_a, "first distance file")->required();
    compare->add_option("b", cmp_b, "reference distance file")->required();
    compare->add_option("--tol", tol, "relative tolerance |a - b| / max(|b|, h)");
    compare->add_option("--out", cmp_out, "optional JSON report");

    // phantom
    CLI::App* phantom = app.add_subcommand("phantom", "write a synthetic density or mask preset");
    std::string preset, ph_out, cost_out;
    int n = 32, level = 2, nx = 200, ny = 100, power = 3;
    double cheap = 0, sigma = 3.0, xi = 0.1;
    phantom->add_option("--preset", preset, "two_crossings, torsion_parallel or pompidou_mask")->required();
    phantom->add_option("--n", n, "voxels per side of the 3D phantoms (h = 1, origin 0)");
    phantom->add_option("--sphere-level", level, "icosphere level of the orientation grid");
    phantom->add_option("--cheap-amplitude", cheap, "amplitude of the cheap parallel bundle (0: half cost)");
    phantom->add_option("--sigma", sigma, "density contrast used for --cost-out and the half-cost amplitude");
    phantom->add_option("--power", power, "contrast exponent");
    phantom->add_option("--xi", xi, "spatial/angular balance used for --cost-out");
    phantom->add_option("--nx", nx, "mask width in pixels");
    phantom->add_option("--ny", ny, "mask height in pixels");
    phantom->add_option("--out", ph_out, "output density (POGRID1) or mask (PBM)")->required();
    phantom->add_option("--cost-out", cost_out, "also write the cost field");

    // bench
    CLI::App* bench = app.add_subcommand("bench", "time fast marching over a sweep of grid sizes");
    std::vector<int> sizes{33, 49, 65, 97};
    int dim = 2, b_orient = 36, b_level = 2, repeats = 1;
    std::string b_variant = "symmetric", bench_out;
    double b_eps = 0.1;
    bench->add_option("--sizes", sizes, "spatial points per side")->delimiter(',');
    bench->add_option("--dim", dim, "2 or 3");
    bench->add_option("--orientations", b_orient, "orientations for d = 2");
    bench->add_option("--sphere-level", b_level, "icosphere level for d = 3");
    bench->add_option("--variant", b_variant, "symmetric or forward");
    bench->add_option("--epsilon", b_eps, "anisotropy parameter");
    bench->add_option("--repeats", repeats, "timings per size; the fastest is kept");
    bench->add_option("--out", bench_out, "output CSV")->required();

    std::vector<std::string> rev(args.rbegin(), args.rend());
    try {
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? exit_ok : exit_usage;
    }

    try {
        if (solve->parsed())
            return cmd_solve(*solve, solve_src, seeds, stops, variant, epsilon, backend, solver, theta, solve_out, io);
        if (trace->parsed())
            return cmd_trace(*trace, trace_src, dist_path, ends, step, all_orient, smoothing, seed_radius, trace_out, io);
        if (compare->parsed()) return cmd_compare(*compare, cmp_a, cmp_b, tol, cmp_out, io);
        if (phantom->parsed())
            return cmd_phantom(*phantom, preset, n, level, cheap, sigma, power, xi, nx, ny, ph_out, cost_out, io);
        if (bench->parsed())
            return cmd_bench(*bench, sizes, dim, b_orient, b_level, b_variant, b_eps, repeats, bench_out, io);
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return exit_numerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_usage;
    }
    return exit_usage;
}

}  // namespace rseik
