#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <numbers>
#include <sstream>
#include <unistd.h>

#include "json.hpp"
#include "rseik/cli.hpp"
#include "rseik/cost.hpp"
#include "rseik/errors.hpp"
#include "rseik/pogrid.hpp"
#include "rseik/solver_fm.hpp"

using namespace rseik;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double pi = std::numbers::pi;

class Cli : public ::testing::Test {
protected:
    fs::path dir;
    std::string out, err;

    void SetUp() override {
        dir = fs::temp_directory_path() / ("rseik_cli_" + std::to_string(::getpid()) + "_" +
                                           ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    std::string path(const std::string& name) const { return (dir / name).string(); }

    int run(std::vector<std::string> args) {
        std::ostringstream o, e;
        int code = run_cli(args, o, e);
        out = o.str();
        err = e.str();
        return code;
    }

    json read_json(const std::string& p) const { return json::parse(read_file(p)); }

    std::vector<std::vector<std::string>> read_csv(const std::string& p) const {
        std::vector<std::vector<std::string>> rows;
        std::istringstream is(read_file(p));
        std::string line;
        while (std::getline(is, line)) {
            std::vector<std::string> row;
            std::istringstream ls(line);
            std::string cell;
            while (std::getline(ls, cell, ',')) row.push_back(cell);
            rows.push_back(row);
        }
        return rows;
    }

    // 50 x 50 spatial points, 36 orientations, h = 0.04, centred on the origin.
    std::vector<std::string> calib(const std::string& out_name, const std::string& variant = "symmetric") {
        return {"solve", "--uniform", "50,50", "--spacing", "0.04", "--orientations", "36", "--seed", "0.02,0.02,0",
                "--variant", variant, "--out", path(out_name)};
    }
};

}  // namespace

TEST(ParseState, Forms) {
    auto a = parse_state("0.5,-1,1.5707963267948966", 2);
    EXPECT_NEAR(a.x.x(), 0.5, 1e-15);
    EXPECT_NEAR(a.n.y(), 1.0, 1e-12);
    auto b = parse_state("1,2,0,3", 2);
    EXPECT_NEAR(b.n.y(), 1.0, 1e-15);
    auto c = parse_state("1,2,3,0,1.5707963267948966", 3);
    EXPECT_NEAR(c.n.z(), 1.0, 1e-12);
    auto d = parse_state("1,2,3,0,3,4", 3);
    EXPECT_NEAR(d.n.y(), 0.6, 1e-15);
    EXPECT_THROW(parse_state("1,2", 2), ParseError);
    EXPECT_THROW(parse_state("1,2,x", 2), ParseError);
    EXPECT_THROW(parse_state("1,2,0,0", 2), ParseError);
    EXPECT_THROW(parse_state("1,2,3,4", 3), ParseError);
}

TEST(WorkerCount, HonoursEnvironment) {
    ::setenv("RSEIK_THREADS", "3", 1);
    EXPECT_EQ(worker_count(), 3);
    ::setenv("RSEIK_THREADS", "zero", 1);
    EXPECT_GE(worker_count(), 1);
    ::unsetenv("RSEIK_THREADS");
    EXPECT_GE(worker_count(), 1);
}

TEST_F(Cli, HelpAndUsageErrors) {
    EXPECT_EQ(run({"--help"}), exit_ok);
    EXPECT_EQ(run({}), exit_usage);
    EXPECT_EQ(run({"frobnicate"}), exit_usage);
    EXPECT_EQ(run({"solve", "--uniform", "10,10"}), exit_usage);
}

TEST_F(Cli, SolveUniformGridAndManifest) {
    ASSERT_EQ(run(calib("u.pogrid")), exit_ok) << err;
    DistanceMap U = load_distance(path("u.pogrid"));
    EXPECT_EQ(U.grid.size(), 50u * 50u * 36u);
    EXPECT_EQ(U.value_at(PointPO::make2(0.02, 0.02, 0)), 0.0);
    json m = read_json(path("u.pogrid.manifest.json"));
    EXPECT_EQ(m["command"], "solve");
    for (auto flag : {"cost", "density", "mask", "uniform", "spacing", "origin", "orientations", "sphere-level", "sigma",
                      "power", "xi", "seed", "stop", "variant", "epsilon", "backend", "solver", "theta", "out"})
        EXPECT_TRUE(m["parameters"].contains(flag)) << flag;
    EXPECT_EQ(m["parameters"]["spacing"], "0.04");
    EXPECT_GT(m["stats"]["accepted"].get<int>(), 0);
    EXPECT_GT(m["stats"]["queue_pops"].get<int>(), 0);
    EXPECT_TRUE(m.contains("wall_clock_seconds"));
}

TEST_F(Cli, SolveIsDeterministic) {
    ASSERT_EQ(run(calib("a.pogrid", "forward")), exit_ok);
    ASSERT_EQ(run(calib("b.pogrid", "forward")), exit_ok);
    EXPECT_EQ(read_file(path("a.pogrid")), read_file(path("b.pogrid")));
    ASSERT_EQ(run({"trace", "--distance", path("a.pogrid"), "--end", "0.5,0.5,2", "--out", path("p.csv")}), exit_ok) << err;
    ASSERT_EQ(run({"trace", "--distance", path("a.pogrid"), "--end", "0.5,0.5,2", "--out", path("q.csv")}), exit_ok);
    EXPECT_EQ(read_file(path("p.csv")), read_file(path("q.csv")));
    EXPECT_EQ(read_file(path("p.json")), read_file(path("q.json")));
}

TEST_F(Cli, SolveBalanceParameter) {
    ASSERT_EQ(run({"solve", "--uniform", "41,41", "--spacing", "0.05", "--orientations", "36", "--seed", "0,0,0",
                   "--epsilon", "0.1", "--xi", "0.02", "--out", path("r.pogrid")}),
              exit_ok)
        << err;
    DistanceMap U = load_distance(path("r.pogrid"));
    EXPECT_DOUBLE_EQ(U.xi, 0.02);
    EXPECT_NEAR(U.interpolate(PointPO::make2(0.5, 0, 0)), 0.5 * 0.02, 0.05 * 0.5 * 0.02);
    EXPECT_NEAR(U.interpolate(PointPO::make2(0, 0, pi / 2)), pi / 2, 0.03 * pi / 2);
    EXPECT_EQ(read_json(path("r.pogrid.manifest.json"))["resolved"]["xi"], 0.02);
}

TEST_F(Cli, MultiSeedIsMinimumOverSeeds) {
    auto base = [&](std::vector<std::string> seeds, const std::string& name) {
        std::vector<std::string> a = {"solve", "--uniform", "41,21", "--spacing", "0.05", "--orientations", "32"};
        for (auto& s : seeds) {
            a.push_back("--seed");
            a.push_back(s);
        }
        a.push_back("--out");
        a.push_back(path(name));
        return run(a);
    };
    ASSERT_EQ(base({"-0.5,0,0"}, "s0.pogrid"), exit_ok);
    ASSERT_EQ(base({"0.5,0,3.141592653589793"}, "s1.pogrid"), exit_ok);
    ASSERT_EQ(base({"-0.5,0,0", "0.5,0,3.141592653589793"}, "s01.pogrid"), exit_ok);
    DistanceMap A = load_distance(path("s0.pogrid")), B = load_distance(path("s1.pogrid")),
                AB = load_distance(path("s01.pogrid"));
    EXPECT_EQ(AB.seeds.size(), 2u);
    const double h = 0.05;
    for (std::size_t i = 0; i < AB.values.size(); ++i) {
        double m = std::min(A.values[i], B.values[i]);
        ASSERT_LE(AB.values[i], m + 1e-12) << i;
        ASSERT_GE(AB.values[i], m - 2 * h) << i;
    }
}

TEST_F(Cli, SolveErrors) {
    auto grid = std::vector<std::string>{"solve", "--uniform", "11,11", "--spacing", "0.1", "--orientations", "8"};
    auto with = [&](std::vector<std::string> extra) {
        auto a = grid;
        a.insert(a.end(), extra.begin(), extra.end());
        return run(a);
    };
    EXPECT_EQ(with({"--seed", "0,0", "--out", path("x.pogrid")}), exit_usage);
    EXPECT_NE(err.find("bad state"), std::string::npos);
    EXPECT_EQ(with({"--seed", "0,0,0,0,0", "--out", path("x.pogrid")}), exit_usage);
    EXPECT_EQ(with({"--seed", "0,0,0", "--sphere-level", "1", "--out", path("x.pogrid")}), exit_usage);
    EXPECT_EQ(with({"--seed", "0,0,0", "--cost", path("none.pogrid"), "--out", path("x.pogrid")}), exit_usage);
    EXPECT_EQ(with({"--seed", "0,0,0", "--variant", "sideways", "--out", path("x.pogrid")}), exit_usage);
    EXPECT_EQ(with({"--seed", "0,0,0", "--epsilon", "0", "--out", path("x.pogrid")}), exit_usage);
    EXPECT_EQ(with({"--seed", "0,0,0", "--backend", "magic", "--out", path("x.pogrid")}), exit_usage);
    EXPECT_FALSE(fs::exists(path("x.pogrid")));

    ASSERT_EQ(run({"phantom", "--preset", "pompidou_mask", "--nx", "40", "--ny", "20", "--out", path("m.pbm")}), exit_ok);
    EXPECT_EQ(run({"solve", "--mask", path("m.pbm"), "--seed", "0,0,0", "--out", path("x.pogrid")}), exit_usage);
    EXPECT_NE(err.find("masked"), std::string::npos);
}

TEST_F(Cli, TraceEndAtSeedIsOneRow) {
    ASSERT_EQ(run(calib("u.pogrid")), exit_ok);
    ASSERT_EQ(run({"trace", "--distance", path("u.pogrid"), "--end", "0.02,0.02,0", "--out", path("p.csv")}), exit_ok) << err;
    auto rows = read_csv(path("p.csv"));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "x", "y", "nx", "ny", "mode", "U"}));
    EXPECT_EQ(rows[1][6], "0");
    json side = read_json(path("p.json"));
    EXPECT_EQ(side["length"], 0.0);
    json m = read_json(path("p.csv.manifest.json"));
    for (auto flag : {"distance", "end", "step", "all-orientations", "smoothing", "seed-radius", "out"})
        EXPECT_TRUE(m["parameters"].contains(flag)) << flag;
}

TEST_F(Cli, TraceBatchAndFreeOrientation) {
    ASSERT_EQ(run(calib("u.pogrid")), exit_ok);
    ::setenv("RSEIK_THREADS", "2", 1);
    int code = run({"trace", "--distance", path("u.pogrid"), "--end", "0.6,0.1,0", "--end", "-0.5,0.4,1",
                    "--end", "0.3,-0.6,-1", "--all-orientations", "--out", path("batch.csv")});
    ::unsetenv("RSEIK_THREADS");
    ASSERT_EQ(code, exit_ok) << err;
    DistanceMap U = load_distance(path("u.pogrid"));
    for (int i = 0; i < 3; ++i) {
        auto rows = read_csv(path("batch_" + std::to_string(i) + ".csv"));
        ASSERT_GE(rows.size(), 3u);
        // The start orientation minimises U over the sphere at the end position.
        PointPO start = PointPO::make(2, Vec3(std::stod(rows[1][1]), std::stod(rows[1][2]), 0),
                                      Vec3(std::stod(rows[1][3]), std::stod(rows[1][4]), 0));
        double u0 = U.interpolate(start);
        for (const auto& v : U.grid.sphere.vertices) EXPECT_LE(u0, U.interpolate(PointPO::make(2, start.x, v)) + 1e-6);
        EXPECT_TRUE(fs::exists(path("batch_" + std::to_string(i) + ".json")));
    }
}

TEST_F(Cli, TraceErrors) {
    ASSERT_EQ(run(calib("u.pogrid")), exit_ok);
    EXPECT_EQ(run({"trace", "--distance", path("u.pogrid"), "--end", "5,5,0", "--out", path("p.csv")}), exit_usage);
    EXPECT_EQ(run({"trace", "--distance", path("missing.pogrid"), "--end", "0,0,0", "--out", path("p.csv")}), exit_usage);

    // A wall splitting the domain leaves the right half unreachable.
    std::ostringstream pbm;
    pbm << "P1\n20 10\n";
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 20; ++c) pbm << (c == 10 ? '1' : '0') << (c == 19 ? '\n' : ' ');
    write_file(path("wall.pbm"), pbm.str());
    ASSERT_EQ(run({"solve", "--mask", path("wall.pbm"), "--orientations", "16", "--seed", "3,5,0", "--out",
                   path("w.pogrid")}),
              exit_ok)
        << err;
    EXPECT_EQ(run({"trace", "--distance", path("w.pogrid"), "--mask", path("wall.pbm"), "--orientations", "16", "--end",
                   "15,5,0", "--out", path("p.csv")}),
              exit_usage);
    EXPECT_NE(err.find("not reached"), std::string::npos);
}

TEST_F(Cli, TraceOnWallMaskAvoidsWalls) {
    ASSERT_EQ(run({"phantom", "--preset", "pompidou_mask", "--nx", "100", "--ny", "50", "--out", path("m.pbm")}), exit_ok);
    // Exits of the floor plan: the gaps in the left and right outer walls.
    ASSERT_EQ(run({"solve", "--mask", path("m.pbm"), "--orientations", "32", "--epsilon", "0.1", "--seed", "0,25,3.141592653589793",
                   "--seed", "99,35,0", "--out", path("d.pogrid")}),
              exit_ok)
        << err;
    ASSERT_EQ(run({"trace", "--distance", path("d.pogrid"), "--mask", path("m.pbm"), "--orientations", "32", "--end",
                   "20,10,1.5707963267948966", "--end", "50,20,0", "--end", "80,40,3.141592653589793", "--step", "0.5",
                   "--all-orientations", "--out", path("t.csv")}),
              exit_ok)
        << err;
    int nx = 0, ny = 0;
    auto walls = read_pnm_mask(path("m.pbm"), nx, ny);
    for (int k = 0; k < 3; ++k) {
        auto rows = read_csv(path("t_" + std::to_string(k) + ".csv"));
        ASSERT_GE(rows.size(), 3u);
        for (std::size_t r = 1; r < rows.size(); ++r) {
            int i = static_cast<int>(std::lround(std::stod(rows[r][1])));
            int j = static_cast<int>(std::lround(std::stod(rows[r][2])));
            ASSERT_TRUE(i >= 0 && i < nx && j >= 0 && j < ny);
            EXPECT_EQ(walls[std::size_t(j) * nx + i], 0) << "path " << k << " row " << r << " at " << i << "," << j;
        }
    }
}

TEST_F(Cli, ForwardTraceReportsKeypoints) {
    ASSERT_EQ(run({"solve", "--uniform", "61,61", "--spacing", "0.04", "--orientations", "48", "--variant", "forward",
                   "--seed", "0,0,0", "--out", path("f.pogrid")}),
              exit_ok);
    ASSERT_EQ(run({"trace", "--distance", path("f.pogrid"), "--end", "0,0.8,4.71238898038469", "--step", "0.02", "--out",
                   path("f.csv")}),
              exit_ok)
        << err;
    json side = read_json(path("f.json"));
    int keypoints = 0;
    for (const auto& ip : side["interest_points"]) keypoints += ip["kind"] == "keypoint";
    EXPECT_GE(keypoints, 1);
}

TEST_F(Cli, CompareReports) {
    ASSERT_EQ(run(calib("s.pogrid")), exit_ok);
    ASSERT_EQ(run({"compare", path("s.pogrid"), path("s.pogrid"), "--out", path("self.json")}), exit_ok);
    json self = read_json(path("self.json"));
    EXPECT_EQ(self["max_relative"], 0.0);
    EXPECT_EQ(self["median_relative"], 0.0);
    EXPECT_EQ(self["exceeding_tolerance"], 0);

    ASSERT_EQ(run(calib("f.pogrid", "forward")), exit_ok);
    ASSERT_EQ(run({"compare", path("f.pogrid"), path("s.pogrid"), "--out", path("fs.json")}), exit_ok);
    EXPECT_EQ(read_json(path("fs.json"))["a_below_b_minus_2h"], 0);

    auto iter = calib("i.pogrid");
    iter.insert(iter.end(), {"--solver", "iterative"});
    ASSERT_EQ(run(iter), exit_ok) << err;
    ASSERT_EQ(run({"compare", path("i.pogrid"), path("s.pogrid"), "--out", path("is.json")}), exit_ok);
    EXPECT_LE(read_json(path("is.json"))["median_relative"].get<double>(), 0.05);

    ASSERT_EQ(run({"solve", "--uniform", "20,20", "--spacing", "0.1", "--orientations", "36", "--seed", "0,0,0", "--out",
                   path("o.pogrid")}),
              exit_ok);
    EXPECT_EQ(run({"compare", path("o.pogrid"), path("s.pogrid")}), exit_usage);
    EXPECT_NE(err.find("grid mismatch"), std::string::npos);
}

TEST_F(Cli, PhantomPresets) {
    ASSERT_EQ(run({"phantom", "--preset", "two_crossings", "--n", "16", "--sphere-level", "1", "--out", path("w.pogrid"),
                   "--cost-out", path("c.pogrid")}),
              exit_ok)
        << err;
    DensityField W = load_density(path("w.pogrid"));
    EXPECT_EQ(W.grid.size(), 16u * 16u * 16u * 42u);
    CostField C = load_cost(path("c.pogrid"));
    EXPECT_NEAR(C.xi, 0.1, 1e-12);
    json m = read_json(path("w.pogrid.manifest.json"));
    EXPECT_EQ(m["resolved"]["tubes"].size(), 2u);

    ASSERT_EQ(run({"phantom", "--preset", "torsion_parallel", "--n", "16", "--sphere-level", "1", "--out", path("t.pogrid")}),
              exit_ok);
    m = read_json(path("t.pogrid.manifest.json"));
    EXPECT_EQ(m["resolved"]["tubes"].size(), 3u);
    EXPECT_NEAR(m["resolved"]["cheap_amplitude"].get<double>(), half_cost_amplitude(3.0, 3), 1e-12);

    EXPECT_EQ(run({"phantom", "--preset", "spaghetti", "--out", path("z.pogrid")}), exit_usage);
}

TEST_F(Cli, SolveFromDensityPhantom) {
    ASSERT_EQ(run({"phantom", "--preset", "two_crossings", "--n", "12", "--sphere-level", "1", "--out", path("w.pogrid")}),
              exit_ok);
    ASSERT_EQ(run({"solve", "--density", path("w.pogrid"), "--seed", "6,6,6,1,0,0", "--out", path("u.pogrid")}), exit_ok)
        << err;
    DistanceMap U = load_distance(path("u.pogrid"));
    EXPECT_DOUBLE_EQ(U.xi, 0.1);
    EXPECT_EQ(run({"solve", "--density", path("w.pogrid"), "--spacing", "2", "--seed", "6,6,6,1,0,0", "--out",
                   path("v.pogrid")}),
              exit_usage);
    EXPECT_EQ(run({"solve", "--density", path("w.pogrid"), "--seed", "6,6,0", "--out", path("v.pogrid")}), exit_usage);
}

TEST_F(Cli, BenchWritesSweep) {
    ASSERT_EQ(run({"bench", "--sizes", "17,25,33", "--orientations", "16", "--out", path("b.csv")}), exit_ok) << err;
    auto rows = read_csv(path("b.csv"));
    ASSERT_EQ(rows.size(), 4u);
    EXPECT_EQ(rows[0][0], "n");
    EXPECT_EQ(std::stoul(rows[3][1]), 33u * 33u * 16u);
    EXPECT_NE(out.find("log-log slope"), std::string::npos);
    EXPECT_EQ(run({"bench", "--sizes", "17", "--out", path("b.csv")}), exit_usage);
}
