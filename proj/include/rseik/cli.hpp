#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "rseik/manifold.hpp"

namespace rseik {

// Exit codes of the command-line tool.
inline constexpr int exit_ok = 0;
inline constexpr int exit_usage = 2;
inline constexpr int exit_numerical = 3;

// Runs the tool with `args` excluding the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// "x,y,theta" or "x,y,nx,ny" for d = 2; "x,y,z,theta,phi" or "x,y,z,nx,ny,nz" for d = 3, where
// n = (cos theta cos phi, sin theta cos phi, sin phi). Angles in radians.
PointPO parse_state(const std::string& text, int d);

// Worker cap: RSEIK_THREADS if set and positive, otherwise the hardware concurrency.
int worker_count();

}  // namespace rseik
