#pragma once

#include <optional>
#include <string>
#include <vector>

#include "l1mpc/types.hpp"

namespace l1mpc::cli {

/// Inline model data from a config file. For `solve` this is the raw
/// stage system plus terminal weight and initial state; for `mpc` it is
/// a plant (A, B, C) wrapped with the delta-u formulation using the
/// output weight Q and terminal weight Qbar.
struct InlineModel {
    Mat A, B;
    Mat C, D, E, F;       // optional; zero-row defaults
    Mat Qterm;            // solve mode, default zero
    Mat Q, Qbar;          // mpc mode weights, defaults I_m / zero
    Vec x0;
};

struct ScenarioConfig {
    std::string mode;                 ///< "solve" | "mpc" | "bench" | "tank"
    std::string model = "quadruple_tank";  ///< or "inline"
    std::optional<InlineModel> inline_model;

    std::vector<int> horizons{5};     ///< bench sweeps; single entry otherwise
    std::vector<double> lambdas{0.1};  ///< sweep in mpc/tank mode

    double rho = 1.0;
    double alpha = 1.8;
    double eps_abs = 1e-5;
    double eps_rel = 1e-4;
    int max_iter = 1000;

    std::string plant = "nonlinear";  ///< "linear" | "nonlinear"
    int steps = 10;
    double sample_time = 1.0;
    std::uint64_t seed = 0;
    std::string output = ".";         ///< output directory
};

/// Parses and fully validates a JSON scenario. Unknown keys are rejected.
/// Throws ParseError on malformed JSON, ValidationError naming the field
/// otherwise.
ScenarioConfig parse_config(const std::string& text);

/// One ADMM solve; writes `iterations.csv` (iter,e_p,e_d,cost) into the
/// output directory and prints `status,iters,final_cost` on stdout.
int cmd_solve(const ScenarioConfig& cfg);

/// Closed-loop run; writes one `trajectory_lambda_<v>.csv` per lambda
/// with columns t,x1..,u1..,y1..,du1..,admm_iters,solve_ms. Sweeps run on
/// a worker pool capped by the L1MPC_THREADS environment variable.
int cmd_mpc(const ScenarioConfig& cfg);

/// Fixed-iteration timing sweep over the configured horizons; writes
/// `bench.csv` with columns H,mean_iter_us,factorize_us. Oracle and I/O
/// are excluded from the timings.
int cmd_bench(const ScenarioConfig& cfg);

/// Full command-line entry point (subcommands solve|mpc|bench|tank).
/// Exit codes: 0 success, 1 solver failure, 2 config error.
int run(int argc, const char* const* argv);

/// Serializes a double with 17 significant digits.
std::string format_value(double v);

}  // namespace l1mpc::cli
