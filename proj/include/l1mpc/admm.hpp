#pragma once

#include <optional>
#include <vector>

#include "l1mpc/riccati.hpp"
#include "l1mpc/types.hpp"

namespace l1mpc {

/// One copy of the four variable groups, columns = stages:
/// x is n x (H+1); y, u, z are m x H, l x H, p x H.
struct VarGroup {
    Mat x, y, u, z;

    static VarGroup zero(const ProblemInstance& inst);
    double squared_norm() const;
};

/// The full solver iterate: local variables (prox outputs), their
/// consensus copies (constrained to the feasible set after every
/// projection), and the scaled duals.
struct SplitState {
    VarGroup local;
    VarGroup consensus;
    VarGroup dual;

    /// Cold start: everything zero except consensus.x column 0 = x0.
    static SplitState cold_start(const ProblemInstance& inst);
};

enum class SolveStatus { kConverged, kMaxIter };

struct SolveReport {
    SolveStatus status = SolveStatus::kMaxIter;
    int iterations = 0;
    std::vector<double> primal_residuals;  ///< ||local - consensus||_2 per iteration
    std::vector<double> dual_residuals;    ///< rho ||consensus - prev consensus||_2
    std::vector<double> cost_history;      ///< objective of the local iterate
    SplitState final_state;                ///< consensus block is the solution
    double final_cost = 0.0;               ///< objective of the final consensus block

    struct Timing {
        double factorize_s = 0.0;
        double step1_s = 0.0;
        double project_s = 0.0;
        double dual_s = 0.0;
        double residual_s = 0.0;
        double loop_s = 0.0;  ///< whole iteration loop, excluding factorize
    } timing;
};

/// prox of kappa*|.|_1: a - kappa above the dead zone, a + kappa below,
/// exactly 0.0 inside. Applied component-wise to vectors. Firmly
/// nonexpansive: |S(a) - S(b)| <= |a - b|.
double soft_threshold(double a, double kappa);
Mat soft_threshold(const Mat& a, double kappa);

/// Cached quantities that survive a change of initial state, so a
/// receding-horizon loop factorizes once and re-solves cheaply.
/// A solver instance is single-threaded; distinct instances may share
/// nothing and run concurrently.
class AdmmSolver {
  public:
    explicit AdmmSolver(ProblemInstance inst);

    /// Replaces the initial state without touching the factorization.
    void set_initial_state(const Vec& x0);

    SolveReport solve() { return solve_impl(nullptr, inst_.max_iter, true); }
    SolveReport solve(const SplitState& warm) { return solve_impl(&warm, inst_.max_iter, true); }

    /// Runs exactly `iterations` iterations with the stopping test
    /// disabled (benchmark mode).
    SolveReport solve_fixed(int iterations, const SplitState* warm = nullptr) {
        return solve_impl(warm, iterations, false);
    }

    const ProblemInstance& instance() const { return inst_; }
    const RiccatiCache& cache() const { return cache_; }

    /// Number of independent step-1 sub-updates (4H + 1).
    int step1_update_count() const { return 4 * inst_.horizon + 1; }

  private:
    SolveReport solve_impl(const SplitState* warm, int max_iter, bool check_stop);

    ProblemInstance inst_;
    RiccatiCache cache_;          ///< built for the doubled projection cost
    Eigen::LLT<Mat> term_fact_;   ///< factor of 2 Qterm + rho I
    double factorize_s_ = 0.0;
};

/// One-shot convenience wrapper around AdmmSolver.
SolveReport solve(const ProblemInstance& inst, const std::optional<SplitState>& warm = std::nullopt);

// --- individual steps, exposed for testing ---

/// Applies step-1 sub-update `idx` (0..4H): local x_i for i < H, then the
/// terminal x_H through the (2 Qterm + rho I) factor, then the y, u and z
/// stages. The sub-updates write disjoint columns and may run in any
/// order with bitwise-identical results.
void step1_apply(SplitState& state, const ProblemInstance& inst, const Eigen::LLT<Mat>& term_fact,
                 int idx);

/// All 4H+1 sub-updates in natural order.
void step1(SplitState& state, const ProblemInstance& inst, const Eigen::LLT<Mat>& term_fact);

/// alpha * local + (1 - alpha) * consensus, the relaxed local block used
/// by steps 2 and 3.
VarGroup over_relax(const SplitState& state, double alpha);

/// Projects (relaxed + dual) onto the constraint set through the cached
/// recursion and writes the result into state.consensus; y and z columns
/// are recovered from the output equations.
void step2_project(SplitState& state, const VarGroup& relaxed, const RiccatiCache& cache,
                   const StageSystem& sys, const Vec& x0);

/// dual += relaxed - consensus.
void step3_duals(SplitState& state, const VarGroup& relaxed);

struct Residuals {
    double primal = 0.0;
    double dual = 0.0;
};

/// primal = ||local - consensus||_2 stacked over all four groups,
/// dual = rho ||consensus - prev_consensus||_2.
Residuals residuals(const SplitState& state, const VarGroup& prev_consensus, double rho);

/// Stopping test: both residuals below sqrt(N) eps_abs + eps_rel * scale,
/// where N is the total stacked primal dimension (H+1)n + H(m+l+p), the
/// primal scale is max(||local||, ||consensus||) and the dual scale is
/// rho ||dual||.
bool check_stop(const Residuals& res, const SplitState& state, const ProblemInstance& inst);

/// Objective of a (x, y, u, z) group under the instance weights:
/// x_H' Qterm x_H + sum ||y_i||^2 + lambda sum ||z_i||_1.
double objective_value(const ProblemInstance& inst, const VarGroup& vars);

}  // namespace l1mpc
