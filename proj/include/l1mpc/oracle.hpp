#pragma once

#include <optional>
#include <vector>

#include "l1mpc/admm.hpp"
#include "l1mpc/riccati.hpp"
#include "l1mpc/types.hpp"

// Independent brute-force references used by tests and the acceptance
// suite. Everything here favors obviousness over speed and shares no
// solve path with the riccati/admm modules.
namespace l1mpc::oracle {

/// Explicitly assembled stage-structured KKT matrix [[Q, A'],[A, 0]]
/// and stacked right-hand side.
struct DenseKkt {
    Mat M;
    Vec rhs;
    Index n = 0, l = 0;
    int horizon = 0;
};

/// Assembles the dense KKT system for arbitrary stage blocks
/// (Q11, Q12, Q22, terminal) and right-hand side.
DenseKkt assemble_kkt(const Mat& Q11, const Mat& Q12, const Mat& Q22, const Mat& Qterm,
                      const Mat& A, const Mat& B, int horizon, const KktRhs& rhs);

/// Dense LU solve of an assembled system. Throws Singular when the matrix
/// is numerically rank-deficient.
KktSolution solve_dense(const DenseKkt& kkt);

/// Same stage data as riccati's kkt_solve, solved densely.
KktSolution dense_kkt_solve_blocks(const ProjectionCost& cost, const Mat& A, const Mat& B,
                                   int horizon, const KktRhs& rhs);

/// Euclidean projection of a point onto the instance's constraint set,
/// by dense LU on the full KKT system (guard: H(n+l) <= 5000). Returns
/// the projected group with y and z recovered from the output equations.
VarGroup dense_kkt_solve(const ProblemInstance& inst, const VarGroup& point);

/// The lambda = 0 problem solved in one shot as an equality-constrained
/// least squares through the dense KKT route; returns the input sequence.
Mat lq_solve(const ProblemInstance& inst);

/// The instance condensed to the inputs only, by forward substitution of
/// the dynamics. Requires the delta-u structure E = 0, F = I (the l1 term
/// must act on the input variable itself). The quadratic part is kept as
///   V_quad(U) = 0.5 U' Hess U + lin' U + c0,
/// so the gradient is Hess U + lin and 1/lipschitz is a valid step.
struct CondensedProblem {
    Mat Phi;       ///< stacked-state map, (H+1)n x Hl
    Vec free_response;  ///< stacked states under U = 0
    Mat Hess;      ///< symmetric PSD
    Vec lin;
    double c0 = 0.0;
    double lambda = 0.0;
    double lipschitz = 0.0;  ///< largest eigenvalue of Hess (power iteration)
    Index l = 0;
    int horizon = 0;

    double objective(const Vec& U) const;
};

CondensedProblem condense(const ProblemInstance& inst);

struct IstaResult {
    Vec u;  ///< stacked minimizer, columns recoverable as l x H
    double objective = 0.0;
    int iterations = 0;
};

/// Proximal-gradient iteration with step 1/lipschitz and soft-threshold
/// prox; the objective is monotone non-increasing (asserted every
/// iteration) and the loop stops when the decrease falls below tol.
/// Throws MaxIterExceeded if the budget runs out first.
IstaResult ista_solve(const CondensedProblem& cp, double tol = 1e-9, int max_iter = 200000);

/// Objective of the instance on explicit sequences; y and z are
/// reconstructed from the output equations when omitted.
double cost_eval(const ProblemInstance& inst, const Mat& x_seq, const std::optional<Mat>& y_seq,
                 const Mat& u_seq, const std::optional<Mat>& z_seq);

/// Rolls the instance dynamics forward from inst.x0 under the given
/// inputs.
Mat simulate(const ProblemInstance& inst, const Mat& u_seq);

}  // namespace l1mpc::oracle
