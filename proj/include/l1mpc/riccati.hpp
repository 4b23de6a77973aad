#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Cholesky>

#include "l1mpc/types.hpp"

namespace l1mpc {

/// Stage blocks of the projection quadratic form. For the Euclidean
/// projection onto the constraint set these are
///
///   P = I + C'C + E'E,   S = C'D + E'F,   R = I + D'D + F'F,
///
/// and the terminal block Pterm = I. The stage block [[P,S],[S',R]] is
/// I + G'G for the stacked output map G, hence positive definite, and
/// R >= I always holds.
struct ProjectionCost {
    Mat P;      ///< n x n
    Mat S;      ///< n x l
    Mat R;      ///< l x l
    Mat Pterm;  ///< n x n terminal block

    ProjectionCost scaled(double k) const { return {k * P, k * S, k * R, k * Pterm}; }
};

ProjectionCost build_projection_cost(const StageSystem& sys);

/// Right-hand side of the stage-structured KKT system: the system is
///
///   [[Q, A'], [A, 0]] [xi; lam] = [r_xi; r_lam]
///
/// with xi = (x_0, u_0, ..., u_{H-1}, x_H), block-banded constraint matrix
/// A encoding x_0 = r_lam0 and x_{i+1} = A x_i + B u_i + r_lam_{i+1}, and
/// r_xi split into per-stage pieces r_x, r_u. Sequences are stored as
/// matrices with one column per stage.
struct KktRhs {
    Mat r_x;    ///< n x (H+1)
    Mat r_u;    ///< l x H
    Mat r_lam;  ///< n x (H+1); column 0 is the fixed initial state
};

struct KktSolution {
    Mat x;    ///< n x (H+1)
    Mat u;    ///< l x H
    Mat lam;  ///< n x (H+1) multipliers
};

/// Whether factorize() substitutes u = -Lx + v before running the
/// backward recursion. kAuto engages the substitution when the spectral
/// radius of A is >= 1 - 1e-9.
enum class StabilizationPolicy { kAuto, kNever, kAlways };

/// Precomputed backward pass, reused across every solve with the same
/// (cost, A, B, H). Immutable after factorize; kkt_solve is a pure
/// function of (cache, rhs) and safe to call concurrently.
struct RiccatiCache {
    Mat A;    ///< dynamics the cache was built for
    Mat B;
    int horizon = 0;

    Mat Acl;                            ///< A - B L (equals A when L is zero)
    Mat L;                              ///< stabilizing feedback, l x n zero when unused
    bool prestabilized = false;

    std::vector<Mat> S;                 ///< H+1 symmetric cost-to-go blocks, S[H] = Pterm
    std::vector<Eigen::LLT<Mat>> Gchol; ///< H Cholesky factors of G_{i+1} = R + B'S_{i+1}B
    std::vector<Mat> Hbar;              ///< H blocks S + A'S_{i+1}B
    std::vector<Mat> K;                 ///< H feedback gains G^{-1} Hbar'
};

/// Backward matrix recursion
///
///   S_H = Pterm
///   S_i = (P + A'S_{i+1}A) - Hbar_{i+1} G_{i+1}^{-1} Hbar_{i+1}',
///   Hbar_{i+1} = S + A'S_{i+1}B,  G_{i+1} = R + B'S_{i+1}B,
///
/// storing Cholesky factors of every G. O(H (n+l)^3), performed once per
/// (cost, dynamics, horizon) combination. Throws NumericalFailure if a
/// G block is not positive definite.
RiccatiCache factorize(const ProjectionCost& cost, const Mat& A, const Mat& B, int horizon,
                       StabilizationPolicy policy = StabilizationPolicy::kAuto);

/// Solves the KKT system through the cached recursion: a backward vector
/// pass for Psi_i followed by a forward sweep for (x, u, lam).
/// O(H (n+l)^2) per call.
KktSolution kkt_solve(const RiccatiCache& cache, const KktRhs& rhs);

/// Stabilizing state feedback: iterates the Riccati difference equation
/// with identity weights to its fixed point (tolerance 1e-10, cap 10000)
/// and returns L = (I + B'PB)^{-1} B'PA, so that the spectral radius of
/// A - BL is < 1. Returns L = 0 when A is already strictly stable.
/// Throws NotStabilizable on non-convergence or a non-stable closed loop.
Mat prestabilize(const Mat& A, const Mat& B);

/// Congruence [x;u] = [[I,0],[-L,I]] [x;v] applied to the cost blocks:
/// P' = P - SL - L'S' + L'RL, S' = S - L'R, R' = R. The dynamics matrix
/// becomes A - BL; after solving, recover u_i = v_i - L x_i.
ProjectionCost transform_under_feedback(const ProjectionCost& cost, const Mat& L);

/// The matching right-hand-side transform: r_x_i' = r_x_i - L' r_u_i for
/// i < H (the terminal column and r_lam are unchanged).
KktRhs transform_under_feedback(const KktRhs& rhs, const Mat& L);

double spectral_radius(const Mat& A);

/// Number of factorize() calls since process start (test telemetry).
std::uint64_t factorize_call_count();

}  // namespace l1mpc
