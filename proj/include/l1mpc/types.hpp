#pragma once

#include <Eigen/Dense>

#include "l1mpc/errors.hpp"

namespace l1mpc {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// One stage of the problem data
///
///   x_i     = A x_{i-1} + B u_{i-1}
///   y_{i-1} = C x_{i-1} + D u_{i-1}   (quadratic output)
///   z_{i-1} = E x_{i-1} + F u_{i-1}   (l1 output)
///
/// with x in R^n, u in R^l, y in R^m, z in R^p. The output counts m and p
/// may be zero; empty outputs are carried as 0-row matrices so all
/// formulas degrade gracefully.
struct StageSystem {
    Mat A;  ///< n x n state transition
    Mat B;  ///< n x l input map
    Mat C;  ///< m x n
    Mat D;  ///< m x l
    Mat E;  ///< p x n
    Mat F;  ///< p x l

    Index n() const { return A.rows(); }
    Index l() const { return B.cols(); }
    Index m() const { return C.rows(); }
    Index p() const { return E.rows(); }
};

/// Checks all dimension invariants; throws DimensionMismatch naming the
/// offending matrix. n >= 1 and l >= 1 are required; m and p may be zero.
void validate_system(const StageSystem& sys);

/// A complete instance of the finite-horizon problem
///
///   minimize ||x_H||^2_Qterm + sum ||y_{i-1}||^2 + lambda * sum ||z_{i-1}||_1
///
/// over the stage constraints of `system`, plus the solver parameters.
struct ProblemInstance {
    StageSystem system;
    int horizon = 1;      ///< H >= 1
    Mat Qterm;            ///< n x n symmetric PSD terminal weight
    double lambda = 0.0;  ///< l1 weight, >= 0
    Vec x0;               ///< fixed initial state

    double rho = 1.0;     ///< penalty parameter, > 0
    double alpha = 1.8;   ///< over-relaxation factor, in [1, 2)
    double eps_abs = 1e-5;
    double eps_rel = 1e-4;
    int max_iter = 1000;
};

/// Validates dimensions, PSD-ness of Qterm (tolerance 1e-10 on the smallest
/// eigenvalue, 1e-12 on symmetry) and the parameter ranges.
void validate_instance(const ProblemInstance& inst);

/// The delta-u formulation: state augmented with the previous input,
/// so the l1 penalty acts on input increments.
struct AugmentedSystem {
    StageSystem base;   ///< Atil = [[A,B],[0,I]], Btil = [B;I], Ctil = [c,0], D=0, E=0, F=I
    Mat Qterm_aug;      ///< blkdiag(Qbar, 0), (n+l) x (n+l)
    Index u_prev_offset = 0;  ///< start of the appended previous-input block
    Index u_prev_size = 0;
};

/// Parameters of the quadruple-tank process (cm / s / V units).
struct TankParams {
    std::array<double, 4> a{0.17, 0.15, 0.11, 0.08};  ///< outlet cross-sections, cm^2
    double At = 15.5;                                 ///< tank cross-section, cm^2
    double gamma1 = 0.625;                            ///< valve split, pump 1
    double gamma2 = 0.625;                            ///< valve split, pump 2
    double k1 = 4.14;                                 ///< pump gain, cm^3/(s V)
    double k2 = 4.14;
    double g = 981.0;                                 ///< gravity, cm/s^2
    Eigen::Vector4d x_eq{15.0, 15.0, 3.0, 12.0};      ///< operating levels, cm
    Eigen::Vector2d u_eq{7.8, 5.25};                  ///< operating voltages, V

    /// Time constant tau_i = (At/a_i) sqrt(2 x_eq_i / g) of tank i (0-based).
    double tau(int i) const;
};

/// Throws on non-positive physical parameters, valve splits outside (0,1),
/// or non-positive time constants.
void validate_params(const TankParams& params);

}  // namespace l1mpc
