#pragma once

#include <utility>

#include "l1mpc/types.hpp"

namespace l1mpc {

/// Zero-order-hold discretization of dx/dt = Ac x + Bc u at sample time T:
/// Ad = exp(Ac T), Bd = int_0^T exp(Ac s) ds * Bc, both read off the matrix
/// exponential of the (n+l)x(n+l) block matrix [[Ac,Bc],[0,0]] * T.
/// Throws NonFinite if the exponential overflows.
std::pair<Mat, Mat> discretize_zoh(const Mat& Ac, const Mat& Bc, double T);

/// Continuous-time linearization of the quadruple tank around its
/// operating point.
struct TankLinearModel {
    Mat Ac;  ///< 4 x 4, -1/tau_i diagonal with the upper-tank couplings
    Mat Bc;  ///< 4 x 2 pump map
    Mat C;   ///< 2 x 4, selects levels 1 and 2
};

TankLinearModel quadruple_tank_continuous(const TankParams& params);

/// Symmetric factor c with c'c = Q. Diagonal Q factors entrywise; general Q
/// goes through an eigendecomposition with negative eigenvalues clamped at
/// zero, so rank-deficient weights are accepted. Throws NotPsd if an
/// eigenvalue is below -1e-10.
Mat symmetric_factor(const Mat& Q);

/// Builds the delta-u formulation for discrete dynamics (A, B) with state
/// weight Q = c'c and terminal state weight Qbar:
///
///   Atil = [[A,B],[0,I]],  Btil = [B;I],  Ctil = [c,0],
///   D = 0, E = 0, F = I,   Qterm_aug = blkdiag(Qbar, 0).
///
/// Driving (Atil, Btil) with increments du_i reproduces (A, B) driven by
/// u_i = u_{i-1} + du_i exactly.
AugmentedSystem augment_delta_u(const Mat& A, const Mat& B, const Mat& Q, const Mat& Qbar);

}  // namespace l1mpc
