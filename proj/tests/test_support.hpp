#pragma once

#include <random>

#include "l1mpc/admm.hpp"
#include "l1mpc/riccati.hpp"
#include "l1mpc/types.hpp"

namespace l1mpc::testing {

using Rng = std::mt19937_64;

inline Mat random_matrix(Rng& rng, Index rows, Index cols) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Mat m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
    }
    return m;
}

inline Vec random_vector(Rng& rng, Index size) {
    std::normal_distribution<double> dist(0.0, 1.0);
    Vec v(size);
    for (Index i = 0; i < size; ++i) v(i) = dist(rng);
    return v;
}

/// Random square matrix rescaled to the requested spectral radius.
inline Mat random_dynamics(Rng& rng, Index n, double radius) {
    Mat A = random_matrix(rng, n, n);
    const double r = spectral_radius(A);
    if (r > 0.0) A *= radius / r;
    return A;
}

inline StageSystem random_system(Rng& rng, Index n, Index l, Index m, Index p, double radius) {
    StageSystem sys;
    sys.A = random_dynamics(rng, n, radius);
    sys.B = random_matrix(rng, n, l);
    sys.C = random_matrix(rng, m, n);
    sys.D = random_matrix(rng, m, l);
    sys.E = random_matrix(rng, p, n);
    sys.F = random_matrix(rng, p, l);
    return sys;
}

inline Mat random_psd(Rng& rng, Index n) {
    const Mat G = random_matrix(rng, n, n);
    return G.transpose() * G;
}

inline KktRhs random_rhs(Rng& rng, Index n, Index l, int H) {
    KktRhs rhs;
    rhs.r_x = random_matrix(rng, n, H + 1);
    rhs.r_u = random_matrix(rng, l, H);
    rhs.r_lam = random_matrix(rng, n, H + 1);
    return rhs;
}

inline VarGroup random_group(Rng& rng, const ProblemInstance& inst) {
    VarGroup g;
    g.x = random_matrix(rng, inst.system.n(), inst.horizon + 1);
    g.y = random_matrix(rng, inst.system.m(), inst.horizon);
    g.u = random_matrix(rng, inst.system.l(), inst.horizon);
    g.z = random_matrix(rng, inst.system.p(), inst.horizon);
    return g;
}

/// A random point of the constraint set: x0 fixed, inputs free, states
/// rolled out, outputs from their equations.
inline VarGroup random_feasible_point(Rng& rng, const ProblemInstance& inst) {
    const auto& sys = inst.system;
    const int H = inst.horizon;
    VarGroup g;
    g.u = random_matrix(rng, sys.l(), H);
    g.x.resize(sys.n(), H + 1);
    g.x.col(0) = inst.x0;
    for (int i = 0; i < H; ++i) g.x.col(i + 1) = sys.A * g.x.col(i) + sys.B * g.u.col(i);
    g.y = sys.C * g.x.leftCols(H) + sys.D * g.u;
    g.z = sys.E * g.x.leftCols(H) + sys.F * g.u;
    return g;
}

inline double group_distance(const VarGroup& a, const VarGroup& b) {
    return std::sqrt((a.x - b.x).squaredNorm() + (a.y - b.y).squaredNorm() +
                     (a.u - b.u).squaredNorm() + (a.z - b.z).squaredNorm());
}

/// Max constraint violation of a group against the instance dynamics and
/// output equations, including the pinned initial state.
inline double feasibility_violation(const ProblemInstance& inst, const VarGroup& g) {
    const auto& sys = inst.system;
    const int H = inst.horizon;
    double v = (g.x.col(0) - inst.x0).cwiseAbs().maxCoeff();
    for (int i = 0; i < H; ++i) {
        v = std::max(v, (g.x.col(i + 1) - sys.A * g.x.col(i) - sys.B * g.u.col(i))
                            .cwiseAbs()
                            .maxCoeff());
    }
    if (sys.m() > 0) {
        v = std::max(v,
                     (g.y - sys.C * g.x.leftCols(H) - sys.D * g.u).cwiseAbs().maxCoeff());
    }
    if (sys.p() > 0) {
        v = std::max(v,
                     (g.z - sys.E * g.x.leftCols(H) - sys.F * g.u).cwiseAbs().maxCoeff());
    }
    return v;
}

inline double rel_error(const Mat& got, const Mat& want) {
    const double scale = std::max(1.0, want.norm());
    return (got - want).norm() / scale;
}

}  // namespace l1mpc::testing
