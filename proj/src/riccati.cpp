#include "l1mpc/riccati.hpp"

#include <atomic>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "l1mpc/model.hpp"

namespace l1mpc {

namespace {

std::atomic<std::uint64_t> g_factorize_calls{0};

constexpr double kStableMargin = 1e-9;
constexpr double kDareTol = 1e-10;
constexpr int kDareMaxIter = 10000;

}  // namespace

std::uint64_t factorize_call_count() { return g_factorize_calls.load(); }

double spectral_radius(const Mat& A) {
    if (A.rows() == 0) return 0.0;
    return Eigen::EigenSolver<Mat>(A, false).eigenvalues().cwiseAbs().maxCoeff();
}

ProjectionCost build_projection_cost(const StageSystem& sys) {
    validate_system(sys);
    const Index n = sys.n();
    const Index l = sys.l();
    ProjectionCost cost;
    cost.P = Mat::Identity(n, n) + sys.C.transpose() * sys.C + sys.E.transpose() * sys.E;
    cost.S = sys.C.transpose() * sys.D + sys.E.transpose() * sys.F;
    cost.R = Mat::Identity(l, l) + sys.D.transpose() * sys.D + sys.F.transpose() * sys.F;
    cost.Pterm = Mat::Identity(n, n);
    return cost;
}

Mat prestabilize(const Mat& A, const Mat& B) {
    const Index n = A.rows();
    const Index l = B.cols();
    if (spectral_radius(A) < 1.0 - kStableMargin) return Mat::Zero(l, n);

    // Riccati difference equation with identity weights.
    Mat P = Mat::Identity(n, n);
    const Mat I_l = Mat::Identity(l, l);
    bool converged = false;
    for (int k = 0; k < kDareMaxIter; ++k) {
        const Mat BtP = B.transpose() * P;
        const Mat G = I_l + BtP * B;
        const Mat K = G.ldlt().solve(BtP * A);
        const Mat Pn = Mat::Identity(n, n) + A.transpose() * P * A -
                       (A.transpose() * BtP.transpose()) * K;
        const double diff = (Pn - P).cwiseAbs().maxCoeff();
        P = 0.5 * (Pn + Pn.transpose());
        if (diff <= kDareTol) {
            converged = true;
            break;
        }
        if (!P.allFinite()) throw NotStabilizable("stabilizing iteration diverged");
    }
    if (!converged) throw NotStabilizable("stabilizing iteration did not converge");

    const Mat BtP = B.transpose() * P;
    const Mat L = (I_l + BtP * B).ldlt().solve(BtP * A);
    if (spectral_radius(A - B * L) >= 1.0) {
        throw NotStabilizable("closed loop is not strictly stable");
    }
    return L;
}

ProjectionCost transform_under_feedback(const ProjectionCost& cost, const Mat& L) {
    ProjectionCost out;
    out.P = cost.P - cost.S * L - L.transpose() * cost.S.transpose() +
            L.transpose() * cost.R * L;
    out.S = cost.S - L.transpose() * cost.R;
    out.R = cost.R;
    out.Pterm = cost.Pterm;
    return out;
}

KktRhs transform_under_feedback(const KktRhs& rhs, const Mat& L) {
    KktRhs out = rhs;
    const int H = static_cast<int>(rhs.r_u.cols());
    out.r_x.leftCols(H) -= L.transpose() * rhs.r_u;
    return out;
}

RiccatiCache factorize(const ProjectionCost& cost, const Mat& A, const Mat& B, int horizon,
                       StabilizationPolicy policy) {
    g_factorize_calls.fetch_add(1);
    if (horizon < 1) throw Error("horizon must be >= 1");
    const Index n = A.rows();
    const Index l = B.cols();
    if (A.cols() != n || B.rows() != n) throw DimensionMismatch("A/B");

    RiccatiCache cache;
    cache.A = A;
    cache.B = B;
    cache.horizon = horizon;

    const bool stabilize =
        policy == StabilizationPolicy::kAlways ||
        (policy == StabilizationPolicy::kAuto && spectral_radius(A) >= 1.0 - kStableMargin);
    ProjectionCost blocks = cost;
    cache.L = Mat::Zero(l, n);
    cache.Acl = A;
    cache.prestabilized = false;
    if (stabilize) {
        cache.L = prestabilize(A, B);
        if (cache.L.cwiseAbs().maxCoeff() > 0.0) {
            cache.prestabilized = true;
            cache.Acl = A - B * cache.L;
            blocks = transform_under_feedback(cost, cache.L);
        }
    }

    cache.S.resize(static_cast<std::size_t>(horizon) + 1);
    cache.Gchol.resize(static_cast<std::size_t>(horizon));
    cache.Hbar.resize(static_cast<std::size_t>(horizon));
    cache.K.resize(static_cast<std::size_t>(horizon));
    cache.S[static_cast<std::size_t>(horizon)] =
        0.5 * (blocks.Pterm + blocks.Pterm.transpose());

    for (int i = horizon - 1; i >= 0; --i) {
        const std::size_t si = static_cast<std::size_t>(i);
        const Mat& Snext = cache.S[si + 1];
        const Mat AtS = cache.Acl.transpose() * Snext;
        const Mat Hbar = blocks.S + AtS * B;
        const Mat G = blocks.R + B.transpose() * Snext * B;
        Eigen::LLT<Mat> llt(0.5 * (G + G.transpose()));
        if (llt.info() != Eigen::Success) {
            throw NumericalFailure("stage block G is not positive definite");
        }
        const Mat K = llt.solve(Hbar.transpose());
        Mat Si = blocks.P + AtS * cache.Acl - Hbar * K;
        cache.S[si] = 0.5 * (Si + Si.transpose());
        cache.Gchol[si] = std::move(llt);
        cache.Hbar[si] = Hbar;
        cache.K[si] = K;
    }
    return cache;
}

KktSolution kkt_solve(const RiccatiCache& cache, const KktRhs& rhs) {
    const int H = cache.horizon;
    const Index n = cache.A.rows();
    const Index l = cache.B.cols();
    if (rhs.r_x.rows() != n || rhs.r_x.cols() != H + 1 || rhs.r_u.rows() != l ||
        rhs.r_u.cols() != H || rhs.r_lam.rows() != n || rhs.r_lam.cols() != H + 1) {
        throw DimensionMismatch("rhs");
    }

    const KktRhs* r = &rhs;
    KktRhs transformed;
    if (cache.prestabilized) {
        transformed = transform_under_feedback(rhs, cache.L);
        r = &transformed;
    }

    // Backward vector pass: Psi_H = r_x,H; for i = H-1..0
    //   psi = Psi_{i+1} - S_{i+1} r_lam,{i+1}
    //   d_i = G_{i+1}^{-1} (r_u,i + B' psi)
    //   Psi_i = r_x,i + A' psi - Hbar_{i+1} d_i
    Mat Psi(n, H + 1);
    Mat d(l, H);
    Psi.col(H) = r->r_x.col(H);
    Vec psi(n), t(l);
    for (int i = H - 1; i >= 0; --i) {
        const std::size_t si = static_cast<std::size_t>(i);
        psi.noalias() = Psi.col(i + 1) - cache.S[si + 1] * r->r_lam.col(i + 1);
        t.noalias() = r->r_u.col(i) + cache.B.transpose() * psi;
        d.col(i) = cache.Gchol[si].solve(t);
        Psi.col(i).noalias() = r->r_x.col(i) + cache.Acl.transpose() * psi;
        Psi.col(i).noalias() -= cache.Hbar[si] * d.col(i);
    }

    // Forward sweep: x_0 = r_lam,0; u_i = d_i - K_i x_i;
    // x_{i+1} = Acl x_i + B u_i + r_lam,{i+1}; lam_i = -S_i x_i + Psi_i.
    KktSolution sol;
    sol.x.resize(n, H + 1);
    sol.u.resize(l, H);
    sol.lam.resize(n, H + 1);
    sol.x.col(0) = r->r_lam.col(0);
    for (int i = 0; i < H; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        sol.u.col(i).noalias() = d.col(i) - cache.K[si] * sol.x.col(i);
        sol.x.col(i + 1).noalias() =
            cache.Acl * sol.x.col(i) + cache.B * sol.u.col(i) + r->r_lam.col(i + 1);
        sol.lam.col(i).noalias() = Psi.col(i) - cache.S[si] * sol.x.col(i);
    }
    sol.lam.col(H).noalias() = Psi.col(H) - cache.S[static_cast<std::size_t>(H)] * sol.x.col(H);

    if (cache.prestabilized) {
        // solved in (x, v); recover u = v - L x
        sol.u.noalias() -= cache.L * sol.x.leftCols(H);
    }
    return sol;
}

}  // namespace l1mpc
