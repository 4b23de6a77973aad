#include "l1mpc/oracle.hpp"

#include <cmath>

#include <Eigen/LU>

#include "l1mpc/model.hpp"

namespace l1mpc::oracle {

namespace {

constexpr double kMonotoneSlack = 1e-9;

}  // namespace

DenseKkt assemble_kkt(const Mat& Q11, const Mat& Q12, const Mat& Q22, const Mat& Qterm,
                      const Mat& A, const Mat& B, int horizon, const KktRhs& rhs) {
    const Index n = A.rows();
    const Index l = B.cols();
    const int H = horizon;
    const Index nv = H * (n + l) + n;
    const Index nc = (H + 1) * n;

    DenseKkt out;
    out.n = n;
    out.l = l;
    out.horizon = H;
    out.M = Mat::Zero(nv + nc, nv + nc);
    out.rhs = Vec::Zero(nv + nc);

    for (int i = 0; i < H; ++i) {
        const Index o = i * (n + l);
        out.M.block(o, o, n, n) = Q11;
        out.M.block(o, o + n, n, l) = Q12;
        out.M.block(o + n, o, l, n) = Q12.transpose();
        out.M.block(o + n, o + n, l, l) = Q22;
        out.rhs.segment(o, n) = rhs.r_x.col(i);
        out.rhs.segment(o + n, l) = rhs.r_u.col(i);
    }
    out.M.block(nv - n, nv - n, n, n) = Qterm;
    out.rhs.segment(nv - n, n) = rhs.r_x.col(H);

    // Constraint block: x_0 = r_lam0; -A x_i - B u_i + x_{i+1} = r_lam,{i+1}.
    Mat Ablk = Mat::Zero(nc, nv);
    Ablk.topLeftCorner(n, n) = Mat::Identity(n, n);
    for (int i = 0; i < H; ++i) {
        const Index row = (i + 1) * n;
        const Index o = i * (n + l);
        Ablk.block(row, o, n, n) = -A;
        Ablk.block(row, o + n, n, l) = -B;
        Ablk.block(row, o + n + l, n, n) = Mat::Identity(n, n);
    }
    out.M.block(nv, 0, nc, nv) = Ablk;
    out.M.block(0, nv, nv, nc) = Ablk.transpose();
    out.rhs.segment(nv, nc) = Eigen::Map<const Vec>(rhs.r_lam.data(), nc);
    return out;
}

KktSolution solve_dense(const DenseKkt& kkt) {
    Eigen::FullPivLU<Mat> lu(kkt.M);
    if (!lu.isInvertible()) throw Singular("assembled KKT matrix is singular");
    const Vec w = lu.solve(kkt.rhs);

    const Index n = kkt.n;
    const Index l = kkt.l;
    const int H = kkt.horizon;
    const Index nv = H * (n + l) + n;
    KktSolution sol;
    sol.x.resize(n, H + 1);
    sol.u.resize(l, H);
    sol.lam.resize(n, H + 1);
    for (int i = 0; i < H; ++i) {
        sol.x.col(i) = w.segment(i * (n + l), n);
        sol.u.col(i) = w.segment(i * (n + l) + n, l);
    }
    sol.x.col(H) = w.segment(nv - n, n);
    for (int i = 0; i <= H; ++i) sol.lam.col(i) = w.segment(nv + i * n, n);
    return sol;
}

KktSolution dense_kkt_solve_blocks(const ProjectionCost& cost, const Mat& A, const Mat& B,
                                   int horizon, const KktRhs& rhs) {
    return solve_dense(assemble_kkt(cost.P, cost.S, cost.R, cost.Pterm, A, B, horizon, rhs));
}

VarGroup dense_kkt_solve(const ProblemInstance& inst, const VarGroup& point) {
    validate_instance(inst);
    const auto& sys = inst.system;
    const int H = inst.horizon;
    if (H * (sys.n() + sys.l()) > 5000) throw Error("instance too large for the dense oracle");

    // Linear term of the projection objective, straight from its definition:
    // r_i = -2 (x_p,i + C'y_p,i + E'z_p,i), s_i = -2 (u_p,i + D'y_p,i + F'z_p,i).
    KktRhs rhs;
    rhs.r_x.resize(sys.n(), H + 1);
    rhs.r_u.resize(sys.l(), H);
    rhs.r_lam = Mat::Zero(sys.n(), H + 1);
    rhs.r_lam.col(0) = inst.x0;
    for (int i = 0; i < H; ++i) {
        rhs.r_x.col(i) = 2.0 * (point.x.col(i) + sys.C.transpose() * point.y.col(i) +
                                sys.E.transpose() * point.z.col(i));
        rhs.r_u.col(i) = 2.0 * (point.u.col(i) + sys.D.transpose() * point.y.col(i) +
                                sys.F.transpose() * point.z.col(i));
    }
    rhs.r_x.col(H) = 2.0 * point.x.col(H);

    const ProjectionCost cost = build_projection_cost(sys).scaled(2.0);
    const KktSolution sol = dense_kkt_solve_blocks(cost, sys.A, sys.B, H, rhs);

    VarGroup proj;
    proj.x = sol.x;
    proj.u = sol.u;
    proj.y = sys.C * sol.x.leftCols(H) + sys.D * sol.u;
    proj.z = sys.E * sol.x.leftCols(H) + sys.F * sol.u;
    return proj;
}

Mat lq_solve(const ProblemInstance& inst) {
    validate_instance(inst);
    const auto& sys = inst.system;
    const int H = inst.horizon;

    // min ||x_H||^2_Qterm + sum ||C x_i + D u_i||^2 subject to the dynamics:
    // stage blocks 2 [C D]'[C D], terminal 2 Qterm, zero linear term.
    KktRhs rhs;
    rhs.r_x = Mat::Zero(sys.n(), H + 1);
    rhs.r_u = Mat::Zero(sys.l(), H);
    rhs.r_lam = Mat::Zero(sys.n(), H + 1);
    rhs.r_lam.col(0) = inst.x0;

    const Mat Q11 = 2.0 * sys.C.transpose() * sys.C;
    const Mat Q12 = 2.0 * sys.C.transpose() * sys.D;
    const Mat Q22 = 2.0 * sys.D.transpose() * sys.D;
    const Mat Qterm = 2.0 * inst.Qterm;
    return solve_dense(assemble_kkt(Q11, Q12, Q22, Qterm, sys.A, sys.B, H, rhs)).u;
}

Mat simulate(const ProblemInstance& inst, const Mat& u_seq) {
    const auto& sys = inst.system;
    const int H = inst.horizon;
    if (u_seq.rows() != sys.l() || u_seq.cols() != H) throw DimensionMismatch("u_seq");
    Mat x(sys.n(), H + 1);
    x.col(0) = inst.x0;
    for (int i = 0; i < H; ++i) x.col(i + 1) = sys.A * x.col(i) + sys.B * u_seq.col(i);
    return x;
}

double cost_eval(const ProblemInstance& inst, const Mat& x_seq, const std::optional<Mat>& y_seq,
                 const Mat& u_seq, const std::optional<Mat>& z_seq) {
    const auto& sys = inst.system;
    const int H = inst.horizon;
    if (x_seq.rows() != sys.n() || x_seq.cols() != H + 1) throw DimensionMismatch("x_seq");
    if (u_seq.rows() != sys.l() || u_seq.cols() != H) throw DimensionMismatch("u_seq");

    const Mat y = y_seq.has_value() ? *y_seq
                                    : Mat(sys.C * x_seq.leftCols(H) + sys.D * u_seq);
    const Mat z = z_seq.has_value() ? *z_seq
                                    : Mat(sys.E * x_seq.leftCols(H) + sys.F * u_seq);
    double v = x_seq.col(H).dot(inst.Qterm * x_seq.col(H));
    v += y.squaredNorm();
    v += inst.lambda * z.cwiseAbs().sum();
    return v;
}

double CondensedProblem::objective(const Vec& U) const {
    return 0.5 * U.dot(Hess * U) + lin.dot(U) + c0 + lambda * U.cwiseAbs().sum();
}

CondensedProblem condense(const ProblemInstance& inst) {
    validate_instance(inst);
    const auto& sys = inst.system;
    const int H = inst.horizon;
    const Index n = sys.n();
    const Index l = sys.l();
    if (sys.E.cwiseAbs().maxCoeff() != 0.0 ||
        (sys.F - Mat::Identity(sys.p(), l)).cwiseAbs().maxCoeff() != 0.0) {
        throw Error("condense requires the delta-u structure E = 0, F = I");
    }

    CondensedProblem cp;
    cp.l = l;
    cp.horizon = H;
    cp.lambda = inst.lambda;

    // Stacked states = Phi U + free_response by forward substitution.
    cp.Phi = Mat::Zero((H + 1) * n, H * l);
    cp.free_response = Vec::Zero((H + 1) * n);
    cp.free_response.head(n) = inst.x0;
    for (int i = 0; i < H; ++i) {
        cp.Phi.middleRows((i + 1) * n, n) = sys.A * cp.Phi.middleRows(i * n, n);
        cp.Phi.block((i + 1) * n, i * l, n, l) = sys.B;
        cp.free_response.segment((i + 1) * n, n) =
            sys.A * cp.free_response.segment(i * n, n);
    }

    // y_i = C x_i + D u_i; assemble G = [C-part via Phi + D-part direct],
    // with the terminal weight entering through its symmetric factor, so
    // V_quad(U) = ||G U + f||^2.
    Mat G = Mat::Zero(H * sys.m() + n, H * l);  // stacked (y_0..y_{H-1}, factored x_H)
    Vec f = Vec::Zero(H * sys.m() + n);
    for (int i = 0; i < H; ++i) {
        G.middleRows(i * sys.m(), sys.m()) = sys.C * cp.Phi.middleRows(i * n, n);
        G.block(i * sys.m(), i * l, sys.m(), l) += sys.D;
        f.segment(i * sys.m(), sys.m()) = sys.C * cp.free_response.segment(i * n, n);
    }
    const Mat cterm = symmetric_factor(inst.Qterm);
    G.bottomRows(n) = cterm * cp.Phi.bottomRows(n);
    f.tail(n) = cterm * cp.free_response.tail(n);

    cp.Hess = 2.0 * G.transpose() * G;
    cp.Hess = 0.5 * (cp.Hess + cp.Hess.transpose()).eval();
    cp.lin = 2.0 * G.transpose() * f;
    cp.c0 = f.squaredNorm();

    // Largest eigenvalue by power iteration, 1% tolerance.
    const Index dim = cp.Hess.rows();
    Vec v(dim);
    for (Index j = 0; j < dim; ++j) v(j) = 1.0 + 0.01 * static_cast<double>(j);
    v.normalize();
    double lam_prev = 0.0;
    cp.lipschitz = cp.Hess.norm();  // Frobenius fallback bounds the spectrum
    for (int it = 0; it < 10000; ++it) {
        Vec w = cp.Hess * v;
        const double lam = v.dot(w);
        const double nw = w.norm();
        if (nw == 0.0) {
            cp.lipschitz = 0.0;
            break;
        }
        v = w / nw;
        if (it > 2 && std::abs(lam - lam_prev) <= 0.005 * std::abs(lam)) {
            cp.lipschitz = lam * 1.01;  // headroom keeps 1/lipschitz a valid step
            break;
        }
        lam_prev = lam;
    }
    return cp;
}

IstaResult ista_solve(const CondensedProblem& cp, double tol, int max_iter) {
    if (!(cp.lipschitz > 0.0)) throw Error("lipschitz constant must be positive");
    const double step = 1.0 / cp.lipschitz;

    IstaResult res;
    res.u = Vec::Zero(cp.Hess.rows());
    double obj = cp.objective(res.u);
    for (int k = 0; k < max_iter; ++k) {
        const Vec grad = cp.Hess * res.u + cp.lin;
        Vec next = res.u - step * grad;
        for (Index j = 0; j < next.size(); ++j) {
            next(j) = soft_threshold(next(j), cp.lambda * step);
        }
        const double next_obj = cp.objective(next);
        if (next_obj > obj + kMonotoneSlack * (1.0 + std::abs(obj))) {
            throw NumericalFailure("proximal-gradient objective increased");
        }
        res.u = std::move(next);
        res.iterations = k + 1;
        const double decrease = obj - next_obj;
        obj = next_obj;
        if (std::abs(decrease) < tol) {
            res.objective = obj;
            return res;
        }
    }
    throw MaxIterExceeded("proximal-gradient iteration budget exhausted");
}

}  // namespace l1mpc::oracle
