#include "l1mpc/admm.hpp"

#include <chrono>
#include <cmath>

#include "l1mpc/model.hpp"

namespace l1mpc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

double soft_threshold(double a, double kappa) {
    if (a > kappa) return a - kappa;
    if (a < -kappa) return a + kappa;
    return 0.0;
}

Mat soft_threshold(const Mat& a, double kappa) {
    return a.unaryExpr([kappa](double v) { return soft_threshold(v, kappa); });
}

VarGroup VarGroup::zero(const ProblemInstance& inst) {
    const int H = inst.horizon;
    VarGroup g;
    g.x = Mat::Zero(inst.system.n(), H + 1);
    g.y = Mat::Zero(inst.system.m(), H);
    g.u = Mat::Zero(inst.system.l(), H);
    g.z = Mat::Zero(inst.system.p(), H);
    return g;
}

double VarGroup::squared_norm() const {
    return x.squaredNorm() + y.squaredNorm() + u.squaredNorm() + z.squaredNorm();
}

SplitState SplitState::cold_start(const ProblemInstance& inst) {
    SplitState s;
    s.local = VarGroup::zero(inst);
    s.consensus = VarGroup::zero(inst);
    s.dual = VarGroup::zero(inst);
    s.consensus.x.col(0) = inst.x0;
    return s;
}

void step1_apply(SplitState& state, const ProblemInstance& inst, const Eigen::LLT<Mat>& term_fact,
                 int idx) {
    const int H = inst.horizon;
    const double rho = inst.rho;
    if (idx < H) {
        state.local.x.col(idx) = state.consensus.x.col(idx) - state.dual.x.col(idx);
    } else if (idx == H) {
        state.local.x.col(H) =
            term_fact.solve((rho * (state.consensus.x.col(H) - state.dual.x.col(H))).eval());
    } else if (idx <= 2 * H) {
        const int i = idx - H - 1;
        state.local.y.col(i) =
            rho / (2.0 + rho) * (state.consensus.y.col(i) - state.dual.y.col(i));
    } else if (idx <= 3 * H) {
        const int i = idx - 2 * H - 1;
        state.local.u.col(i) = state.consensus.u.col(i) - state.dual.u.col(i);
    } else {
        const int i = idx - 3 * H - 1;
        state.local.z.col(i) =
            soft_threshold((state.consensus.z.col(i) - state.dual.z.col(i)).eval(),
                           inst.lambda / rho);
    }
}

void step1(SplitState& state, const ProblemInstance& inst, const Eigen::LLT<Mat>& term_fact) {
    const int count = 4 * inst.horizon + 1;
    for (int idx = 0; idx < count; ++idx) step1_apply(state, inst, term_fact, idx);
}

VarGroup over_relax(const SplitState& state, double alpha) {
    if (alpha == 1.0) return state.local;
    VarGroup r;
    r.x = alpha * state.local.x + (1.0 - alpha) * state.consensus.x;
    r.y = alpha * state.local.y + (1.0 - alpha) * state.consensus.y;
    r.u = alpha * state.local.u + (1.0 - alpha) * state.consensus.u;
    r.z = alpha * state.local.z + (1.0 - alpha) * state.consensus.z;
    return r;
}

void step2_project(SplitState& state, const VarGroup& relaxed, const RiccatiCache& cache,
                   const StageSystem& sys, const Vec& x0) {
    const int H = cache.horizon;
    const Index n = sys.n();

    // Projection point, then the KKT right-hand side of the doubled cost:
    // r_x,i = 2 (x_p,i + C'y_p,i + E'z_p,i), r_u,i = 2 (u_p,i + D'y_p,i + F'z_p,i),
    // r_x,H = 2 x_p,H, r_lam = (x0, 0, ..., 0).
    KktRhs rhs;
    rhs.r_x.resize(n, H + 1);
    rhs.r_u.resize(sys.l(), H);
    rhs.r_lam = Mat::Zero(n, H + 1);
    rhs.r_lam.col(0) = x0;

    const Mat xp = relaxed.x + state.dual.x;
    const Mat yp = relaxed.y + state.dual.y;
    const Mat up = relaxed.u + state.dual.u;
    const Mat zp = relaxed.z + state.dual.z;

    rhs.r_x.leftCols(H) = xp.leftCols(H);
    rhs.r_x.leftCols(H).noalias() += sys.C.transpose() * yp;
    rhs.r_x.leftCols(H).noalias() += sys.E.transpose() * zp;
    rhs.r_x.col(H) = xp.col(H);
    rhs.r_x *= 2.0;

    rhs.r_u = up;
    rhs.r_u.noalias() += sys.D.transpose() * yp;
    rhs.r_u.noalias() += sys.F.transpose() * zp;
    rhs.r_u *= 2.0;

    KktSolution sol = kkt_solve(cache, rhs);
    state.consensus.x = std::move(sol.x);
    state.consensus.u = std::move(sol.u);
    state.consensus.y.noalias() = sys.C * state.consensus.x.leftCols(H);
    state.consensus.y.noalias() += sys.D * state.consensus.u;
    state.consensus.z.noalias() = sys.E * state.consensus.x.leftCols(H);
    state.consensus.z.noalias() += sys.F * state.consensus.u;
}

void step3_duals(SplitState& state, const VarGroup& relaxed) {
    state.dual.x += relaxed.x - state.consensus.x;
    state.dual.y += relaxed.y - state.consensus.y;
    state.dual.u += relaxed.u - state.consensus.u;
    state.dual.z += relaxed.z - state.consensus.z;
}

Residuals residuals(const SplitState& state, const VarGroup& prev_consensus, double rho) {
    Residuals r;
    r.primal = std::sqrt((state.local.x - state.consensus.x).squaredNorm() +
                         (state.local.y - state.consensus.y).squaredNorm() +
                         (state.local.u - state.consensus.u).squaredNorm() +
                         (state.local.z - state.consensus.z).squaredNorm());
    r.dual = rho * std::sqrt((state.consensus.x - prev_consensus.x).squaredNorm() +
                             (state.consensus.y - prev_consensus.y).squaredNorm() +
                             (state.consensus.u - prev_consensus.u).squaredNorm() +
                             (state.consensus.z - prev_consensus.z).squaredNorm());
    return r;
}

bool check_stop(const Residuals& res, const SplitState& state, const ProblemInstance& inst) {
    const auto& sys = inst.system;
    const double N = static_cast<double>((inst.horizon + 1) * sys.n() +
                                         inst.horizon * (sys.m() + sys.l() + sys.p()));
    const double sqrt_n = std::sqrt(N);
    const double primal_scale =
        std::max(std::sqrt(state.local.squared_norm()), std::sqrt(state.consensus.squared_norm()));
    const double dual_scale = inst.rho * std::sqrt(state.dual.squared_norm());
    return res.primal <= sqrt_n * inst.eps_abs + inst.eps_rel * primal_scale &&
           res.dual <= sqrt_n * inst.eps_abs + inst.eps_rel * dual_scale;
}

double objective_value(const ProblemInstance& inst, const VarGroup& vars) {
    const int H = inst.horizon;
    double v = vars.x.col(H).dot(inst.Qterm * vars.x.col(H));
    v += vars.y.squaredNorm();
    v += inst.lambda * vars.z.cwiseAbs().sum();
    return v;
}

AdmmSolver::AdmmSolver(ProblemInstance inst) : inst_(std::move(inst)) {
    validate_instance(inst_);
    const auto t0 = Clock::now();
    const ProjectionCost cost = build_projection_cost(inst_.system).scaled(2.0);
    cache_ = factorize(cost, inst_.system.A, inst_.system.B, inst_.horizon);
    const Index n = inst_.system.n();
    term_fact_.compute(2.0 * inst_.Qterm + inst_.rho * Mat::Identity(n, n));
    if (term_fact_.info() != Eigen::Success) {
        throw NumericalFailure("terminal factor is not positive definite");
    }
    factorize_s_ = seconds_since(t0);
}

void AdmmSolver::set_initial_state(const Vec& x0) {
    if (x0.size() != inst_.system.n()) throw DimensionMismatch("x0");
    inst_.x0 = x0;
}

SolveReport AdmmSolver::solve_impl(const SplitState* warm, int max_iter, bool stop_enabled) {
    SolveReport report;
    report.timing.factorize_s = factorize_s_;
    report.primal_residuals.reserve(static_cast<std::size_t>(std::max(max_iter, 0)));
    report.dual_residuals.reserve(static_cast<std::size_t>(std::max(max_iter, 0)));
    report.cost_history.reserve(static_cast<std::size_t>(std::max(max_iter, 0)));

    SplitState state = SplitState::cold_start(inst_);
    if (warm != nullptr) {
        // consensus and duals carry over verbatim; step 1 rebuilds local
        state.consensus = warm->consensus;
        state.dual = warm->dual;
    }

    const auto loop_start = Clock::now();
    VarGroup prev_consensus = state.consensus;
    for (int k = 0; k < max_iter; ++k) {
        auto t = Clock::now();
        step1(state, inst_, term_fact_);
        report.timing.step1_s += seconds_since(t);

        const VarGroup relaxed = over_relax(state, inst_.alpha);
        prev_consensus = state.consensus;

        t = Clock::now();
        step2_project(state, relaxed, cache_, inst_.system, inst_.x0);
        report.timing.project_s += seconds_since(t);

        t = Clock::now();
        step3_duals(state, relaxed);
        report.timing.dual_s += seconds_since(t);

        t = Clock::now();
        const Residuals res = residuals(state, prev_consensus, inst_.rho);
        report.timing.residual_s += seconds_since(t);

        report.primal_residuals.push_back(res.primal);
        report.dual_residuals.push_back(res.dual);
        report.cost_history.push_back(objective_value(inst_, state.local));
        report.iterations = k + 1;

        if (stop_enabled && check_stop(res, state, inst_)) {
            report.status = SolveStatus::kConverged;
            break;
        }
    }
    report.timing.loop_s = seconds_since(loop_start);
    report.final_state = std::move(state);
    report.final_cost = objective_value(inst_, report.final_state.consensus);
    return report;
}

SolveReport solve(const ProblemInstance& inst, const std::optional<SplitState>& warm) {
    AdmmSolver solver(inst);
    return warm.has_value() ? solver.solve(*warm) : solver.solve();
}

}  // namespace l1mpc
