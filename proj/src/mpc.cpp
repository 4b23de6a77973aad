#include "l1mpc/mpc.hpp"

#include <chrono>
#include <cmath>

namespace l1mpc {

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kFilterTol = 1e-10;
constexpr int kFilterMaxIter = 10000;

}  // namespace

Mat kalman_gain(const Mat& Ad, const Mat& C, const Mat& Qw, const Mat& Rv) {
    const Index n = Ad.rows();
    const Index m = C.rows();
    if (Ad.cols() != n || C.cols() != n) throw DimensionMismatch("Ad/C");
    if (Qw.rows() != n || Qw.cols() != n) throw DimensionMismatch("Qw");
    if (Rv.rows() != m || Rv.cols() != m) throw DimensionMismatch("Rv");

    Mat P = Mat::Identity(n, n);
    bool converged = false;
    for (int k = 0; k < kFilterMaxIter; ++k) {
        const Mat PCt = P * C.transpose();
        const Mat innov = C * PCt + Rv;
        const Mat gain_update = innov.ldlt().solve(PCt.transpose());  // (CPC'+Rv)^{-1}CP
        Mat Pn = Ad * P * Ad.transpose() + Qw -
                 Ad * PCt * gain_update * Ad.transpose();
        Pn = 0.5 * (Pn + Pn.transpose());
        const double diff = (Pn - P).cwiseAbs().maxCoeff();
        P = Pn;
        if (diff <= kFilterTol) {
            converged = true;
            break;
        }
        if (!P.allFinite()) throw NotDetectable("filter iteration diverged");
    }
    if (!converged) throw NotDetectable("filter iteration did not converge");

    const Mat PCt = P * C.transpose();
    return (C * PCt + Rv).ldlt().solve(PCt.transpose()).transpose();
}

void observer_update(ObserverState& obs, const Mat& Ad, const Mat& Bd, const Mat& C,
                     const Vec& u_applied, const Vec& y_measured) {
    obs.estimate = Ad * obs.estimate + Bd * u_applied;
    obs.estimate += obs.gain * (y_measured - C * obs.estimate);
}

Eigen::Vector4d tank_vector_field(const TankParams& p, const Eigen::Vector4d& levels,
                                  const Eigen::Vector2d& volts) {
    Eigen::Vector4d s;
    for (int i = 0; i < 4; ++i) s(i) = std::sqrt(2.0 * p.g * std::max(levels(i), 0.0));
    Eigen::Vector4d dx;
    dx(0) = (-p.a[0] * s(0) + p.a[2] * s(2) + p.gamma1 * p.k1 * volts(0)) / p.At;
    dx(1) = (-p.a[1] * s(1) + p.a[3] * s(3) + p.gamma2 * p.k2 * volts(1)) / p.At;
    dx(2) = (-p.a[2] * s(2) + (1.0 - p.gamma2) * p.k2 * volts(1)) / p.At;
    dx(3) = (-p.a[3] * s(3) + (1.0 - p.gamma1) * p.k1 * volts(0)) / p.At;
    return dx;
}

Eigen::Vector4d plant_step_nonlinear(const TankParams& p, const Eigen::Vector4d& levels,
                                     const Eigen::Vector2d& volts, double dt, int substeps) {
    if (substeps < 1) throw Error("substeps must be >= 1");
    const double h = dt / substeps;
    Eigen::Vector4d x = levels;
    for (int s = 0; s < substeps; ++s) {
        const Eigen::Vector4d k1 = tank_vector_field(p, x, volts);
        const Eigen::Vector4d k2 = tank_vector_field(p, x + 0.5 * h * k1, volts);
        const Eigen::Vector4d k3 = tank_vector_field(p, x + 0.5 * h * k2, volts);
        const Eigen::Vector4d k4 = tank_vector_field(p, x + h * k3, volts);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        x = x.cwiseMax(0.0);
    }
    return x;
}

MpcProblem make_tank_scenario(double lambda, int horizon, int steps) {
    TankParams params;
    const TankLinearModel lin = quadruple_tank_continuous(params);
    MpcProblem prob;
    prob.cfg.sample_time = 1.0;
    std::tie(prob.Ad, prob.Bd) = discretize_zoh(lin.Ac, lin.Bc, prob.cfg.sample_time);
    prob.Cmeas = lin.C;
    prob.x_eq = params.x_eq;
    prob.u_eq = params.u_eq;
    prob.tank = params;

    // Output weight I_2 on the measured levels, folded into state space.
    const Mat Qstate = lin.C.transpose() * lin.C;
    const Mat Qbar = Mat::Zero(4, 4);
    prob.cfg.aug = augment_delta_u(prob.Ad, prob.Bd, Qstate, Qbar);
    prob.cfg.horizon = horizon;
    prob.cfg.lambda = lambda;
    prob.cfg.steps = steps;
    prob.cfg.Qw = 1e-4 * Mat::Identity(4, 4);
    prob.cfg.Rv = 1e-4 * Mat::Identity(2, 2);
    return prob;
}

namespace {

ProblemInstance make_instance(const MpcConfig& cfg, const Vec& x0_aug) {
    ProblemInstance inst;
    inst.system = cfg.aug.base;
    inst.horizon = cfg.horizon;
    inst.Qterm = cfg.aug.Qterm_aug;
    inst.lambda = cfg.lambda;
    inst.x0 = x0_aug;
    inst.rho = cfg.rho;
    inst.alpha = cfg.alpha;
    inst.eps_abs = cfg.eps_abs;
    inst.eps_rel = cfg.eps_rel;
    inst.max_iter = cfg.max_iter;
    return inst;
}

}  // namespace

ProblemInstance first_tank_instance(const MpcProblem& prob, const Vec& x_init_physical,
                                    const Vec& u_init_physical) {
    const Index n = prob.Ad.rows();
    const Index l = prob.Bd.cols();
    Vec x0_aug(n + l);
    x0_aug.head(n) = x_init_physical - prob.x_eq;
    x0_aug.tail(l) = u_init_physical - prob.u_eq;
    return make_instance(prob.cfg, x0_aug);
}

Trajectory run_mpc(const MpcProblem& prob, PlantKind plant, const Vec& x_init_physical,
                   const Vec& u_init_physical) {
    const MpcConfig& cfg = prob.cfg;
    const Index n = prob.Ad.rows();
    const Index l = prob.Bd.cols();
    if (plant == PlantKind::kNonlinearTank && !prob.tank.has_value()) {
        throw Error("scenario has no nonlinear plant");
    }

    Trajectory traj;
    if (cfg.steps <= 0) return traj;
    traj.steps.reserve(static_cast<std::size_t>(cfg.steps));

    const Mat Qw = cfg.Qw.size() > 0 ? cfg.Qw : Mat(1e-4 * Mat::Identity(n, n));
    const Mat Rv = cfg.Rv.size() > 0 ? cfg.Rv : Mat(1e-4 * Mat::Identity(prob.Cmeas.rows(),
                                                                         prob.Cmeas.rows()));
    ObserverState obs;
    obs.gain = kalman_gain(prob.Ad, prob.Cmeas, Qw, Rv);
    obs.process_cov = Qw;
    obs.meas_cov = Rv;
    obs.estimate = x_init_physical - prob.x_eq;  // initial deviation is known

    // One factorization serves the whole loop; only x0 changes per step.
    AdmmSolver solver(make_instance(cfg, Vec::Zero(n + l)));

    Vec x_plant = x_init_physical;
    Vec u_prev = u_init_physical;
    Vec u_prev_dev = u_init_physical - prob.u_eq;
    SplitState warm;
    bool have_warm = false;

    for (int t = 0; t < cfg.steps; ++t) {
        const Vec y_meas_dev = prob.Cmeas * (x_plant - prob.x_eq);
        if (t > 0) observer_update(obs, prob.Ad, prob.Bd, prob.Cmeas, u_prev_dev, y_meas_dev);

        Vec x0_aug(n + l);
        x0_aug.head(n) = obs.estimate;
        x0_aug.tail(l) = u_prev_dev;
        solver.set_initial_state(x0_aug);

        const auto t0 = Clock::now();
        const SolveReport report =
            (cfg.warm_start && have_warm) ? solver.solve(warm) : solver.solve();
        const double solve_ms =
            std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
        if (cfg.strict_max_iter && report.status == SolveStatus::kMaxIter) {
            throw Error("solve hit max_iter at step " + std::to_string(t));
        }

        // du_0 from the local z block: its soft-threshold zeros are exact.
        const Vec du = report.final_state.local.z.col(0);
        const Vec u_applied = u_prev + du;

        // Record what the controller saw and did, then advance the plant.
        StepRecord rec;
        rec.t = t * cfg.sample_time;
        rec.x_plant = x_plant;
        rec.u_applied = u_applied;
        rec.y_meas = y_meas_dev + prob.Cmeas * prob.x_eq;
        rec.x_est = obs.estimate + prob.x_eq;
        rec.du = du;
        rec.admm_iterations = report.iterations;
        rec.solve_ms = solve_ms;
        traj.steps.push_back(std::move(rec));

        u_prev = u_applied;
        u_prev_dev = u_applied - prob.u_eq;
        if (plant == PlantKind::kNonlinearTank) {
            x_plant = plant_step_nonlinear(*prob.tank, x_plant, u_applied, cfg.sample_time, 10);
        } else {
            x_plant = prob.x_eq + prob.Ad * (x_plant - prob.x_eq) + prob.Bd * u_prev_dev;
        }

        warm = report.final_state;
        have_warm = true;
    }
    return traj;
}

}  // namespace l1mpc
