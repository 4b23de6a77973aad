#pragma once

#include <optional>
#include <vector>

#include "l1mpc/admm.hpp"
#include "l1mpc/model.hpp"
#include "l1mpc/types.hpp"

namespace l1mpc {

/// Everything a closed-loop run needs besides the plant itself.
struct MpcConfig {
    AugmentedSystem aug;
    int horizon = 5;
    double lambda = 0.1;

    double rho = 1.0;
    double alpha = 1.8;
    double eps_abs = 1e-5;
    double eps_rel = 1e-4;
    int max_iter = 1000;

    double sample_time = 1.0;  ///< seconds
    int steps = 10;            ///< closed-loop step count

    bool warm_start = true;
    bool strict_max_iter = false;  ///< abort if a solve hits max_iter

    Mat Qw;  ///< observer process covariance (defaults to 1e-4 I)
    Mat Rv;  ///< observer measurement covariance (defaults to 1e-4 I)
};

/// Steady-state Kalman measurement gain for (Ad, C): iterates
/// P <- Ad P Ad' + Qw - Ad P C'(C P C' + Rv)^{-1} C P Ad' to its fixed
/// point (tolerance 1e-10, cap 10000) and returns P C'(C P C' + Rv)^{-1}.
/// Throws NotDetectable on non-convergence.
Mat kalman_gain(const Mat& Ad, const Mat& C, const Mat& Qw, const Mat& Rv);

struct ObserverState {
    Vec estimate;     ///< current state estimate (deviation coordinates)
    Mat gain;         ///< steady-state measurement gain
    Mat process_cov;
    Mat meas_cov;
};

/// Predict with the applied input, then correct with the measurement:
/// xhat <- Ad xhat + Bd u;  xhat <- xhat + gain (y - C xhat).
void observer_update(ObserverState& obs, const Mat& Ad, const Mat& Bd, const Mat& C,
                     const Vec& u_applied, const Vec& y_measured);

/// One sample period of the nonlinear quadruple tank under constant input,
/// integrated with classical RK4 at dt/substeps. Levels are clamped at
/// zero so the square roots stay real.
Eigen::Vector4d plant_step_nonlinear(const TankParams& params, const Eigen::Vector4d& levels,
                                     const Eigen::Vector2d& volts, double dt, int substeps);

/// Time derivative of the tank levels (exposed for testing).
Eigen::Vector4d tank_vector_field(const TankParams& params, const Eigen::Vector4d& levels,
                                  const Eigen::Vector2d& volts);

enum class PlantKind { kLinear, kNonlinearTank };

struct StepRecord {
    double t = 0.0;
    Vec x_plant;    ///< plant state, physical units
    Vec u_applied;  ///< input applied this step, physical units
    Vec y_meas;     ///< measured output, physical units
    Vec x_est;      ///< observer estimate, physical units
    Vec du;         ///< first input increment of the solution
    int admm_iterations = 0;
    double solve_ms = 0.0;
};

struct Trajectory {
    std::vector<StepRecord> steps;
};

/// A complete scenario: the delta-u controller model plus the base
/// discrete model the observer runs on, the operating point, and the
/// nonlinear plant when there is one.
struct MpcProblem {
    MpcConfig cfg;
    Mat Ad, Bd, Cmeas;  ///< base discrete model, deviation coordinates
    Vec x_eq, u_eq;     ///< operating point (zeros for raw models)
    std::optional<TankParams> tank;  ///< present when the nonlinear plant exists
};

/// The quadruple-tank scenario: linearize, discretize at 1 Hz, fold the
/// output weight I_2 into the state space, augment with the previous
/// input, zero terminal weight.
MpcProblem make_tank_scenario(double lambda, int horizon = 5, int steps = 10);

/// The open-loop problem the first receding-horizon step solves, for a
/// given initial plant state (physical units).
ProblemInstance first_tank_instance(const MpcProblem& prob, const Vec& x_init_physical,
                                    const Vec& u_init_physical);

/// Receding-horizon loop: estimate the state, solve (warm-started from
/// the previous step), apply u = u_prev + du_0, advance the plant, log.
/// The factorization and every solver matrix are computed once before
/// the loop. The applied du_0 is taken from the final local z block,
/// whose soft-threshold zeros are exact.
Trajectory run_mpc(const MpcProblem& prob, PlantKind plant, const Vec& x_init_physical,
                   const Vec& u_init_physical);

}  // namespace l1mpc
