#include "l1mpc/admm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "l1mpc/mpc.hpp"
#include "l1mpc/oracle.hpp"
#include "test_support.hpp"

using namespace l1mpc;
namespace lt = l1mpc::testing;

namespace {

ProblemInstance random_instance(lt::Rng& rng, Index n, Index l, Index m, Index p, int H,
                                double lambda, double radius = 0.9) {
    ProblemInstance inst;
    inst.system = lt::random_system(rng, n, l, m, p, radius);
    inst.horizon = H;
    inst.Qterm = lt::random_psd(rng, n);
    inst.lambda = lambda;
    inst.x0 = lt::random_vector(rng, n);
    return inst;
}

Vec tank_x_init() {
    Vec x(4);
    x << 16.0, 16.0, 4.0, 13.0;
    return x;
}

}  // namespace

TEST_CASE("soft threshold") {
    CHECK(soft_threshold(3.0, 1.0) == 2.0);
    CHECK(soft_threshold(0.5, 1.0) == 0.0);
    CHECK(soft_threshold(-3.0, 1.0) == -2.0);
    CHECK(std::signbit(soft_threshold(-0.5, 1.0)) == false);  // dead zone returns +0.0
    // odd symmetry
    lt::Rng rng(1);
    std::normal_distribution<double> dist(0.0, 2.0);
    for (int i = 0; i < 100; ++i) {
        const double a = dist(rng);
        CHECK(soft_threshold(-a, 0.7) == -soft_threshold(a, 0.7));
    }
}

TEST_CASE("soft threshold is firmly nonexpansive") {
    lt::Rng rng(2);
    std::normal_distribution<double> dist(0.0, 3.0);
    std::uniform_real_distribution<double> kdist(0.0, 2.0);
    for (int i = 0; i < 1000; ++i) {
        const double a = dist(rng), b = dist(rng), k = kdist(rng);
        CHECK(std::abs(soft_threshold(a, k) - soft_threshold(b, k)) <= std::abs(a - b) + 1e-15);
    }
}

TEST_CASE("step 1 closed forms") {
    lt::Rng rng(3);
    ProblemInstance inst = random_instance(rng, 3, 2, 2, 2, 4, 2.0);
    inst.rho = 1.0;

    SplitState state = SplitState::cold_start(inst);
    state.consensus = lt::random_group(rng, inst);
    state.dual = lt::random_group(rng, inst);

    SUBCASE("terminal factor reduces to identity for zero terminal weight") {
        inst.Qterm = Mat::Zero(3, 3);
        Eigen::LLT<Mat> term(Mat(2.0 * inst.Qterm + inst.rho * Mat::Identity(3, 3)));
        step1(state, inst, term);
        CHECK(lt::rel_error(state.local.x.col(4),
                            state.consensus.x.col(4) - state.dual.x.col(4)) < 1e-14);
    }
    SUBCASE("y scales by rho/(2+rho)") {
        Eigen::LLT<Mat> term(Mat(2.0 * inst.Qterm + inst.rho * Mat::Identity(3, 3)));
        step1(state, inst, term);
        CHECK(lt::rel_error(state.local.y,
                            ((state.consensus.y - state.dual.y) / 3.0).eval()) < 1e-14);
        CHECK(lt::rel_error(state.local.u, (state.consensus.u - state.dual.u).eval()) < 1e-14);
    }
    SUBCASE("z soft-thresholds at lambda/rho") {
        state.consensus.z.setZero();
        state.dual.z.setZero();
        state.consensus.z(0, 0) = 3.0;
        state.consensus.z(1, 0) = -0.5;
        Eigen::LLT<Mat> term(Mat(2.0 * inst.Qterm + inst.rho * Mat::Identity(3, 3)));
        step1(state, inst, term);  // lambda = 2, rho = 1
        CHECK(state.local.z(0, 0) == 1.0);
        CHECK(state.local.z(1, 0) == 0.0);
    }
}

TEST_CASE("step 1 sub-updates are order independent bitwise") {
    lt::Rng rng(5);
    ProblemInstance inst = random_instance(rng, 3, 2, 2, 2, 6, 0.7);
    Eigen::LLT<Mat> term(Mat(2.0 * inst.Qterm + inst.rho * Mat::Identity(3, 3)));

    SplitState a = SplitState::cold_start(inst);
    a.consensus = lt::random_group(rng, inst);
    a.dual = lt::random_group(rng, inst);
    SplitState b = a;

    step1(a, inst, term);
    std::vector<int> order(static_cast<std::size_t>(4 * inst.horizon + 1));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (int idx : order) step1_apply(b, inst, term, idx);

    CHECK((a.local.x - b.local.x).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.local.y - b.local.y).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.local.u - b.local.u).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.local.z - b.local.z).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("projection fixes feasible points and is idempotent") {
    lt::Rng rng(7);
    for (int trial = 0; trial < 10; ++trial) {
        ProblemInstance inst = random_instance(rng, 3, 2, 2, 1, 6, 0.3);
        const ProjectionCost cost = build_projection_cost(inst.system).scaled(2.0);
        const RiccatiCache cache = factorize(cost, inst.system.A, inst.system.B, inst.horizon);

        SplitState state = SplitState::cold_start(inst);
        state.dual = VarGroup::zero(inst);

        const VarGroup feasible = lt::random_feasible_point(rng, inst);
        step2_project(state, feasible, cache, inst.system, inst.x0);
        CHECK(lt::group_distance(state.consensus, feasible) < 1e-9);

        const VarGroup arbitrary = lt::random_group(rng, inst);
        step2_project(state, arbitrary, cache, inst.system, inst.x0);
        const VarGroup once = state.consensus;
        CHECK(lt::feasibility_violation(inst, once) < 1e-9);
        step2_project(state, once, cache, inst.system, inst.x0);
        CHECK(lt::group_distance(state.consensus, once) < 1e-10);
    }
}

TEST_CASE("projection matches the dense equality-constrained solve") {
    lt::Rng rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        ProblemInstance inst = random_instance(rng, 4, 2, 3, 2, 7, 0.5);
        const ProjectionCost cost = build_projection_cost(inst.system).scaled(2.0);
        const RiccatiCache cache = factorize(cost, inst.system.A, inst.system.B, inst.horizon);

        SplitState state = SplitState::cold_start(inst);
        const VarGroup point = lt::random_group(rng, inst);
        step2_project(state, point, cache, inst.system, inst.x0);

        const VarGroup want = oracle::dense_kkt_solve(inst, point);
        CHECK(lt::rel_error(state.consensus.x, want.x) < 1e-8);
        CHECK(lt::rel_error(state.consensus.u, want.u) < 1e-8);
        CHECK(lt::rel_error(state.consensus.y, want.y) < 1e-8);
        CHECK(lt::rel_error(state.consensus.z, want.z) < 1e-8);
    }
}

TEST_CASE("dual update accumulates the consensus gap") {
    lt::Rng rng(11);
    ProblemInstance inst = random_instance(rng, 3, 1, 1, 1, 4, 0.2);
    SplitState state = SplitState::cold_start(inst);
    state.local = lt::random_group(rng, inst);
    state.consensus = lt::random_group(rng, inst);

    SUBCASE("exact agreement leaves duals unchanged") {
        state.consensus = state.local;
        step3_duals(state, state.local);
        CHECK(state.dual.x.cwiseAbs().maxCoeff() == 0.0);
        CHECK(state.dual.z.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("from zero duals one update stores local minus consensus") {
        step3_duals(state, state.local);
        CHECK(lt::rel_error(state.dual.x, (state.local.x - state.consensus.x).eval()) < 1e-15);
        CHECK(lt::rel_error(state.dual.u, (state.local.u - state.consensus.u).eval()) < 1e-15);
    }
    SUBCASE("relaxation is continuous at alpha = 1") {
        const VarGroup r1 = over_relax(state, 1.0);
        const VarGroup r2 = over_relax(state, 1.0 + 1e-15);
        CHECK(lt::group_distance(r1, r2) <= 1e-12);
    }
}

TEST_CASE("residual definitions") {
    lt::Rng rng(13);
    ProblemInstance inst = random_instance(rng, 3, 2, 2, 1, 5, 0.4);
    SplitState state = SplitState::cold_start(inst);
    state.local = lt::random_group(rng, inst);
    state.consensus = state.local;
    const Residuals r1 = residuals(state, state.consensus, inst.rho);
    CHECK(r1.primal == 0.0);
    CHECK(r1.dual == 0.0);

    state.consensus = lt::random_group(rng, inst);
    const Residuals r2 = residuals(state, state.consensus, 2.0);
    CHECK(r2.primal > 0.0);
    CHECK(r2.dual == 0.0);  // consensus unchanged between iterations

    // conjunction: huge primal residual must fail the test even with zero dual
    inst.eps_abs = 1e-5;
    inst.eps_rel = 1e-4;
    state.local.x.array() += 100.0;
    const Residuals r3 = residuals(state, state.consensus, inst.rho);
    CHECK_FALSE(check_stop(r3, state, inst));
}

TEST_CASE("zero iteration budget reports the initial consensus") {
    lt::Rng rng(15);
    ProblemInstance inst = random_instance(rng, 3, 2, 1, 1, 4, 0.3);
    inst.max_iter = 0;
    const SolveReport report = solve(inst);
    CHECK(report.status == SolveStatus::kMaxIter);
    CHECK(report.iterations == 0);
    CHECK(report.final_state.consensus.x.col(0).isApprox(inst.x0));
    CHECK(report.final_state.consensus.u.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("consensus block is feasible after every iteration") {
    lt::Rng rng(17);
    ProblemInstance inst = random_instance(rng, 3, 2, 2, 2, 6, 0.5);
    inst.max_iter = 40;
    AdmmSolver solver(inst);
    const SolveReport report = solver.solve();
    CHECK(lt::feasibility_violation(inst, report.final_state.consensus) <= 1e-9);
}

TEST_CASE("pure quadratic problems match the one-shot solution") {
    lt::Rng rng(19);
    int solved = 0;
    for (int trial = 0; trial < 8; ++trial) {
        // m >= l keeps the quadratic cost positive definite in u
        ProblemInstance inst = random_instance(rng, 4, 2, 3, 2, 6, 0.0);
        inst.max_iter = 20000;
        const SolveReport report = solve(inst);
        REQUIRE(report.status == SolveStatus::kConverged);
        const Mat u_lq = oracle::lq_solve(inst);
        CHECK(lt::rel_error(report.final_state.consensus.u, u_lq) < 1e-4);
        ++solved;
    }
    CHECK(solved == 8);
}

TEST_CASE("tank regulator problem converges with the reported signature") {
    const MpcProblem prob = make_tank_scenario(0.1);
    const ProblemInstance inst = first_tank_instance(prob, tank_x_init(), prob.u_eq);
    const SolveReport report = solve(inst);

    CHECK(report.status == SolveStatus::kConverged);
    CHECK(report.iterations >= 100);
    CHECK(report.iterations <= 600);

    // residuals after 20 iterations, against the recorded magnitudes
    REQUIRE(report.iterations > 20);
    CHECK(report.primal_residuals[19] > 0.055);
    CHECK(report.primal_residuals[19] < 0.22);
    CHECK(report.dual_residuals[19] > 0.03);
    CHECK(report.dual_residuals[19] < 0.12);

    // final cost against the independent condensed-problem optimizer
    const oracle::IstaResult ref = oracle::ista_solve(oracle::condense(inst));
    CHECK(std::abs(report.final_cost - ref.objective) /
              std::max(1.0, ref.objective) < 1e-3);
    CHECK(ref.objective == doctest::Approx(3.58343).epsilon(1e-3));

    // local-iterate cost telemetry settles at the same value
    CHECK(report.cost_history.back() == doctest::Approx(ref.objective).epsilon(1e-3));

    // on convergence both stopping inequalities hold
    Residuals final_res;
    final_res.primal = report.primal_residuals.back();
    final_res.dual = report.dual_residuals.back();
    CHECK(check_stop(final_res, report.final_state, inst));
}

TEST_CASE("warm start from the converged state finishes immediately-ish") {
    const MpcProblem prob = make_tank_scenario(0.1);
    const ProblemInstance inst = first_tank_instance(prob, tank_x_init(), prob.u_eq);
    AdmmSolver solver(inst);
    const SolveReport cold = solver.solve();
    const SolveReport warm = solver.solve(cold.final_state);
    CHECK(warm.iterations < cold.iterations / 4);
}

TEST_CASE("cost telemetry may dip below the optimum") {
    // the local iterate is infeasible, so its objective is not a bound
    const MpcProblem prob = make_tank_scenario(0.1);
    const ProblemInstance inst = first_tank_instance(prob, tank_x_init(), prob.u_eq);
    const SolveReport report = solve(inst);
    const double vstar = oracle::ista_solve(oracle::condense(inst)).objective;
    const double min_cost =
        *std::min_element(report.cost_history.begin(), report.cost_history.end());
    CHECK(min_cost < vstar);
}
