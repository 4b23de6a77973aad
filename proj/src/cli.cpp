#include "l1mpc/cli.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "l1mpc/admm.hpp"
#include "l1mpc/model.hpp"
#include "l1mpc/mpc.hpp"

namespace l1mpc::cli {

namespace {

using nlohmann::json;

Mat parse_matrix(const json& j, const std::string& field) {
    if (!j.is_array()) throw ValidationError(field);
    const auto rows = j.size();
    if (rows == 0) return Mat(0, 0);
    if (!j[0].is_array()) throw ValidationError(field);
    const auto cols = j[0].size();
    Mat m(static_cast<Index>(rows), static_cast<Index>(cols));
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols) throw ValidationError(field);
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number()) throw ValidationError(field);
            m(static_cast<Index>(r), static_cast<Index>(c)) = j[r][c].get<double>();
        }
    }
    return m;
}

Vec parse_vector(const json& j, const std::string& field) {
    if (!j.is_array()) throw ValidationError(field);
    Vec v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ValidationError(field);
        v(static_cast<Index>(i)) = j[i].get<double>();
    }
    return v;
}

InlineModel parse_inline_model(const json& j) {
    InlineModel m;
    for (const auto& [key, value] : j.items()) {
        if (key == "A") m.A = parse_matrix(value, "model.A");
        else if (key == "B") m.B = parse_matrix(value, "model.B");
        else if (key == "C") m.C = parse_matrix(value, "model.C");
        else if (key == "D") m.D = parse_matrix(value, "model.D");
        else if (key == "E") m.E = parse_matrix(value, "model.E");
        else if (key == "F") m.F = parse_matrix(value, "model.F");
        else if (key == "Qterm") m.Qterm = parse_matrix(value, "model.Qterm");
        else if (key == "Q") m.Q = parse_matrix(value, "model.Q");
        else if (key == "Qbar") m.Qbar = parse_matrix(value, "model.Qbar");
        else if (key == "x0") m.x0 = parse_vector(value, "model.x0");
        else throw ValidationError("model." + key);
    }
    if (m.A.size() == 0) throw ValidationError("model.A");
    if (m.B.size() == 0) throw ValidationError("model.B");
    const Index n = m.A.rows();
    const Index l = m.B.cols();
    if (m.C.size() == 0) m.C = Mat(0, n);
    if (m.D.size() == 0) m.D = Mat::Zero(m.C.rows(), l);
    if (m.E.size() == 0) m.E = Mat(0, n);
    if (m.F.size() == 0) m.F = Mat::Zero(m.E.rows(), l);
    if (m.Qterm.size() == 0) m.Qterm = Mat::Zero(n, n);
    if (m.Q.size() == 0) m.Q = Mat::Identity(m.C.rows(), m.C.rows());
    if (m.Qbar.size() == 0) m.Qbar = Mat::Zero(n, n);
    return m;
}

int worker_cap(std::size_t jobs) {
    unsigned cap = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("L1MPC_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) cap = static_cast<unsigned>(v);
    }
    return static_cast<int>(std::min<std::size_t>(cap, jobs));
}

/// Runs fn(i) for i in [0, jobs) on up to worker_cap threads.
template <typename Fn>
void parallel_for_jobs(std::size_t jobs, Fn&& fn) {
    const int workers = worker_cap(jobs);
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < jobs; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

std::string lambda_tag(double lambda) {
    std::ostringstream ss;
    ss << lambda;
    return ss.str();
}

ProblemInstance solve_instance(const ScenarioConfig& cfg, double lambda) {
    ProblemInstance inst;
    if (cfg.model == "quadruple_tank") {
        MpcProblem prob = make_tank_scenario(lambda, cfg.horizons.front(), cfg.steps);
        prob.cfg.rho = cfg.rho;
        prob.cfg.alpha = cfg.alpha;
        prob.cfg.eps_abs = cfg.eps_abs;
        prob.cfg.eps_rel = cfg.eps_rel;
        prob.cfg.max_iter = cfg.max_iter;
        Vec x_init(4);
        x_init << 16.0, 16.0, 4.0, 13.0;
        inst = first_tank_instance(prob, x_init, prob.u_eq);
    } else {
        const InlineModel& m = *cfg.inline_model;
        if (m.x0.size() != m.A.rows()) throw ValidationError("model.x0");
        inst.system = StageSystem{m.A, m.B, m.C, m.D, m.E, m.F};
        inst.Qterm = m.Qterm;
        inst.x0 = m.x0;
        inst.horizon = cfg.horizons.front();
        inst.lambda = lambda;
        inst.rho = cfg.rho;
        inst.alpha = cfg.alpha;
        inst.eps_abs = cfg.eps_abs;
        inst.eps_rel = cfg.eps_rel;
        inst.max_iter = cfg.max_iter;
    }
    return inst;
}

MpcProblem mpc_problem(const ScenarioConfig& cfg, double lambda) {
    MpcProblem prob;
    if (cfg.model == "quadruple_tank") {
        prob = make_tank_scenario(lambda, cfg.horizons.front(), cfg.steps);
    } else {
        const InlineModel& m = *cfg.inline_model;
        if (m.C.rows() == 0) throw ValidationError("model.C");
        if (m.x0.size() != m.A.rows()) throw ValidationError("model.x0");
        prob.Ad = m.A;
        prob.Bd = m.B;
        prob.Cmeas = m.C;
        prob.x_eq = Vec::Zero(m.A.rows());
        prob.u_eq = Vec::Zero(m.B.cols());
        prob.cfg.aug = augment_delta_u(m.A, m.B, m.C.transpose() * m.Q * m.C, m.Qbar);
        prob.cfg.horizon = cfg.horizons.front();
        prob.cfg.lambda = lambda;
        prob.cfg.steps = cfg.steps;
    }
    prob.cfg.rho = cfg.rho;
    prob.cfg.alpha = cfg.alpha;
    prob.cfg.eps_abs = cfg.eps_abs;
    prob.cfg.eps_rel = cfg.eps_rel;
    prob.cfg.max_iter = cfg.max_iter;
    prob.cfg.steps = cfg.steps;
    prob.cfg.sample_time = cfg.sample_time;
    return prob;
}

std::ofstream open_output(const ScenarioConfig& cfg, const std::string& name) {
    std::filesystem::create_directories(cfg.output);
    const auto path = std::filesystem::path(cfg.output) / name;
    std::ofstream out(path);
    if (!out) throw Error("cannot open output file " + path.string());
    return out;
}

}  // namespace

std::string format_value(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

ScenarioConfig parse_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(e.what());
    }
    if (!j.is_object()) throw ParseError("config must be a JSON object");

    ScenarioConfig cfg;
    bool have_mode = false;
    bool have_plant = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "mode") {
            if (!value.is_string()) throw ValidationError("mode");
            cfg.mode = value.get<std::string>();
            have_mode = true;
        } else if (key == "model") {
            if (value.is_string()) {
                cfg.model = value.get<std::string>();
                if (cfg.model != "quadruple_tank") throw ValidationError("model");
            } else if (value.is_object()) {
                cfg.model = "inline";
                cfg.inline_model = parse_inline_model(value);
            } else {
                throw ValidationError("model");
            }
        } else if (key == "horizon") {
            cfg.horizons.clear();
            if (value.is_number_integer()) {
                cfg.horizons.push_back(value.get<int>());
            } else if (value.is_array()) {
                for (const auto& h : value) {
                    if (!h.is_number_integer()) throw ValidationError("horizon");
                    cfg.horizons.push_back(h.get<int>());
                }
            } else {
                throw ValidationError("horizon");
            }
            if (cfg.horizons.empty()) throw ValidationError("horizon");
            for (int h : cfg.horizons) {
                if (h < 1) throw ValidationError("horizon");
            }
        } else if (key == "lambda") {
            cfg.lambdas.clear();
            if (value.is_number()) {
                cfg.lambdas.push_back(value.get<double>());
            } else if (value.is_array()) {
                for (const auto& lv : value) {
                    if (!lv.is_number()) throw ValidationError("lambda");
                    cfg.lambdas.push_back(lv.get<double>());
                }
            } else {
                throw ValidationError("lambda");
            }
            if (cfg.lambdas.empty()) throw ValidationError("lambda");
            for (double lv : cfg.lambdas) {
                if (!(lv >= 0.0)) throw ValidationError("lambda");
            }
        } else if (key == "rho") {
            if (!value.is_number() || !(value.get<double>() > 0.0)) throw ValidationError("rho");
            cfg.rho = value.get<double>();
        } else if (key == "alpha") {
            if (!value.is_number()) throw ValidationError("alpha");
            cfg.alpha = value.get<double>();
            if (!(cfg.alpha >= 1.0 && cfg.alpha < 2.0)) throw ValidationError("alpha");
        } else if (key == "eps_abs") {
            if (!value.is_number() || !(value.get<double>() > 0.0)) throw ValidationError("eps_abs");
            cfg.eps_abs = value.get<double>();
        } else if (key == "eps_rel") {
            if (!value.is_number() || !(value.get<double>() > 0.0)) throw ValidationError("eps_rel");
            cfg.eps_rel = value.get<double>();
        } else if (key == "max_iter") {
            if (!value.is_number_integer() || value.get<int>() < 0) throw ValidationError("max_iter");
            cfg.max_iter = value.get<int>();
        } else if (key == "plant") {
            if (!value.is_string()) throw ValidationError("plant");
            cfg.plant = value.get<std::string>();
            if (cfg.plant != "linear" && cfg.plant != "nonlinear") throw ValidationError("plant");
            have_plant = true;
        } else if (key == "steps") {
            if (!value.is_number_integer() || value.get<int>() < 0) throw ValidationError("steps");
            cfg.steps = value.get<int>();
        } else if (key == "sample_time") {
            if (!value.is_number() || !(value.get<double>() > 0.0)) {
                throw ValidationError("sample_time");
            }
            cfg.sample_time = value.get<double>();
        } else if (key == "seed") {
            if (!value.is_number_unsigned() && !value.is_number_integer()) {
                throw ValidationError("seed");
            }
            cfg.seed = value.get<std::uint64_t>();
        } else if (key == "output") {
            if (!value.is_string()) throw ValidationError("output");
            cfg.output = value.get<std::string>();
        } else {
            throw ValidationError(key);
        }
    }
    if (!have_mode) throw ValidationError("mode");
    if (cfg.mode != "solve" && cfg.mode != "mpc" && cfg.mode != "bench" && cfg.mode != "tank") {
        throw ValidationError("mode");
    }
    if (cfg.mode == "tank" && cfg.model != "quadruple_tank") throw ValidationError("model");
    if (cfg.model == "inline" && !cfg.inline_model.has_value()) throw ValidationError("model");
    if (cfg.model == "inline") {
        // the nonlinear plant exists only for the tank
        if (have_plant && cfg.plant == "nonlinear") throw ValidationError("plant");
        cfg.plant = "linear";
    }
    if ((cfg.mode == "solve" || cfg.mode == "mpc" || cfg.mode == "tank") &&
        cfg.horizons.size() != 1) {
        throw ValidationError("horizon");
    }
    if (cfg.mode == "solve" && cfg.lambdas.size() != 1) throw ValidationError("lambda");
    return cfg;
}

int cmd_solve(const ScenarioConfig& cfg) {
    const ProblemInstance inst = solve_instance(cfg, cfg.lambdas.front());
    const SolveReport report = solve(inst);

    auto out = open_output(cfg, "iterations.csv");
    out << "iter,e_p,e_d,cost\n";
    for (int k = 0; k < report.iterations; ++k) {
        const auto i = static_cast<std::size_t>(k);
        out << (k + 1) << ',' << format_value(report.primal_residuals[i]) << ','
            << format_value(report.dual_residuals[i]) << ','
            << format_value(report.cost_history[i]) << '\n';
    }
    std::cout << (report.status == SolveStatus::kConverged ? "Converged" : "MaxIter") << ','
              << report.iterations << ',' << format_value(report.final_cost) << '\n';
    return 0;
}

int cmd_mpc(const ScenarioConfig& cfg) {
    const std::vector<double> lambdas = cfg.lambdas;
    std::vector<std::string> errors(lambdas.size());
    parallel_for_jobs(lambdas.size(), [&](std::size_t i) {
        try {
            const MpcProblem prob = mpc_problem(cfg, lambdas[i]);
            const PlantKind plant = (cfg.plant == "nonlinear" && prob.tank.has_value())
                                        ? PlantKind::kNonlinearTank
                                        : PlantKind::kLinear;
            Vec x_init;
            Vec u_init;
            if (cfg.model == "quadruple_tank") {
                x_init.resize(4);
                x_init << 16.0, 16.0, 4.0, 13.0;
                u_init = prob.u_eq;
            } else {
                x_init = cfg.inline_model->x0;
                u_init = Vec::Zero(prob.Bd.cols());
            }
            const Trajectory traj = run_mpc(prob, plant, x_init, u_init);

            auto out = open_output(cfg, "trajectory_lambda_" + lambda_tag(lambdas[i]) + ".csv");
            const Index n = prob.Ad.rows();
            const Index l = prob.Bd.cols();
            const Index m = prob.Cmeas.rows();
            out << 't';
            for (Index k = 0; k < n; ++k) out << ",x" << (k + 1);
            for (Index k = 0; k < l; ++k) out << ",u" << (k + 1);
            for (Index k = 0; k < m; ++k) out << ",y" << (k + 1);
            for (Index k = 0; k < l; ++k) out << ",du" << (k + 1);
            out << ",admm_iters,solve_ms\n";
            for (const StepRecord& r : traj.steps) {
                out << format_value(r.t);
                for (Index k = 0; k < n; ++k) out << ',' << format_value(r.x_plant(k));
                for (Index k = 0; k < l; ++k) out << ',' << format_value(r.u_applied(k));
                for (Index k = 0; k < m; ++k) out << ',' << format_value(r.y_meas(k));
                for (Index k = 0; k < l; ++k) out << ',' << format_value(r.du(k));
                out << ',' << r.admm_iterations << ',' << format_value(r.solve_ms) << '\n';
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& err : errors) {
        if (!err.empty()) {
            std::cerr << "error: " << err << '\n';
            return 1;
        }
    }
    return 0;
}

int cmd_bench(const ScenarioConfig& cfg) {
    auto out = open_output(cfg, "bench.csv");
    out << "H,mean_iter_us,factorize_us\n";
    // Sequential on purpose: concurrent points would contaminate timings.
    for (int H : cfg.horizons) {
        ScenarioConfig point = cfg;
        point.horizons = {H};
        AdmmSolver solver(solve_instance(point, cfg.lambdas.front()));
        const SolveReport report = solver.solve_fixed(cfg.max_iter);
        const double mean_us = report.timing.loop_s * 1e6 / std::max(report.iterations, 1);
        out << H << ',' << format_value(mean_us) << ','
            << format_value(report.timing.factorize_s * 1e6) << '\n';
    }
    return 0;
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (args.empty() || args[0] == "-h" || args[0] == "--help") {
        std::cout << "usage: l1mpc solve|mpc|bench|tank [--config <path>] [--out <dir>]\n"
                     "             [--lambda <v>] [--horizon <H>] [--max-iter <k>]\n";
        return args.empty() ? 2 : 0;
    }
    const std::string mode = args[0];
    if (mode != "solve" && mode != "mpc" && mode != "bench" && mode != "tank") {
        std::cerr << "error: unknown mode '" << mode << "'\n";
        return 2;
    }

    std::string config_path;
    std::string out_dir;
    std::string lambda_override;
    std::string horizon_override;
    std::string max_iter_override;
    for (std::size_t i = 1; i < args.size(); ++i) {
        auto next = [&](const char* opt) -> std::string {
            if (i + 1 >= args.size()) throw ConfigError(std::string(opt) + " needs a value");
            return args[++i];
        };
        try {
            if (args[i] == "--config") config_path = next("--config");
            else if (args[i] == "--out") out_dir = next("--out");
            else if (args[i] == "--lambda") lambda_override = next("--lambda");
            else if (args[i] == "--horizon") horizon_override = next("--horizon");
            else if (args[i] == "--max-iter") max_iter_override = next("--max-iter");
            else {
                std::cerr << "error: unknown option '" << args[i] << "'\n";
                return 2;
            }
        } catch (const ConfigError& e) {
            std::cerr << "error: " << e.what() << '\n';
            return 2;
        }
    }

    try {
        std::string text = "{\"mode\":\"tank\"}";
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) {
                std::cerr << "error: cannot read config " << config_path << '\n';
                return 2;
            }
            std::ostringstream ss;
            ss << in.rdbuf();
            text = ss.str();
        } else if (mode != "tank") {
            std::cerr << "error: --config is required for mode '" << mode << "'\n";
            return 2;
        }

        ScenarioConfig cfg = parse_config(text);
        if (cfg.mode != mode) throw ValidationError("mode");
        if (!out_dir.empty()) cfg.output = out_dir;
        if (!lambda_override.empty()) cfg.lambdas = {std::stod(lambda_override)};
        if (!horizon_override.empty()) cfg.horizons = {std::stoi(horizon_override)};
        if (!max_iter_override.empty()) cfg.max_iter = std::stoi(max_iter_override);

        if (cfg.mode == "solve") return cmd_solve(cfg);
        if (cfg.mode == "bench") return cmd_bench(cfg);
        return cmd_mpc(cfg);  // mpc and tank
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace l1mpc::cli
