// secest command line: single estimates, regions, radius curves, simulated
// measurement blocks, rate quantities and config-driven experiments.
//
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include "secest/secest.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <random>

using namespace secest;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

void emit(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        write_text_file(path, text);
    }
}

json report_json(const EstimateReport& r) {
    json j{{"method", to_string(r.method)}, {"estimate", to_json(r.estimate)}, {"iterations", r.iterations}};
    if (r.method == Method::Optimal) {
        j["phi_final"] = r.phi_final;
        j["radius_final"] = r.radius_final;
        json subs = json::array();
        for (const auto& s : r.subsets_active) subs.push_back(s);
        j["subsets_active"] = subs;
    }
    return j;
}

std::vector<RatePoint> read_rate_points(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::vector<RatePoint> pts;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1 || line.empty()) continue;
        Eigen::VectorXd v;
        try {
            v = parse_vector(line);
        } catch (const ValidationError& e) {
            throw ValidationError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (v.size() < 2 || v.size() > 3)
            throw ValidationError(path + ":" + std::to_string(lineno) + ": expected k,e[,trials]");
        RatePoint p;
        p.k = static_cast<int>(v(0));
        p.e = v(1);
        if (v.size() == 3) p.trials = static_cast<long long>(v(2));
        pts.push_back(p);
    }
    return pts;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Secure state estimation under sparse sensor attacks"};
    app.require_subcommand(0, 1);

    std::string config_path;
    int workers = 0;
    app.add_option("--config", config_path, "Run the experiment described by a JSON config")
        ->check(CLI::ExistingFile);
    app.add_option("--workers", workers, "Worker threads (overrides SECEST_WORKERS)")->check(CLI::PositiveNumber);

    std::string model_path, y_text, out_path;
    std::string method = "optimal";
    double delta = 1.0, eps = 1e-3, lambda = 1e-3, phi = 0.0;
    int k = 1;

    auto* est = app.add_subcommand("estimate", "Estimate the state from one averaged measurement");
    est->add_option("--model", model_path, "Model JSON {H, W, q}")->required();
    est->add_option("--y", y_text, "Measurement, comma separated")->required();
    est->add_option("--method", method, "optimal | trimmed | ls | lasso")->capture_default_str();
    est->add_option("--delta", delta, "Error tolerance delta")->capture_default_str();
    est->add_option("--eps", eps, "Bisection accuracy on phi")->capture_default_str();
    est->add_option("--lambda", lambda, "LASSO penalty")->capture_default_str();
    est->add_option("--k", k, "Horizon the measurement was averaged over")->capture_default_str();

    int boundary_points = 0;
    auto* reg = app.add_subcommand("region", "Pieces and Chebyshev center of X(y, phi)");
    reg->add_option("--model", model_path, "Model JSON")->required();
    reg->add_option("--y", y_text, "Measurement, comma separated")->required();
    reg->add_option("--phi", phi, "Inconsistency level")->required();
    reg->add_option("--boundary-points", boundary_points, "Write 2-D boundary polylines with this many vertices");
    reg->add_option("--boundary-csv", out_path, "Destination of the boundary polylines");

    std::string range_text;
    auto* rc = app.add_subcommand("radius-curve", "rad(X(y, phi)) over a phi grid, as CSV");
    rc->add_option("--model", model_path, "Model JSON")->required();
    rc->add_option("--y", y_text, "Measurement, comma separated")->required();
    rc->add_option("--range", range_text, "start:stop:step")->required();
    rc->add_option("--out", out_path, "CSV destination (default stdout)");

    std::string scenario_path;
    std::string sim_method;
    auto* sim = app.add_subcommand("simulate", "Synthesize a measurement block from an attack scenario");
    sim->add_option("--model", model_path, "Model JSON")->required();
    sim->add_option("--scenario", scenario_path, "Scenario JSON")->required();
    sim->add_option("--csv", out_path, "Write the block as CSV (t, y_1..y_m)");
    sim->add_option("--method", sim_method, "Also estimate from the average with this method");
    sim->add_option("--delta", delta, "Error tolerance delta")->capture_default_str();
    sim->add_option("--eps", eps, "Bisection accuracy on phi")->capture_default_str();
    sim->add_option("--lambda", lambda, "LASSO penalty")->capture_default_str();

    std::string sweep_text, empirical_path;
    int bracket_samples = -1;
    std::uint64_t seed = 0;
    auto* rates = app.add_subcommand("rates", "Rate quantities as JSON, or a u_bar(delta) sweep as CSV");
    rates->add_option("--model", model_path, "Model JSON")->required();
    rates->add_option("--y", y_text, "Measurement for u(y, delta)");
    rates->add_option("--delta", delta, "delta for u(y, delta) and the bracket")->capture_default_str();
    rates->add_option("--eps", eps, "Bisection accuracy on phi")->capture_default_str();
    rates->add_option("--sweep-delta", sweep_text, "start:stop:step; prints delta,u_bar CSV");
    rates->add_option("--bracket-samples", bracket_samples, "Random draws for the u(delta) bracket");
    rates->add_option("--seed", seed, "Seed for the bracket draws");
    rates->add_option("--empirical", empirical_path, "CSV k,e[,trials] to fit a decay rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitValidation;
    }

    try {
        if (!config_path.empty()) {
            if (app.get_subcommands().size() > 0) throw ValidationError("--config cannot be combined with a subcommand");
            const auto cfg = load_experiment_config(config_path);
            const auto art = run_experiment(cfg, workers);
            std::cout << json{{"files", art.files}, {"summary", art.metadata["summary"]}}.dump(2) << "\n";
            return 0;
        }
        if (app.get_subcommands().empty()) {
            std::cerr << app.help();
            return kExitValidation;
        }

        const SensorModel model = load_model(model_path);

        if (*est) {
            EstimatorSpec spec;
            spec.method = parse_method(method);
            spec.delta = delta;
            spec.eps = eps;
            spec.lambda = lambda;
            Estimator f(model, spec, k);
            std::cout << report_json(f.report(parse_vector(y_text))).dump(2) << "\n";
        } else if (*reg) {
            const auto y = parse_vector(y_text);
            if (y.size() != model.m()) throw ValidationError("y must have m entries");
            const auto r = build_region(model, y, phi);
            json pieces = json::array();
            for (const auto& e : r.pieces)
                pieces.push_back({{"subset", e.subset}, {"center", to_json(e.center)}, {"shape", to_json(e.shape)},
                                  {"level", e.level}});
            json j{{"phi", phi}, {"pieces", pieces}};
            if (!r.empty()) {
                const auto ch = chebyshev(r);
                j["chebyshev"] = {{"center", to_json(ch.center)}, {"radius", ch.radius},
                                  {"lower_bound", ch.lower_bound}, {"iterations", ch.iterations}};
            }
            if (boundary_points > 0) {
                if (model.n() != 2) throw ValidationError("boundary polylines need a 2-D state");
                std::string csv = csv_row({"piece", "vertex", "x_1", "x_2"});
                for (std::size_t p = 0; p < r.pieces.size(); ++p) {
                    const auto poly = boundary_polyline(r.pieces[p], boundary_points);
                    for (std::size_t v = 0; v < poly.size(); ++v)
                        csv += csv_row({std::to_string(p), std::to_string(v), format_double(poly[v](0)),
                                        format_double(poly[v](1))});
                }
                if (out_path.empty()) throw ValidationError("--boundary-points needs --boundary-csv");
                write_text_file(out_path, csv);
            }
            std::cout << j.dump(2) << "\n";
        } else if (*rc) {
            const auto y = parse_vector(y_text);
            if (y.size() != model.m()) throw ValidationError("y must have m entries");
            std::string csv = csv_row({"phi", "radius", "pieces"});
            for (const auto& s : radius_curve(model, y, parse_range(range_text)))
                csv += csv_row({format_double(s.phi), s.radius ? format_double(*s.radius) : "",
                                std::to_string(s.pieces)});
            emit(csv, out_path);
        } else if (*sim) {
            const auto sc = scenario_from_json(read_json_file(scenario_path), scenario_path);
            std::mt19937_64 rng(derive_seed(sc.seed, 0));
            const auto block = synthesize(model, sc, rng);
            if (!out_path.empty()) {
                std::vector<std::string> h{"t"};
                for (int i = 1; i <= model.m(); ++i) h.push_back("y_" + std::to_string(i));
                std::string csv = csv_row(h);
                for (int t = 0; t < block.k(); ++t) {
                    std::vector<std::string> row{std::to_string(t + 1)};
                    for (int i = 0; i < model.m(); ++i) row.push_back(format_double(block.Y(i, t)));
                    csv += csv_row(row);
                }
                write_text_file(out_path, csv);
            }
            const auto y = avg(block);
            json j{{"k", block.k()}, {"avg", to_json(y)}};
            if (!sim_method.empty()) {
                EstimatorSpec spec;
                spec.method = parse_method(sim_method);
                spec.delta = delta;
                spec.eps = eps;
                spec.lambda = lambda;
                Estimator f(model, spec, block.k());
                const auto rep = f.report(y);
                j["estimate"] = report_json(rep);
                j["error"] = (rep.estimate - sc.x_true).norm();
            }
            std::cout << j.dump(2) << "\n";
        } else if (*rates) {
            const auto ub = upper_bound_rate(model);
            if (!sweep_text.empty()) {
                std::string csv = csv_row({"delta", "u_bar"});
                for (double d : parse_range(sweep_text)) csv += csv_row({format_double(d), format_double(ub.at(d))});
                std::cout << csv;
                return 0;
            }
            json j{{"u_bar_1", ub.u_bar_1}, {"argmin_support", ub.support}, {"direction", to_json(ub.direction)},
                   {"warnings", ub.warnings}};
            if (!y_text.empty()) {
                const auto y = parse_vector(y_text);
                if (y.size() != model.m()) throw ValidationError("y must have m entries");
                j["u_y_delta"] = u_of_y_delta(model, y, delta, eps);
                j["delta"] = delta;
            }
            if (bracket_samples >= 0) {
                const auto b = rate_bracket(model, delta, eps, bracket_samples, seed);
                j["bracket"] = {{"delta", delta}, {"lower", b.lower}, {"upper", b.upper}, {"samples", b.samples}};
            }
            if (!empirical_path.empty()) {
                const auto fit = empirical_rate(read_rate_points(empirical_path));
                j["empirical_rate"] = {{"rate", fit.rate},           {"intercept", fit.intercept},
                                       {"r_squared", fit.r_squared}, {"points_used", fit.points_used},
                                       {"warnings", fit.warnings}};
            }
            std::cout << j.dump(2) << "\n";
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    }
}
