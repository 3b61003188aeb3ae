// Experiment configs and the runner that turns them into CSV data series
// plus a JSON metadata record.
#pragma once

#include "secest/errors.hpp"
#include "secest/estimators.hpp"
#include "secest/geometry.hpp"
#include "secest/harness.hpp"
#include "secest/inconsistency.hpp"
#include "secest/io.hpp"
#include "secest/model.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace secest {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind { RegionFigure, RadiusCurve, ResilienceSweep, Comparison };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::RegionFigure: return "region-figure";
        case ExperimentKind::RadiusCurve: return "radius-curve";
        case ExperimentKind::ResilienceSweep: return "resilience-sweep";
        case ExperimentKind::Comparison: return "comparison";
    }
    return "";
}

inline ExperimentKind parse_experiment_kind(const std::string& s) {
    if (s == "region-figure") return ExperimentKind::RegionFigure;
    if (s == "radius-curve") return ExperimentKind::RadiusCurve;
    if (s == "resilience-sweep") return ExperimentKind::ResilienceSweep;
    if (s == "comparison") return ExperimentKind::Comparison;
    throw ValidationError("kind: unknown experiment '" + s +
                          "' (region-figure, radius-curve, resilience-sweep, comparison)");
}

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::RegionFigure;
    json model_json;             ///< inline {"H","W","q"}
    std::string model_source;    ///< file the model came from, or "inline"
    std::string output = ".";
    std::uint64_t seed = 0;
    int workers = 0;
    double tol = 1e-10;          ///< Chebyshev gap tolerance
    std::vector<EstimatorSpec> estimators;

    Eigen::VectorXd y;           ///< region-figure, radius-curve
    std::vector<double> phis;    ///< region-figure levels or radius-curve grid
    int boundary_points = 256;

    Eigen::VectorXd z;           ///< resilience-sweep clean measurement
    int compromised = -1;        ///< -1: last sensor
    std::vector<double> bias_grid;

    std::vector<int> horizons;   ///< comparison
    std::vector<double> deltas;
    AttackKind attack = AttackKind::Pinned;
    std::vector<double> attack_grid;
    long long trials = 100000;
    long long batch = 4096;

    json source;                 ///< config as given, echoed into the metadata
};

inline EstimatorSpec estimator_spec_from_json(const json& j, const std::string& where) {
    EstimatorSpec s;
    const auto& m = detail::field(j, "method", where);
    if (!m.is_string()) throw ValidationError(where + ".method: expected a string");
    try {
        s.method = parse_method(m.get<std::string>());
    } catch (const ValidationError& e) {
        throw ValidationError(where + ".method: " + e.what());
    }
    if (j.contains("delta")) s.delta = detail::number(j["delta"], where + ".delta");
    if (j.contains("eps")) s.eps = detail::number(j["eps"], where + ".eps");
    if (j.contains("lambda")) s.lambda = detail::number(j["lambda"], where + ".lambda");
    if (!(s.delta > 0.0)) throw ValidationError(where + ".delta: must be positive");
    if (!(s.eps > 0.0)) throw ValidationError(where + ".eps: must be positive");
    if (!(s.lambda > 0.0)) throw ValidationError(where + ".lambda: must be positive");
    return s;
}

/// Parses and validates a config object. A string "model" is a path resolved
/// against `base_dir`; "output" is taken relative to the working directory.
inline ExperimentConfig experiment_config_from_json(const json& j, const std::string& base_dir = ".") {
    ExperimentConfig c;
    c.source = j;
    const auto& kind = detail::field(j, "kind", "config");
    if (!kind.is_string()) throw ValidationError("kind: expected a string");
    c.kind = parse_experiment_kind(kind.get<std::string>());

    const auto& model = detail::field(j, "model", "config");
    if (model.is_string()) {
        std::filesystem::path p = model.get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        c.model_source = p.string();
        c.model_json = read_json_file(c.model_source);
    } else {
        c.model_source = "inline";
        c.model_json = model;
    }
    if (j.contains("output")) {
        if (!j["output"].is_string()) throw ValidationError("output: expected a directory path");
        c.output = j["output"].get<std::string>();
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_integer() || j["seed"].get<long long>() < 0)
            throw ValidationError("seed: expected a nonnegative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("workers")) {
        const auto w = detail::integer(j["workers"], "workers");
        if (w < 0) throw ValidationError("workers: must be nonnegative");
        c.workers = static_cast<int>(w);
    }
    if (j.contains("tol")) {
        c.tol = detail::number(j["tol"], "tol");
        if (!(c.tol > 0.0)) throw ValidationError("tol: must be positive");
    }
    if (j.contains("estimators")) {
        const auto& es = j["estimators"];
        if (!es.is_array()) throw ValidationError("estimators: expected an array");
        for (std::size_t i = 0; i < es.size(); ++i)
            c.estimators.push_back(estimator_spec_from_json(es[i], "estimators[" + std::to_string(i) + "]"));
    }

    switch (c.kind) {
        case ExperimentKind::RegionFigure:
            c.y = vector_from_json(detail::field(j, "y", "config"), "y");
            c.phis = grid_from_json(detail::field(j, "phis", "config"), "phis");
            if (j.contains("boundary_points")) {
                c.boundary_points = static_cast<int>(detail::integer(j["boundary_points"], "boundary_points"));
                if (c.boundary_points < 3) throw ValidationError("boundary_points: must be at least 3");
            }
            break;
        case ExperimentKind::RadiusCurve:
            c.y = vector_from_json(detail::field(j, "y", "config"), "y");
            c.phis = grid_from_json(detail::field(j, "phi_grid", "config"), "phi_grid");
            break;
        case ExperimentKind::ResilienceSweep:
            c.z = vector_from_json(detail::field(j, "z", "config"), "z");
            c.compromised = static_cast<int>(detail::integer(detail::field(j, "compromised", "config"), "compromised"));
            c.bias_grid = grid_from_json(detail::field(j, "bias_grid", "config"), "bias_grid");
            if (c.estimators.empty()) throw ValidationError("estimators: resilience sweep needs at least one estimator");
            break;
        case ExperimentKind::Comparison: {
            const auto& hs = detail::field(j, "horizons", "config");
            if (!hs.is_array() || hs.empty()) throw ValidationError("horizons: expected a nonempty array");
            for (std::size_t i = 0; i < hs.size(); ++i) {
                const auto k = detail::integer(hs[i], "horizons[" + std::to_string(i) + "]");
                if (k < 1) throw ValidationError("horizons[" + std::to_string(i) + "]: must be at least 1");
                c.horizons.push_back(static_cast<int>(k));
            }
            c.deltas = grid_from_json(detail::field(j, "deltas", "config"), "deltas");
            for (double d : c.deltas)
                if (!(d > 0.0)) throw ValidationError("deltas: every delta must be positive");
            const auto& at = detail::field(j, "attack", "config");
            if (at.contains("kind")) {
                if (!at["kind"].is_string()) throw ValidationError("attack.kind: expected a string");
                try {
                    c.attack = parse_attack_kind(at["kind"].get<std::string>());
                } catch (const ValidationError& e) {
                    throw ValidationError(std::string("attack.kind: ") + e.what());
                }
            }
            c.attack_grid = grid_from_json(detail::field(at, "grid", "attack"), "attack.grid");
            if (j.contains("compromised"))
                c.compromised = static_cast<int>(detail::integer(j["compromised"], "compromised"));
            if (j.contains("trials")) c.trials = detail::integer(j["trials"], "trials");
            if (c.trials < 1) throw ValidationError("trials: must be at least 1");
            if (j.contains("batch")) c.batch = detail::integer(j["batch"], "batch");
            if (c.batch < 1) throw ValidationError("batch: must be at least 1");
            if (c.estimators.empty()) throw ValidationError("estimators: comparison needs at least one estimator");
            break;
        }
    }
    return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    const auto dir = std::filesystem::path(path).parent_path().string();
    try {
        return experiment_config_from_json(read_json_file(path), dir.empty() ? "." : dir);
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        if (msg.rfind(path, 0) == 0) throw;
        throw ValidationError(path + ": " + msg);
    }
}

struct ExperimentArtifacts {
    std::vector<std::string> files;
    json metadata;
};

namespace detail {

inline std::string subset_cell(const Subset& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(s[i]);
    }
    return out;
}

inline std::vector<std::string> coord_header(const std::string& prefix, int n) {
    std::vector<std::string> h;
    for (int a = 1; a <= n; ++a) h.push_back(prefix + std::to_string(a));
    return h;
}

inline json run_region_figure(const SensorModel& model, const ExperimentConfig& c, const std::string& stem,
                              std::vector<std::string>& files) {
    if (c.y.size() != model.m()) throw ValidationError("y: must have m entries");
    const SubsetTable table(model);
    const int n = model.n();
    std::vector<std::string> h{"phi", "piece", "subset"};
    for (auto& s : coord_header("center_", n)) h.push_back(s);
    h.push_back("level");
    h.push_back("own_radius");
    std::string pieces = csv_row(h);
    h = {"phi"};
    for (auto& s : coord_header("center_", n)) h.push_back(s);
    h.push_back("radius");
    h.push_back("lower_bound");
    std::string cheb = csv_row(h);
    std::string boundary = csv_row({"phi", "piece", "vertex", "x_1", "x_2"});

    json panels = json::array();
    for (double phi : c.phis) {
        const auto r = build_region(table, c.y, phi);
        json panel{{"phi", phi}, {"pieces", r.pieces.size()}};
        for (std::size_t p = 0; p < r.pieces.size(); ++p) {
            const auto& e = r.pieces[p];
            std::vector<std::string> row{format_double(phi), std::to_string(p), subset_cell(e.subset)};
            for (int a = 0; a < n; ++a) row.push_back(format_double(e.center(a)));
            row.push_back(format_double(e.level));
            row.push_back(format_double(FarthestPointOracle(e).own_radius()));
            pieces += csv_row(row);
            const auto poly = boundary_polyline(e, c.boundary_points);
            for (std::size_t v = 0; v < poly.size(); ++v)
                boundary += csv_row({format_double(phi), std::to_string(p), std::to_string(v),
                                     format_double(poly[v](0)), format_double(poly[v](1))});
        }
        if (!r.empty()) {
            const auto ch = chebyshev(r, c.tol);
            std::vector<std::string> row{format_double(phi)};
            for (int a = 0; a < n; ++a) row.push_back(format_double(ch.center(a)));
            row.push_back(format_double(ch.radius));
            row.push_back(format_double(ch.lower_bound));
            cheb += csv_row(row);
            panel["radius"] = ch.radius;
            panel["center"] = to_json(ch.center);
        }
        panels.push_back(panel);
    }
    const auto dir = std::filesystem::path(c.output);
    files.push_back((dir / (stem + ".csv")).string());
    write_text_file(files.back(), pieces);
    files.push_back((dir / (stem + "-chebyshev.csv")).string());
    write_text_file(files.back(), cheb);
    if (n == 2) {
        files.push_back((dir / (stem + "-boundary.csv")).string());
        write_text_file(files.back(), boundary);
    }
    return json{{"panels", panels}};
}

inline json run_radius_curve(const SensorModel& model, const ExperimentConfig& c, const std::string& stem,
                             std::vector<std::string>& files) {
    if (c.y.size() != model.m()) throw ValidationError("y: must have m entries");
    const SubsetTable table(model);
    const auto samples = radius_curve(table, c.y, c.phis, c.tol);
    std::string csv = csv_row({"phi", "radius", "pieces"});
    for (const auto& s : samples)
        csv += csv_row({format_double(s.phi), s.radius ? format_double(*s.radius) : "", std::to_string(s.pieces)});
    files.push_back((std::filesystem::path(c.output) / (stem + ".csv")).string());
    write_text_file(files.back(), csv);

    Eigen::MatrixXd centers;
    Eigen::VectorXd residues;
    table.evaluate(c.y, centers, residues);
    std::vector<double> res(residues.data(), residues.data() + residues.size());
    std::sort(res.begin(), res.end());
    // Sampled increments above 0.05 are either true jumps (kept after
    // bisection, located on a residue) or steep growth right after one.
    json jumps = json::array(), steep = json::array();
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (!samples[i].radius || !samples[i - 1].radius) continue;
        const double inc = *samples[i].radius - *samples[i - 1].radius;
        if (inc <= 0.05) continue;
        json jj{{"phi_before", samples[i - 1].phi}, {"phi_after", samples[i].phi}, {"increment", inc}};
        const auto ref = refine_radius_jump(table, c.y, samples[i - 1].phi, samples[i].phi, 40, c.tol);
        if (ref.size <= 0.05) {
            steep.push_back(jj);
            continue;
        }
        jj["jump"] = ref.size;
        jj["at"] = ref.hi;
        for (double r : res)
            if (r > samples[i - 1].phi && r <= samples[i].phi) jj["residue"] = r;
        jumps.push_back(jj);
    }
    return json{{"sorted_residues", res}, {"jumps", jumps}, {"steep_steps", steep}};
}

inline json run_resilience_sweep(const SensorModel& model, const ExperimentConfig& c, const std::string& stem,
                                 std::vector<std::string>& files) {
    const int j = c.compromised < 0 ? model.m() - 1 : c.compromised;
    const auto sweep = resilience_sweep(model, c.estimators, c.z, j, c.bias_grid);
    std::vector<std::string> h{"a"};
    for (const auto& l : sweep.labels) h.push_back(l);
    std::string csv = csv_row(h);
    for (const auto& row : sweep.rows) {
        std::vector<std::string> cells{format_double(row.a)};
        for (double e : row.errors) cells.push_back(format_double(e));
        csv += csv_row(cells);
    }
    files.push_back((std::filesystem::path(c.output) / (stem + ".csv")).string());
    write_text_file(files.back(), csv);
    json onsets = json::object();
    for (std::size_t col = 0; col < sweep.labels.size(); ++col) {
        const auto on = zero_error_onset(sweep, col);
        onsets[sweep.labels[col]] = on ? json(*on) : json(nullptr);
    }
    return json{{"target", to_json(sweep.target)}, {"zero_error_onset", onsets}};
}

inline json run_comparison(const SensorModel& model, const ExperimentConfig& c, const std::string& stem,
                           std::vector<std::string>& files, int workers) {
    std::string csv = csv_row({"delta", "k", "estimator", "e_hat", "std_err", "worst_attack", "trials", "failures"});
    std::string grid = csv_row({"delta", "k", "estimator", "attack", "e_hat", "failures"});
    json cells = json::array();
    long long total_failures = 0;
    for (double delta : c.deltas) {
        for (int k : c.horizons) {
            for (const auto& spec0 : c.estimators) {
                EstimatorSpec spec = spec0;
                spec.delta = delta;
                WorstCaseSetup setup;
                setup.k = k;
                setup.delta = delta;
                setup.attack = c.attack;
                setup.grid = c.attack_grid;
                setup.trials = c.trials;
                setup.seed = c.seed;
                setup.compromised = c.compromised;
                setup.workers = workers;
                setup.batch = c.batch;
                const auto res = worst_case_probability(model, Estimator(model, spec, k), setup);
                const auto label = to_string(spec.method);
                csv += csv_row({format_double(delta), std::to_string(k), label, format_double(res.e_hat),
                                format_double(res.std_err), format_double(res.worst_attack),
                                std::to_string(res.trials), std::to_string(res.failures)});
                for (std::size_t g = 0; g < res.per_grid.size(); ++g)
                    grid += csv_row({format_double(delta), std::to_string(k), label, format_double(c.attack_grid[g]),
                                     format_double(res.per_grid[g]), std::to_string(res.failures_per_grid[g])});
                total_failures += res.failures;
                cells.push_back({{"delta", delta}, {"k", k}, {"estimator", label}, {"e_hat", res.e_hat},
                                 {"std_err", res.std_err}, {"worst_attack", res.worst_attack},
                                 {"failures", res.failures}});
            }
        }
    }
    const auto dir = std::filesystem::path(c.output);
    files.push_back((dir / (stem + ".csv")).string());
    write_text_file(files.back(), csv);
    files.push_back((dir / (stem + "-grid.csv")).string());
    write_text_file(files.back(), grid);
    return json{{"cells", cells}, {"estimator_failures", total_failures}};
}

}  // namespace detail

/// Runs the experiment and writes <output>/<kind>*.csv plus <output>/<kind>.json.
/// Worker count: `workers` > 0, else SECEST_WORKERS, else the config's
/// "workers", else the hardware thread count.
inline ExperimentArtifacts run_experiment(const ExperimentConfig& c, int workers = 0) {
    const auto start = std::chrono::steady_clock::now();
    const SensorModel model = model_from_json(c.model_json, c.model_source);
    const int used_workers =
        resolve_workers(workers > 0 ? workers : (std::getenv(kWorkersEnv) ? 0 : c.workers));
    std::error_code ec;
    std::filesystem::create_directories(c.output, ec);
    if (ec) throw ValidationError("output: cannot create directory " + c.output + ": " + ec.message());

    const auto stem = to_string(c.kind);
    ExperimentArtifacts out;
    json summary;
    switch (c.kind) {
        case ExperimentKind::RegionFigure: summary = detail::run_region_figure(model, c, stem, out.files); break;
        case ExperimentKind::RadiusCurve: summary = detail::run_radius_curve(model, c, stem, out.files); break;
        case ExperimentKind::ResilienceSweep:
            summary = detail::run_resilience_sweep(model, c, stem, out.files);
            break;
        case ExperimentKind::Comparison:
            summary = detail::run_comparison(model, c, stem, out.files, used_workers);
            break;
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.metadata = json{{"kind", stem},
                        {"config", c.source},
                        {"model_source", c.model_source},
                        {"versions",
                         {{"secest", kVersion},
                          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) +
                                        "." + std::to_string(EIGEN_MINOR_VERSION)},
                          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
                        {"seed", c.seed},
                        {"workers", used_workers},
                        {"wall_time_s", wall},
                        {"files", out.files},
                        {"summary", summary}};
    const auto meta = (std::filesystem::path(c.output) / (stem + ".json")).string();
    write_text_file(meta, out.metadata.dump(2) + "\n");
    out.files.push_back(meta);
    return out;
}

}  // namespace secest
