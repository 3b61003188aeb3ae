// JSON model / scenario parsing, list and range arguments, CSV formatting.
#pragma once

#include "secest/errors.hpp"
#include "secest/model.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace secest {

using json = nlohmann::json;

/// Shortest round-trip decimal form; independent of the C locale.
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string csv_row(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ',';
        out += cells[i];
    }
    return out + '\n';
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError(path + ": " + e.what());
    }
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path);
    out << text;
    if (!out) throw ValidationError("write failed for " + path);
}

namespace detail {

inline const json& field(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object()) throw ValidationError(where + ": expected a JSON object");
    auto it = j.find(key);
    if (it == j.end()) throw ValidationError(where + ": missing field '" + key + "'");
    return *it;
}

inline double number(const json& j, const std::string& where) {
    if (!j.is_number()) throw ValidationError(where + ": expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ValidationError(where + ": must be finite");
    return v;
}

inline long long integer(const json& j, const std::string& where) {
    if (!j.is_number_integer()) throw ValidationError(where + ": expected an integer");
    return j.get<long long>();
}

}  // namespace detail

inline Eigen::VectorXd vector_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw ValidationError(where + ": expected an array of numbers");
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) v(i) = detail::number(j[i], where + "[" + std::to_string(i) + "]");
    return v;
}

inline Eigen::MatrixXd matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ValidationError(where + ": expected a nonempty array of rows");
    const std::size_t rows = j.size();
    if (!j[0].is_array()) throw ValidationError(where + "[0]: expected an array");
    const std::size_t cols = j[0].size();
    Eigen::MatrixXd M(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const auto w = where + "[" + std::to_string(r) + "]";
        if (!j[r].is_array() || j[r].size() != cols)
            throw ValidationError(w + ": every row needs " + std::to_string(cols) + " entries");
        for (std::size_t c = 0; c < cols; ++c) M(r, c) = detail::number(j[r][c], w + "[" + std::to_string(c) + "]");
    }
    return M;
}

inline json to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline json to_json(const Eigen::MatrixXd& M) {
    json a = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) a.push_back(to_json(Eigen::VectorXd(M.row(r).transpose())));
    return a;
}

inline json to_json(const Subset& s) { return json(s); }

/// {"H": [[...]], "W": [...], "q": int}
inline SensorModel model_from_json(const json& j, const std::string& where = "model") {
    Eigen::MatrixXd H = matrix_from_json(detail::field(j, "H", where), where + ".H");
    Eigen::VectorXd W = vector_from_json(detail::field(j, "W", where), where + ".W");
    const long long q = detail::integer(detail::field(j, "q", where), where + ".q");
    return SensorModel(std::move(H), std::move(W), static_cast<int>(q));
}

inline json model_to_json(const SensorModel& model) {
    return json{{"H", to_json(model.H())}, {"W", to_json(model.W())}, {"q", model.q()}};
}

inline SensorModel load_model(const std::string& path) { return model_from_json(read_json_file(path), path); }

inline Subset subset_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw ValidationError(where + ": expected an array of sensor indices");
    Subset s;
    for (std::size_t i = 0; i < j.size(); ++i)
        s.push_back(static_cast<int>(detail::integer(j[i], where + "[" + std::to_string(i) + "]")));
    return s;
}

/// {"x_true": [...], "compromised": [...], "k": int, "seed": int,
///  "bias_policy": {"kind": "constant" | "sequence" | "pinned", ...}}
inline AttackScenario scenario_from_json(const json& j, const std::string& where = "scenario") {
    AttackScenario sc;
    sc.x_true = vector_from_json(detail::field(j, "x_true", where), where + ".x_true");
    if (j.contains("compromised")) sc.compromised = subset_from_json(j["compromised"], where + ".compromised");
    if (j.contains("k")) sc.k = static_cast<int>(detail::integer(j["k"], where + ".k"));
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
            throw ValidationError(where + ".seed: expected a nonnegative integer");
        sc.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("bias_policy")) {
        const auto& bp = j["bias_policy"];
        const auto w = where + ".bias_policy";
        const auto& kind = detail::field(bp, "kind", w);
        if (!kind.is_string()) throw ValidationError(w + ".kind: expected a string");
        const auto k = kind.get<std::string>();
        if (k == "constant") {
            sc.bias_policy = ConstantBias{vector_from_json(detail::field(bp, "bias", w), w + ".bias")};
        } else if (k == "sequence") {
            sc.bias_policy = BiasSequence{matrix_from_json(detail::field(bp, "bias", w), w + ".bias")};
        } else if (k == "pinned") {
            sc.bias_policy = PinnedAverage{vector_from_json(detail::field(bp, "values", w), w + ".values")};
        } else {
            throw ValidationError(w + ".kind: unknown bias policy '" + k + "' (constant, sequence, pinned)");
        }
    }
    return sc;
}

/// "1,2.5,-3" -> vector
inline Eigen::VectorXd parse_vector(const std::string& text) {
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        double v = 0.0;
        const char* b = tok.data();
        while (*b == ' ') ++b;
        const char* e = tok.data() + tok.size();
        auto res = std::from_chars(b, e, v);
        if (res.ec != std::errc() || res.ptr != e || !std::isfinite(v))
            throw ValidationError("cannot parse number '" + tok + "'");
        vals.push_back(v);
    }
    if (vals.empty()) throw ValidationError("empty number list");
    return Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
}

/// start, start + step, ... up to stop (inclusive within 1e-9 steps).
inline std::vector<double> range_values(double start, double stop, double step) {
    if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step))
        throw ValidationError("range bounds must be finite");
    if (!(step > 0.0)) throw ValidationError("range step must be positive");
    if (stop < start) throw ValidationError("range stop must not be below start");
    const auto count = static_cast<long long>(std::floor((stop - start) / step + 1e-9)) + 1;
    if (count > 10'000'000) throw ValidationError("range has too many points");
    std::vector<double> out;
    out.reserve(count);
    for (long long i = 0; i < count; ++i) out.push_back(start + double(i) * step);
    return out;
}

/// "a:b:step"
inline std::vector<double> parse_range(const std::string& text) {
    const auto v = parse_vector([&] {
        std::string t = text;
        for (auto& c : t)
            if (c == ':') c = ',';
        return t;
    }());
    if (v.size() != 3) throw ValidationError("range must look like start:stop:step");
    return range_values(v(0), v(1), v(2));
}

/// {"start": a, "stop": b, "step": s} or an explicit array.
inline std::vector<double> grid_from_json(const json& j, const std::string& where) {
    if (j.is_array()) {
        if (j.empty()) throw ValidationError(where + ": grid must be nonempty");
        std::vector<double> out;
        for (std::size_t i = 0; i < j.size(); ++i) out.push_back(detail::number(j[i], where + "[" + std::to_string(i) + "]"));
        return out;
    }
    try {
        return range_values(detail::number(detail::field(j, "start", where), where + ".start"),
                            detail::number(detail::field(j, "stop", where), where + ".stop"),
                            detail::number(detail::field(j, "step", where), where + ".step"));
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        if (msg.rfind(where, 0) == 0) throw;
        throw ValidationError(where + ": " + msg);
    }
}

}  // namespace secest
