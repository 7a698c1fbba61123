#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "posi/constants.hpp"
#include "posi/design_io.hpp"
#include "posi/inference.hpp"
#include "posi/simharness.hpp"

namespace posi {

using Json = nlohmann::ordered_json;

inline Json model_json(const ModelId& M) {
    Json a = Json::array();
    for (int j : M.indices()) a.push_back(j + 1);
    return a;
}

inline Json vector_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

inline Json to_json(const ConstantEstimate& e) {
    Json j;
    j["kind"] = to_string(e.kind);
    j["value"] = e.value;
    if (e.value_upper) j["value_upper"] = *e.value_upper;
    if (e.mc_stderr) j["stderr"] = *e.mc_stderr;
    if (e.model) j["model"] = model_json(*e.model);
    if (e.config) {
        j["I"] = e.config->I;
        j["J"] = e.config->J;
        j["seed"] = e.config->seed;
        j["variant"] = to_string(e.config->variant);
    }
    j["flags"] = e.flags;
    return j;
}

inline Json to_json(const PredictionInterval& iv) {
    Json j;
    j["center"] = iv.center;
    j["half_width"] = iv.half_width;
    j["lower"] = iv.lower();
    j["upper"] = iv.upper();
    j["model"] = model_json(iv.model);
    j["constant_kind"] = to_string(iv.constant_kind);
    return j;
}

inline Json to_json(const CoverageCell& c) {
    Json j;
    j["constant"] = to_string(c.kind);
    j["target"] = to_string(c.target);
    j["min_coverage"] = c.min_coverage;
    j["stderr"] = c.stderr_value;
    j["argmin_candidate"] = c.argmin_candidate;
    j["argmin_beta"] = vector_json(c.argmin_beta);
    j["bound"] = "stochastic upper bound of the minimal coverage";
    return j;
}

inline Json to_json(const LengthRow& r) {
    Json j;
    j["constant"] = to_string(r.kind);
    j["model"] = model_json(r.model);
    j["K"] = r.constant;
    j["s_norm"] = r.s_norm;
    j["length"] = r.length;
    return j;
}

inline Json to_json(const SimulationReport& rep) {
    Json j;
    j["partial"] = rep.partial;
    Json cov = Json::array();
    for (const auto& c : rep.coverage) cov.push_back(to_json(c));
    j["coverage"] = cov;
    Json len = Json::array();
    for (const auto& r : rep.lengths) len.push_back(to_json(r));
    j["lengths"] = len;
    return j;
}

inline std::string model_field(const ModelId& M) {
    std::string s;
    for (int j : M.indices()) {
        if (!s.empty()) s += ' ';
        s += std::to_string(j + 1);
    }
    return s;
}

inline void write_coverage_csv(const std::string& path, const std::string& selector, const SimulationReport& rep) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "selector,constant,target,min_coverage,stderr,argmin_candidate\n";
    for (const auto& c : rep.coverage) {
        out << selector << ',' << to_string(c.kind) << ',' << to_string(c.target) << ','
            << io::format_double(c.min_coverage) << ',' << io::format_double(c.stderr_value) << ','
            << c.argmin_candidate << '\n';
    }
}

inline void write_lengths_csv(const std::string& path, const std::vector<LengthRow>& rows) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "constant,model,K,s_norm,length\n";
    for (const auto& r : rows) {
        out << to_string(r.kind) << ',' << model_field(r.model) << ',' << io::format_double(r.constant) << ','
            << io::format_double(r.s_norm) << ',' << io::format_double(r.length) << '\n';
    }
}

inline void write_json(const std::string& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << j.dump(2) << '\n';
}

}  // namespace posi
