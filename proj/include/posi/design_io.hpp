#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "posi/design.hpp"

namespace posi::io {

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline double parse_double(std::string_view field, const std::string& where) {
    field = trim(field);
    double v = 0.0;
    const auto* end = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(field.data(), end, v);
    if (ec != std::errc() || ptr != end || field.empty()) {
        throw ValidationError(where + ": cannot parse number '" + std::string(field) + "'");
    }
    return v;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
}

}  // namespace detail

/// Numeric CSV; rows are observations. Blank lines are ignored.
inline Matrix read_csv_matrix(const std::string& path, bool header = false) {
    auto lines = detail::read_lines(path);
    std::vector<std::vector<double>> rows;
    bool skipped_header = !header;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        const auto line = detail::trim(lines[ln]);
        if (line.empty()) continue;
        if (!skipped_header) {
            skipped_header = true;
            continue;
        }
        std::vector<double> row;
        for (auto field : detail::split(line, ',')) {
            row.push_back(detail::parse_double(field, path + ":" + std::to_string(ln + 1)));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ValidationError(path + ":" + std::to_string(ln + 1) + ": expected " +
                                  std::to_string(rows.front().size()) + " columns");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError(path + ": no data rows");
    Matrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return X;
}

/// A vector stored as one CSV row (a single column is accepted too).
inline Vector read_csv_vector(const std::string& path, bool header = false) {
    const Matrix m = read_csv_matrix(path, header);
    if (m.rows() == 1) return m.row(0).transpose();
    if (m.cols() == 1) return m.col(0);
    throw ValidationError(path + ": expected a single row or column");
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void write_csv_matrix(const std::string& path, const Matrix& X) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            if (j) out << ',';
            out << format_double(X(i, j));
        }
        out << '\n';
    }
}

inline void write_csv_row(const std::string& path, const Vector& x) {
    write_csv_matrix(path, Matrix(x.transpose()));
}

/// Parses "1,3,4" (1-based) into a model over p; an empty string is the empty model.
inline ModelId parse_model(std::string_view text, int p) {
    ModelId M(p);
    text = detail::trim(text);
    if (text.empty()) return M;
    for (auto field : detail::split(text, ',')) {
        field = detail::trim(field);
        int idx = 0;
        auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), idx);
        if (ec != std::errc() || ptr != field.data() + field.size()) {
            throw ValidationError("cannot parse model index '" + std::string(field) + "'");
        }
        if (idx < 1 || idx > p) {
            throw ValidationError("model index " + std::to_string(idx) + " outside 1.." + std::to_string(p));
        }
        M.insert(idx - 1);
    }
    return M;
}

/// Universe file: one model per line as comma-separated 1-based indices; a
/// blank line is the empty model.
inline ModelUniverse read_universe(const std::string& path, const CanonicalDesign& canon) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open universe file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    std::string content = buf.str();
    if (!content.empty() && content.back() == '\n') content.pop_back();
    std::vector<ModelId> models;
    for (auto line : detail::split(content, '\n')) models.push_back(parse_model(line, canon.p()));
    return ModelUniverse::validated(canon.p(), std::move(models), canon);
}

inline void write_universe(const std::string& path, const ModelUniverse& U) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    for (const auto& M : U.models()) {
        bool first = true;
        for (int j : M.indices()) {
            if (!first) out << ',';
            out << (j + 1);
            first = false;
        }
        out << '\n';
    }
}

}  // namespace posi::io
