#pragma once

// CSV input/output for study data. Header row required, UTF-8, decimal
// point. Missing values are not supported and error with row/column
// position. Doubles are written with std::to_chars so a write/read
// round-trip reproduces every value bit-exactly.

#include <charconv>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "crtlasso/data.hpp"
#include "crtlasso/errors.hpp"

namespace crtlasso {

struct CsvSchema {
    std::string outcome = "y";
    std::string cluster = "cluster";
    std::string treatment = "treatment";
    std::string weight;                    // empty: every record gets weight 1
    std::vector<std::string> covariates;   // empty: all remaining columns
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    fields.push_back(std::move(field));
    return fields;
}

inline double parse_double(const std::string& s, int row, const std::string& col) {
    if (s.empty()) {
        throw ValidationError("missing value at row " + std::to_string(row) + ", column '" + col + "'");
    }
    double value = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ValidationError("could not parse number '" + s + "' at row " + std::to_string(row) +
                              ", column '" + col + "'");
    }
    return value;
}

inline std::string format_double(double x) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, ptr);
}

} // namespace detail

// Loads and validates a StudyFrame. Row numbers in errors are 1-based file
// lines (the header is line 1).
inline StudyFrame load_study(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open file '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw ValidationError("file '" + path + "' is empty");
    const auto header = detail::split_csv_line(line);

    auto find_col = [&](const std::string& name) -> int {
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (header[c] == name) return static_cast<int>(c);
        }
        return -1;
    };
    auto require_col = [&](const std::string& name) {
        const int c = find_col(name);
        if (c < 0) throw ValidationError("missing column '" + name + "' in '" + path + "'");
        return c;
    };

    const int col_y = require_col(schema.outcome);
    const int col_cluster = require_col(schema.cluster);
    const int col_t = require_col(schema.treatment);
    const int col_w = schema.weight.empty() ? -1 : require_col(schema.weight);

    std::vector<int> col_x;
    std::vector<std::string> covariate_names;
    if (!schema.covariates.empty()) {
        for (const auto& name : schema.covariates) {
            col_x.push_back(require_col(name));
            covariate_names.push_back(name);
        }
    } else {
        for (std::size_t c = 0; c < header.size(); ++c) {
            const int ci = static_cast<int>(c);
            if (ci == col_y || ci == col_cluster || ci == col_t || ci == col_w) continue;
            col_x.push_back(ci);
            covariate_names.push_back(header[c]);
        }
    }

    StudyFrame frame(covariate_names);
    std::vector<double> xs(col_x.size());
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw ValidationError("row " + std::to_string(row) + " has " +
                                  std::to_string(fields.size()) + " fields, expected " +
                                  std::to_string(header.size()));
        }
        const double y = detail::parse_double(fields[col_y], row, schema.outcome);
        const double t_raw = detail::parse_double(fields[col_t], row, schema.treatment);
        if (t_raw != 0.0 && t_raw != 1.0) {
            throw ValidationError("treatment must be 0 or 1 at row " + std::to_string(row));
        }
        const double w = col_w < 0 ? 1.0 : detail::parse_double(fields[col_w], row, schema.weight);
        if (!(w > 0.0) || !std::isfinite(w)) {
            throw ValidationError("non-positive weight at row " + std::to_string(row));
        }
        if (!std::isfinite(y)) {
            throw ValidationError("non-finite outcome at row " + std::to_string(row));
        }
        for (std::size_t q = 0; q < col_x.size(); ++q) {
            xs[q] = detail::parse_double(fields[col_x[q]], row, covariate_names[q]);
            if (!std::isfinite(xs[q])) {
                throw ValidationError("non-finite covariate '" + covariate_names[q] + "' at row " +
                                      std::to_string(row));
            }
        }
        const int cluster = frame.add_cluster(fields[col_cluster], static_cast<int>(t_raw));
        frame.add_record(cluster, y, w, xs);
    }

    frame.validate();
    return frame;
}

inline void write_study_csv(std::ostream& out, const StudyFrame& frame,
                            const CsvSchema& schema = {.weight = "w"}) {
    out << schema.cluster << ',' << schema.treatment << ',';
    if (!schema.weight.empty()) out << schema.weight << ',';
    out << schema.outcome;
    for (const auto& name : frame.covariate_names()) out << ',' << name;
    out << '\n';
    for (int i = 0; i < frame.n(); ++i) {
        const int j = frame.cluster(i);
        out << frame.cluster_id(j) << ',' << frame.treatment(j) << ',';
        if (!schema.weight.empty()) out << detail::format_double(frame.w(i)) << ',';
        out << detail::format_double(frame.y(i));
        for (double xv : frame.x_row(i)) out << ',' << detail::format_double(xv);
        out << '\n';
    }
}

inline void write_study_csv(const std::string& path, const StudyFrame& frame,
                            const CsvSchema& schema = {.weight = "w"}) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write file '" + path + "'");
    write_study_csv(out, frame, schema);
}

} // namespace crtlasso
