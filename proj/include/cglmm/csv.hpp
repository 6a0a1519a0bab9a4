#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cglmm/data.hpp"
#include "cglmm/errors.hpp"
#include "cglmm/model.hpp"

namespace cglmm {

namespace csv_detail {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(field);
            field.clear();
        } else if (ch != '\r') {
            field += ch;
        }
    }
    out.push_back(field);
    return out;
}

inline bool is_missing(const std::string& s) {
    return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "nan";
}

inline double parse_number(const std::string& s, std::size_t line_no, const std::string& col) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = begin + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw DataError("line " + std::to_string(line_no) + ", column '" + col +
                        "': cannot parse '" + s + "' as a number");
    return v;
}

}  // namespace csv_detail

struct IngestResult {
    GroupedDataset data;
    std::size_t dropped_rows = 0;  // rows missing the response or a referenced covariate
};

// Parse a headed, comma-separated, dot-decimal CSV into a grouped dataset.
// Columns other than the group id, response and trials become covariates.
// Rows missing a referenced value are dropped and counted; non-numeric
// values in referenced columns are hard errors with line/column positions.
inline IngestResult ingest(const std::string& path, const ModelSpec& spec) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "' is empty");
    const std::vector<std::string> header = csv_detail::split_line(line);

    auto col_of = [&](const std::string& name) -> std::size_t {
        for (std::size_t c = 0; c < header.size(); ++c)
            if (header[c] == name) return c;
        throw DataError("column '" + name + "' not found in '" + path + "'");
    };

    const std::size_t group_col = col_of(spec.group_column);
    const std::size_t resp_col = col_of(spec.response_column);
    std::size_t trials_col = static_cast<std::size_t>(-1);
    if (!spec.trials_column.empty()) {
        if (spec.family != Family::binomial)
            throw ConfigError("a trials column only applies to binomial models");
        trials_col = col_of(spec.trials_column);
    }

    IngestResult out;
    std::vector<std::size_t> cov_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == group_col || c == resp_col || c == trials_col) continue;
        out.data.covariates.push_back(header[c]);
        cov_cols.push_back(c);
    }

    std::vector<bool> referenced(cov_cols.size(), false);
    for (std::size_t k = 0; k < out.data.covariates.size(); ++k) {
        const auto& name = out.data.covariates[k];
        for (const auto& u : spec.unit_covariates) referenced[k] = referenced[k] || u == name;
        for (const auto& g : spec.group_covariates) referenced[k] = referenced[k] || g == name;
    }
    for (const auto& lists : {&spec.unit_covariates, &spec.group_covariates})
        for (const auto& name : *lists)
            if (!out.data.has_column(name))
                throw DataError("column '" + name + "' not found in '" + path + "'");

    std::unordered_map<std::string, std::size_t> group_index;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = csv_detail::split_line(line);
        if (fields.size() != header.size())
            throw DataError("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));

        bool missing = csv_detail::is_missing(fields[resp_col]);
        for (std::size_t k = 0; k < cov_cols.size() && !missing; ++k)
            missing = referenced[k] && csv_detail::is_missing(fields[cov_cols[k]]);
        if (trials_col != static_cast<std::size_t>(-1) && csv_detail::is_missing(fields[trials_col]))
            missing = true;
        if (missing) {
            ++out.dropped_rows;
            continue;
        }

        const std::string& gid = fields[group_col];
        auto [it, inserted] = group_index.try_emplace(gid, out.data.groups.size());
        if (inserted) {
            GroupedDataset::Group g;
            g.id = gid;
            out.data.groups.push_back(std::move(g));
        }
        auto& g = out.data.groups[it->second];

        g.y.push_back(csv_detail::parse_number(fields[resp_col], line_no, spec.response_column));
        if (trials_col != static_cast<std::size_t>(-1))
            g.trials.push_back(
                csv_detail::parse_number(fields[trials_col], line_no, spec.trials_column));
        std::vector<double> row(cov_cols.size());
        for (std::size_t k = 0; k < cov_cols.size(); ++k) {
            const std::string& s = fields[cov_cols[k]];
            if (csv_detail::is_missing(s)) {
                row[k] = std::numeric_limits<double>::quiet_NaN();  // unreferenced column
            } else {
                row[k] = csv_detail::parse_number(s, line_no, out.data.covariates[k]);
            }
        }
        g.x.push_back(std::move(row));
    }
    if (out.data.groups.empty()) throw DataError("'" + path + "' contains no data rows");

    // group covariates must be constant within each group
    for (const auto& name : spec.group_covariates) {
        const std::size_t c = out.data.column(name);
        for (const auto& g : out.data.groups)
            for (std::size_t j = 1; j < g.size(); ++j)
                if (g.x[j][c] != g.x[0][c])
                    throw DataError("group covariate '" + name +
                                    "' is not constant within group '" + g.id + "'");
    }
    return out;
}

// Write a dataset in the same dialect: group,y[,trials],<covariates...>.
inline void write_csv(const GroupedDataset& data, const std::string& path,
                      const std::string& group_column = "group",
                      const std::string& response_column = "y",
                      const std::string& trials_column = "trials") {
    std::ofstream outf(path);
    if (!outf) throw IoError("cannot write '" + path + "'");
    const bool trials = !data.groups.empty() && !data.groups.front().trials.empty();
    outf << group_column << ',' << response_column;
    if (trials) outf << ',' << trials_column;
    for (const auto& c : data.covariates) outf << ',' << c;
    outf << '\n';
    outf.precision(17);
    for (const auto& g : data.groups) {
        for (std::size_t j = 0; j < g.size(); ++j) {
            outf << g.id << ',' << g.y[j];
            if (trials) outf << ',' << g.trials[j];
            for (double v : g.x[j]) outf << ',' << v;
            outf << '\n';
        }
    }
    if (!outf) throw IoError("failed while writing '" + path + "'");
}

}  // namespace cglmm
