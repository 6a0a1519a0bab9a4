#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cglmm/errors.hpp"

namespace cglmm {

// Two-level dataset: units j = 1..n_i nested in groups i = 1..I, each unit
// carrying a response, an optional trial count and a covariate row aligned
// with `covariates`.
struct GroupedDataset {
    struct Group {
        std::string id;
        std::vector<double> y;
        std::vector<double> trials;               // empty unless binomial data
        std::vector<std::vector<double>> x;       // one row per unit
        std::size_t size() const { return y.size(); }
    };

    std::vector<std::string> covariates;
    std::vector<Group> groups;

    std::size_t n_groups() const { return groups.size(); }
    std::size_t n_units() const {
        std::size_t n = 0;
        for (const auto& g : groups) n += g.size();
        return n;
    }

    std::size_t column(const std::string& name) const {
        auto it = std::find(covariates.begin(), covariates.end(), name);
        if (it == covariates.end())
            throw DataError("unknown covariate '" + name + "'");
        return static_cast<std::size_t>(it - covariates.begin());
    }

    bool has_column(const std::string& name) const {
        return std::find(covariates.begin(), covariates.end(), name) != covariates.end();
    }
};

}  // namespace cglmm
