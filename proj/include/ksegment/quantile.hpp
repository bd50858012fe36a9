#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

#include "ksegment/error.hpp"

namespace ksegment {

/// Empirical quantile index over a reference population. The quantile of x is
/// the fraction of reference values less than or equal to x; ties count in
/// full, no interpolation.
class QuantileIndex {
public:
    explicit QuantileIndex(std::vector<double> values) : sorted_(std::move(values)) {
        if (sorted_.empty()) {
            throw DatasetError("quantile index requires a non-empty population");
        }
        std::sort(sorted_.begin(), sorted_.end());
    }

    std::size_t population_size() const { return sorted_.size(); }

    const std::vector<double>& sorted_values() const { return sorted_; }

    /// Count of reference values <= x over the population size; in [0, 1] and
    /// monotone non-decreasing in x.
    double quantile_of(double x) const {
        const auto count = std::upper_bound(sorted_.begin(), sorted_.end(), x) - sorted_.begin();
        return static_cast<double>(count) / static_cast<double>(sorted_.size());
    }

private:
    std::vector<double> sorted_;
};

inline QuantileIndex build_quantile_index(std::vector<double> values) {
    return QuantileIndex(std::move(values));
}

} // namespace ksegment
