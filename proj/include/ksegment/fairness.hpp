#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ksegment/dataset.hpp"
#include "ksegment/error.hpp"
#include "ksegment/model.hpp"
#include "ksegment/quantile.hpp"

namespace ksegment {

/// One evaluated sale: price x, its sale-price quantile within the evaluated
/// population, the model's assessed value v, and the ratio r = v / x (ideal 1).
struct RatioSample {
    double sale_price = 0.0;
    double sale_quantile = 0.0;
    double assessed_value = 0.0;
    double ratio = 0.0;
};

/// Which fairness measures an evaluation computes: group fairness at each
/// group count and deviation-weighted fairness at each alpha.
struct FairnessConfig {
    std::vector<int> n_values{2, 3};
    std::vector<double> alpha_values{0.0, 1.0, 2.0, 5.0};

    void validate() const {
        for (const int n : n_values) {
            if (n < 2) throw ConfigError("fairness group counts must be >= 2");
        }
        for (const double alpha : alpha_values) {
            if (alpha < 0.0) throw ConfigError("fairness alphas must be >= 0");
        }
    }
};

inline RatioSample make_ratio_sample(double sale_price, double sale_quantile,
                                     double assessed_value) {
    return RatioSample{sale_price, sale_quantile, assessed_value, assessed_value / sale_price};
}

/// Assesses every (sold) record and attaches the sale-price quantile computed
/// against this very population.
inline std::vector<RatioSample> sta_ratios(std::span<const PropertyRecord> records,
                                           const KSegmentModel& model) {
    std::vector<double> prices;
    prices.reserve(records.size());
    for (const PropertyRecord& rec : records) {
        if (!rec.sale_price) {
            throw DatasetError("record \"" + rec.id + "\" has no sale price");
        }
        prices.push_back(*rec.sale_price);
    }
    QuantileIndex price_index(std::move(prices));

    std::vector<RatioSample> samples;
    samples.reserve(records.size());
    for (const PropertyRecord& rec : records) {
        const double x = *rec.sale_price;
        samples.push_back(make_ratio_sample(x, price_index.quantile_of(x), model.assess(rec)));
    }
    return samples;
}

/// n groups of (near-)equal size ordered by ascending sale quantile. When m
/// does not divide evenly, the lowest-indexed groups take one extra sample.
/// Boundary ties resolve by stable (quantile, original index) order.
struct GroupPartition {
    int n = 0;
    std::vector<double> boundaries;        // first sale quantile of each group
    std::vector<int> group_of;             // per sample index, 1..n
    std::vector<std::size_t> group_sizes;  // m_1..m_n
};

inline GroupPartition partition_groups(std::span<const RatioSample> samples, int n) {
    if (n < 2) {
        throw DatasetError("group count must be at least 2");
    }
    const std::size_t m = samples.size();
    if (m < static_cast<std::size_t>(n)) {
        throw DatasetError("cannot partition " + std::to_string(m) + " samples into " +
                           std::to_string(n) + " groups");
    }

    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return samples[a].sale_quantile < samples[b].sale_quantile;
    });

    GroupPartition partition;
    partition.n = n;
    partition.group_of.assign(m, 0);
    const std::size_t base = m / static_cast<std::size_t>(n);
    const std::size_t remainder = m % static_cast<std::size_t>(n);
    std::size_t cursor = 0;
    for (int g = 1; g <= n; ++g) {
        const std::size_t size = base + (static_cast<std::size_t>(g) <= remainder ? 1 : 0);
        partition.boundaries.push_back(samples[order[cursor]].sale_quantile);
        partition.group_sizes.push_back(size);
        for (std::size_t i = 0; i < size; ++i) partition.group_of[order[cursor++]] = g;
    }
    return partition;
}

/// Group fairness, reference implementation: the negated sum over all
/// cross-group pairs (lower-index sample i, higher-index sample j) of
/// (r_i - r_j)^+ / (m_i's group size * m_j's group size). The O(m^2) loop is
/// the oracle the fast path is checked against.
inline double group_fairness_bruteforce(std::span<const RatioSample> samples,
                                        const GroupPartition& partition) {
    const std::size_t m = samples.size();
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const int gi = partition.group_of[i];
            const int gj = partition.group_of[j];
            if (gi >= gj) continue;
            const double excess = samples[i].ratio - samples[j].ratio;
            if (excess > 0.0) {
                total += excess / (static_cast<double>(partition.group_sizes[gi - 1]) *
                                   static_cast<double>(partition.group_sizes[gj - 1]));
            }
        }
    }
    return -total;
}

/// Same value as the brute-force oracle, computed per group pair with sorted
/// ratios and prefix sums: for each lower-group ratio r, the pairwise excess
/// over the higher group is count_below * r - sum_below.
inline double group_fairness_fast(std::span<const RatioSample> samples,
                                  const GroupPartition& partition) {
    const int n = partition.n;
    std::vector<std::vector<double>> sorted_ratios(static_cast<std::size_t>(n));
    for (int g = 0; g < n; ++g) {
        sorted_ratios[static_cast<std::size_t>(g)].reserve(partition.group_sizes[static_cast<std::size_t>(g)]);
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        sorted_ratios[static_cast<std::size_t>(partition.group_of[i]) - 1].push_back(samples[i].ratio);
    }
    std::vector<std::vector<double>> prefix(static_cast<std::size_t>(n));
    for (int g = 0; g < n; ++g) {
        auto& ratios = sorted_ratios[static_cast<std::size_t>(g)];
        std::sort(ratios.begin(), ratios.end());
        auto& sums = prefix[static_cast<std::size_t>(g)];
        sums.resize(ratios.size() + 1, 0.0);
        for (std::size_t i = 0; i < ratios.size(); ++i) sums[i + 1] = sums[i] + ratios[i];
    }

    double total = 0.0;
    for (int a = 0; a < n; ++a) {
        for (int b = a + 1; b < n; ++b) {
            const auto& high = sorted_ratios[static_cast<std::size_t>(b)];
            const auto& high_prefix = prefix[static_cast<std::size_t>(b)];
            double pair_sum = 0.0;
            for (const double r : sorted_ratios[static_cast<std::size_t>(a)]) {
                const std::size_t below = static_cast<std::size_t>(
                    std::lower_bound(high.begin(), high.end(), r) - high.begin());
                pair_sum += static_cast<double>(below) * r - high_prefix[below];
            }
            total += pair_sum / (static_cast<double>(partition.group_sizes[static_cast<std::size_t>(a)]) *
                                 static_cast<double>(partition.group_sizes[static_cast<std::size_t>(b)]));
        }
    }
    return -total;
}

/// Deviation-weighted fairness: overestimation (r > 1) is penalized with
/// weight exp(-alpha * q) and underestimation (r < 1) with
/// exp(-alpha * (1 - q)), so the extremes of the quantile range dominate as
/// alpha grows. Zero only when every ratio is exactly 1.
inline double deviation_weighted_fairness(std::span<const RatioSample> samples, double alpha) {
    if (alpha < 0.0) {
        throw DomainError("alpha must be nonnegative");
    }
    double over = 0.0;
    for (const RatioSample& s : samples) {
        if (s.ratio > 1.0) over += (s.ratio - 1.0) * std::exp(-alpha * s.sale_quantile);
    }
    double under = 0.0;
    for (const RatioSample& s : samples) {
        if (s.ratio < 1.0) under += (1.0 - s.ratio) * std::exp(-alpha * (1.0 - s.sale_quantile));
    }
    return -(over + under);
}

/// Fairness score of a model relative to the baseline's; the baseline itself
/// maps to exactly 1 and values below 1 are fairer.
inline double relative_unfairness(double model_score, double original_score) {
    if (original_score == 0.0) {
        throw DomainError(
            "relative unfairness is undefined when the original model's score is 0; "
            "report the raw scores instead");
    }
    if (original_score > 0.0) {
        throw DomainError("the original model's fairness score must be negative");
    }
    return model_score / original_score;
}

} // namespace ksegment
