#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ksegment/error.hpp"
#include "ksegment/quantile.hpp"
#include "ksegment/rng.hpp"

namespace ksegment {

/// One property. sale_price is absent for unsold assessment rows; the prior
/// assessment (last cycle's value) is always present and drives segmentation.
struct PropertyRecord {
    std::string id;
    std::vector<double> features;
    std::optional<double> sale_price;
    int sale_date = 0; // ordinal year-month index
    double prior_assessment = 0.0;
};

/// Column-name mapping declaring which CSV columns feed each field. The
/// feature column order defines the feature vector order.
struct CsvSchema {
    std::string id = "id";
    std::string sale_price = "sale_price";
    std::string sale_date = "sale_date";
    std::string prior_assessment = "prior_assessment";
    std::vector<std::string> features;
};

namespace detail {

inline std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return cells;
}

inline double parse_double_cell(std::string_view cell, const char* column, std::size_t row) {
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end || !std::isfinite(value)) {
        throw ParseError("cannot parse \"" + std::string(cell) + "\" in column \"" + column + "\" as a number", row);
    }
    return value;
}

inline int parse_int_cell(std::string_view cell, const char* column, std::size_t row) {
    int value = 0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc{} || ptr != end) {
        throw ParseError("cannot parse \"" + std::string(cell) + "\" in column \"" + column + "\" as an integer", row);
    }
    return value;
}

inline std::size_t column_index(const std::unordered_map<std::string, std::size_t>& header,
                                const std::string& name) {
    const auto it = header.find(name);
    if (it == header.end()) {
        throw SchemaError("missing column \"" + name + "\"");
    }
    return it->second;
}

// %.17g: shortest form that still round-trips every finite double.
inline std::string format_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

} // namespace detail

/// Reads a comma-separated, header-first, decimal-point CSV into records.
/// Rows with an empty sale_price cell are retained as unsold; row order is
/// preserved.
inline std::vector<PropertyRecord> load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) {
        throw DatasetError("cannot open \"" + path + "\"");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DatasetError("\"" + path + "\" is empty");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::unordered_map<std::string, std::size_t> header;
    {
        const auto cells = detail::split_line(line);
        for (std::size_t i = 0; i < cells.size(); ++i) header.emplace(std::string(cells[i]), i);
    }
    const std::size_t id_col = detail::column_index(header, schema.id);
    const std::size_t price_col = detail::column_index(header, schema.sale_price);
    const std::size_t date_col = detail::column_index(header, schema.sale_date);
    const std::size_t prior_col = detail::column_index(header, schema.prior_assessment);
    std::vector<std::size_t> feature_cols;
    feature_cols.reserve(schema.features.size());
    for (const auto& name : schema.features) feature_cols.push_back(detail::column_index(header, name));

    std::vector<PropertyRecord> records;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row;
        const auto cells = detail::split_line(line);
        if (cells.size() != header.size()) {
            throw ParseError("expected " + std::to_string(header.size()) + " cells, found " +
                                 std::to_string(cells.size()),
                             row);
        }
        PropertyRecord rec;
        rec.id = std::string(cells[id_col]);
        if (!cells[price_col].empty()) {
            rec.sale_price = detail::parse_double_cell(cells[price_col], schema.sale_price.c_str(), row);
        }
        rec.sale_date = detail::parse_int_cell(cells[date_col], schema.sale_date.c_str(), row);
        rec.prior_assessment = detail::parse_double_cell(cells[prior_col], schema.prior_assessment.c_str(), row);
        rec.features.reserve(feature_cols.size());
        for (std::size_t f = 0; f < feature_cols.size(); ++f) {
            rec.features.push_back(
                detail::parse_double_cell(cells[feature_cols[f]], schema.features[f].c_str(), row));
        }
        records.push_back(std::move(rec));
    }
    if (records.empty()) {
        throw DatasetError("\"" + path + "\" has no data rows");
    }
    return records;
}

/// Writes records in the same schema load_csv reads, so synthetic exports and
/// external rolls feed one pipeline. Absent sale prices become empty cells.
inline void write_csv(const std::string& path, const std::vector<PropertyRecord>& records,
                      const CsvSchema& schema) {
    std::ofstream out(path);
    if (!out) {
        throw DatasetError("cannot write \"" + path + "\"");
    }
    out << schema.id << ',' << schema.sale_price << ',' << schema.sale_date << ','
        << schema.prior_assessment;
    for (const auto& name : schema.features) out << ',' << name;
    out << '\n';
    for (const auto& rec : records) {
        out << rec.id << ',';
        if (rec.sale_price) out << detail::format_double(*rec.sale_price);
        out << ',' << rec.sale_date << ',' << detail::format_double(rec.prior_assessment);
        for (const double f : rec.features) out << ',' << detail::format_double(f);
        out << '\n';
    }
    if (!out) {
        throw DatasetError("write to \"" + path + "\" failed");
    }
}

struct SplitSpec {
    double train_fraction = 0.9;
    int validation_windows = 1;
};

/// One rolling-origin fold: fit on an expanding prefix of time periods,
/// validate on the single period that follows it.
struct Fold {
    std::vector<PropertyRecord> fit;
    std::vector<PropertyRecord> validation;
    int validation_period = 0;
};

struct Splits {
    std::vector<PropertyRecord> train;
    std::vector<PropertyRecord> test;
    std::vector<Fold> folds;
};

/// Chronological train/test partition of the sold records plus rolling-origin
/// validation folds inside the train span. The test set is the last
/// (1 - train_fraction) of sales; folds validate on the last
/// `validation_windows` train periods, each fitting on every earlier period.
inline Splits make_splits(const std::vector<PropertyRecord>& records, const SplitSpec& spec) {
    if (!(spec.train_fraction > 0.0 && spec.train_fraction <= 1.0)) {
        throw SplitError("train_fraction must be in (0,1]");
    }
    if (spec.validation_windows < 1) {
        throw SplitError("validation_windows must be >= 1");
    }

    std::vector<PropertyRecord> sold;
    for (const auto& rec : records) {
        if (rec.sale_price) sold.push_back(rec);
    }
    if (sold.empty()) {
        throw SplitError("no sold records to split");
    }
    std::stable_sort(sold.begin(), sold.end(),
                     [](const PropertyRecord& a, const PropertyRecord& b) { return a.sale_date < b.sale_date; });

    const std::size_t n = sold.size();
    // The +1e-9 keeps exact-intent products like 0.7*10 from flooring to 6.
    const auto train_count =
        std::min(n, static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n) + 1e-9)));

    Splits splits;
    splits.train.assign(sold.begin(), sold.begin() + static_cast<std::ptrdiff_t>(train_count));
    splits.test.assign(sold.begin() + static_cast<std::ptrdiff_t>(train_count), sold.end());

    std::vector<int> periods;
    for (const auto& rec : splits.train) {
        if (periods.empty() || rec.sale_date != periods.back()) periods.push_back(rec.sale_date);
    }
    if (periods.size() < static_cast<std::size_t>(spec.validation_windows) + 1) {
        throw SplitError("need at least " + std::to_string(spec.validation_windows + 1) +
                         " distinct time periods in train, found " + std::to_string(periods.size()));
    }

    const std::size_t first_validation = periods.size() - static_cast<std::size_t>(spec.validation_windows);
    for (std::size_t w = 0; w < static_cast<std::size_t>(spec.validation_windows); ++w) {
        const int period = periods[first_validation + w];
        Fold fold;
        fold.validation_period = period;
        for (const auto& rec : splits.train) {
            if (rec.sale_date < period) {
                fold.fit.push_back(rec);
            } else if (rec.sale_date == period) {
                fold.validation.push_back(rec);
            }
        }
        splits.folds.push_back(std::move(fold));
    }
    return splits;
}

/// Synthetic market generator settings. regressivity_strength compresses
/// prior assessments geometrically toward the population mean value: 0 leaves
/// priors equal to true values, 1 collapses them all to the geometric mean,
/// so cheap properties are over-stated and expensive ones under-stated.
struct SyntheticMarketConfig {
    std::size_t num_properties = 1000;
    int feature_dim = 6;
    double noise_scale = 0.15;
    double regressivity_strength = 0.4;
    std::uint64_t seed = 1;
    int num_periods = 24; // sale dates spread uniformly over this many months
    int first_period = 0;

    void validate() const {
        if (num_properties == 0) throw ConfigError("num_properties must be positive");
        if (feature_dim < 1) throw ConfigError("feature_dim must be positive");
        if (noise_scale < 0.0) throw ConfigError("noise_scale must be nonnegative");
        if (!(regressivity_strength >= 0.0 && regressivity_strength <= 1.0)) {
            throw ConfigError("regressivity_strength must be in [0,1]");
        }
        if (num_periods < 1) throw ConfigError("num_periods must be positive");
    }
};

namespace detail {

/// Smooth nonlinear log-value surface; weights shrink with the feature index
/// so later covariates matter less.
inline double synthetic_log_value(const std::vector<double>& f) {
    double lv = 12.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
        const double w = 0.65 / std::sqrt(static_cast<double>(j) + 1.0);
        switch (j % 3) {
        case 0: lv += w * f[j]; break;
        case 1: lv += w * std::tanh(1.5 * f[j]); break;
        default: lv += w * 0.5 * (f[j] * f[j] - 1.0); break;
        }
    }
    if (f.size() >= 2) lv += 0.15 * std::tanh(f[0] * f[1]);
    return lv;
}

} // namespace detail

/// Deterministic synthetic market. Sale prices are true values under
/// multiplicative lognormal noise; prior assessments are true values
/// compressed toward the population geometric mean (see the config), under
/// the same noise scale.
inline std::vector<PropertyRecord> generate_synthetic(const SyntheticMarketConfig& config) {
    config.validate();
    Rng rng(config.seed);

    const std::size_t n = config.num_properties;
    std::vector<PropertyRecord> records(n);
    std::vector<double> log_value(n);
    std::vector<double> sale_noise(n);
    std::vector<double> prior_noise(n);
    double log_value_sum = 0.0;

    for (std::size_t i = 0; i < n; ++i) {
        auto& rec = records[i];
        char buf[24];
        std::snprintf(buf, sizeof(buf), "p%06zu", i);
        rec.id = buf;
        rec.features.resize(static_cast<std::size_t>(config.feature_dim));
        for (double& f : rec.features) f = rng.normal();
        log_value[i] = detail::synthetic_log_value(rec.features);
        log_value_sum += log_value[i];
        sale_noise[i] = rng.normal();
        prior_noise[i] = rng.normal();
        const double u = rng.uniform();
        const int offset = std::min(config.num_periods - 1, static_cast<int>(u * config.num_periods));
        rec.sale_date = config.first_period + offset;
    }

    // Geometric mean of true values; the compression target.
    const double log_mean = log_value_sum / static_cast<double>(n);
    const double s = config.regressivity_strength;
    for (std::size_t i = 0; i < n; ++i) {
        records[i].sale_price = std::exp(log_value[i] + config.noise_scale * sale_noise[i]);
        records[i].prior_assessment =
            std::exp((1.0 - s) * log_value[i] + s * log_mean + config.noise_scale * prior_noise[i]);
    }
    return records;
}

/// The canonical synthetic export schema: id, sale_price, sale_date,
/// prior_assessment, f0..f{F-1}.
inline CsvSchema synthetic_schema(int feature_dim) {
    CsvSchema schema;
    for (int j = 0; j < feature_dim; ++j) schema.features.push_back("f" + std::to_string(j));
    return schema;
}

} // namespace ksegment
