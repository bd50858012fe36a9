#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ksegment/dataset.hpp"
#include "ksegment/error.hpp"
#include "ksegment/fairness.hpp"
#include "ksegment/gbm.hpp"
#include "ksegment/model.hpp"
#include "ksegment/segmentation.hpp"

namespace ksegment {

/// Coefficient of determination on the raw price scale.
inline double r_squared(std::span<const double> predictions, std::span<const double> truths) {
    if (predictions.size() != truths.size() || truths.empty()) {
        throw DomainError("predictions and truths must have equal, non-zero length");
    }
    double mean = 0.0;
    for (const double t : truths) mean += t;
    mean /= static_cast<double>(truths.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const double r = truths[i] - predictions[i];
        const double d = truths[i] - mean;
        ss_res += r * r;
        ss_tot += d * d;
    }
    if (!(ss_tot > 0.0)) {
        throw DomainError("r_squared is undefined: truths are all identical");
    }
    return 1.0 - ss_res / ss_tot;
}

/// One log-price bin of the ratio trend. Empty bins keep count 0 and no median.
struct TrendBin {
    double center_logprice = 0.0;
    std::optional<double> median_ratio;
    std::size_t count = 0;
};

/// Median StA ratio per equal-width log-price bin over [lo, hi]; samples
/// outside the window are excluded.
inline std::vector<TrendBin> trend_bins(std::span<const RatioSample> samples, int num_bins,
                                        double lo, double hi) {
    if (num_bins < 2) throw DomainError("num_bins must be at least 2");
    if (!(lo < hi)) throw DomainError("log range must satisfy lo < hi");

    const double width = (hi - lo) / static_cast<double>(num_bins);
    std::vector<std::vector<double>> ratios(static_cast<std::size_t>(num_bins));
    for (const RatioSample& s : samples) {
        const double lx = std::log(s.sale_price);
        if (lx < lo || lx > hi) continue;
        const int bin = std::min(num_bins - 1, static_cast<int>((lx - lo) / width));
        ratios[static_cast<std::size_t>(bin)].push_back(s.ratio);
    }

    std::vector<TrendBin> bins(static_cast<std::size_t>(num_bins));
    for (int b = 0; b < num_bins; ++b) {
        auto& bucket = ratios[static_cast<std::size_t>(b)];
        TrendBin& bin = bins[static_cast<std::size_t>(b)];
        bin.center_logprice = lo + (static_cast<double>(b) + 0.5) * width;
        bin.count = bucket.size();
        if (!bucket.empty()) {
            std::sort(bucket.begin(), bucket.end());
            const std::size_t mid = bucket.size() / 2;
            bin.median_ratio = bucket.size() % 2 == 1
                                   ? bucket[mid]
                                   : (bucket[mid - 1] + bucket[mid]) / 2.0;
        }
    }
    return bins;
}

/// A model's position in accuracy-fairness space. Both coordinates are
/// maximized: fairness scores are nonpositive and larger means fairer.
struct ParetoPoint {
    std::string model;
    double accuracy = 0.0;
    double fairness = 0.0;
};

struct ParetoFrontier {
    std::vector<ParetoPoint> non_dominated; // ascending accuracy
    std::vector<ParetoPoint> hull;          // upper-right convex hull, ascending accuracy
};

/// Non-dominated set (weak domination with at least one strict coordinate)
/// and its upper-right convex hull. Collinear interior points stay out of the
/// hull; exact duplicates are never dominated by each other and are all kept
/// in the non-dominated set.
inline ParetoFrontier pareto_frontier(std::span<const ParetoPoint> points) {
    if (points.empty()) {
        throw DomainError("pareto_frontier requires at least one point");
    }
    std::vector<std::size_t> order(points.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].accuracy != points[b].accuracy) return points[a].accuracy > points[b].accuracy;
        return points[a].fairness > points[b].fairness;
    });

    // Sweep accuracy downward; within an equal-accuracy block only the top
    // fairness survives, and it must strictly beat everything more accurate.
    std::vector<std::size_t> kept;
    double best_fairness = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && points[order[j]].accuracy == points[order[i]].accuracy) ++j;
        const double block_best = points[order[i]].fairness;
        for (std::size_t k = i; k < j; ++k) {
            if (points[order[k]].fairness == block_best && block_best > best_fairness) {
                kept.push_back(order[k]);
            }
        }
        best_fairness = std::max(best_fairness, block_best);
        i = j;
    }

    ParetoFrontier result;
    std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
        if (points[a].accuracy != points[b].accuracy) return points[a].accuracy < points[b].accuracy;
        return a < b;
    });
    for (const std::size_t k : kept) result.non_dominated.push_back(points[k]);

    // Monotone-chain upper hull over the deduplicated frontier; a cross
    // product >= 0 means the middle point is on or below the chord.
    std::vector<const ParetoPoint*> unique;
    for (const ParetoPoint& p : result.non_dominated) {
        if (unique.empty() || unique.back()->accuracy != p.accuracy ||
            unique.back()->fairness != p.fairness) {
            unique.push_back(&p);
        }
    }
    std::vector<const ParetoPoint*> chain;
    for (const ParetoPoint* p : unique) {
        while (chain.size() >= 2) {
            const ParetoPoint* a = chain[chain.size() - 2];
            const ParetoPoint* b = chain[chain.size() - 1];
            const double cross = (b->accuracy - a->accuracy) * (p->fairness - a->fairness) -
                                 (b->fairness - a->fairness) * (p->accuracy - a->accuracy);
            if (cross >= 0.0) {
                chain.pop_back();
            } else {
                break;
            }
        }
        chain.push_back(p);
    }
    for (const ParetoPoint* p : chain) result.hull.push_back(*p);
    return result;
}

// --- experiment configuration ------------------------------------------------

struct CsvDataSpec {
    std::string path;
    CsvSchema schema;
    std::optional<std::string> assessment_path;
};

struct SyntheticDataSpec {
    SyntheticMarketConfig market;
    std::size_t assessment_properties = 0; // 0 disables the assessment set
};

struct DataSpec {
    std::optional<SyntheticDataSpec> synthetic;
    std::optional<CsvDataSpec> csv;
};

struct ModelEntry {
    std::string name;
    SegmentationScheme scheme;
    SmoothingSpec smoothing;
};

struct MetricsSpec {
    FairnessConfig fairness;
    std::optional<std::string> baseline;
};

struct ReportSpec {
    std::string out_dir = "out";
    double log_lo = 9.0;
    double log_hi = 16.0;
    int num_bins = 14;
    std::string r2_scale = "raw";            // or "log": R-squared over log prices
    std::string eval_split = "assessment";   // or "test"; falls back to test when
                                             // no assessment data is configured
    std::string pareto_split = "assessment"; // accuracy axis split
    std::string pareto_fairness = "fgrp_n2"; // fairness axis: fgrp_n<k> or fdev_a<x>
};

struct ExperimentConfig {
    DataSpec data;
    SplitSpec splits;
    GBMConfig gbm;
    std::vector<ModelEntry> models;
    MetricsSpec metrics;
    ReportSpec report;
};

namespace detail {

inline const nlohmann::json& require_key(const nlohmann::json& j, const char* key,
                                         const std::string& path) {
    if (!j.is_object() || !j.contains(key)) {
        throw ConfigError(path + "." + key + ": required key missing");
    }
    return j.at(key);
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(path + ": unexpected type");
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, const std::string& path, T fallback) {
    if (!j.is_object() || !j.contains(key)) return fallback;
    return get_as<T>(j.at(key), path + "." + std::string(key));
}

/// fgrp_n<int> or fdev_a<number>.
inline std::pair<std::string, double> parse_fairness_key(const std::string& key,
                                                         const std::string& path) {
    const auto fail = [&]() -> std::pair<std::string, double> {
        throw ConfigError(path + ": expected fgrp_n<groups> or fdev_a<alpha>, got \"" + key + "\"");
    };
    if (key.rfind("fgrp_n", 0) == 0) {
        char* end = nullptr;
        const long n = std::strtol(key.c_str() + 6, &end, 10);
        if (end == key.c_str() + 6 || *end != '\0' || n < 2) return fail();
        return {"fgrp", static_cast<double>(n)};
    }
    if (key.rfind("fdev_a", 0) == 0) {
        char* end = nullptr;
        const double a = std::strtod(key.c_str() + 6, &end);
        if (end == key.c_str() + 6 || *end != '\0' || a < 0.0) return fail();
        return {"fdev", a};
    }
    return fail();
}

inline ModelEntry parse_model_entry(const nlohmann::json& j, const std::string& path) {
    const std::string name = get_as<std::string>(require_key(j, "name", path), path + ".name");
    if (name.empty()) throw ConfigError(path + ".name: must not be empty");

    std::optional<SegmentationPreset> pre;
    if (j.contains("preset")) {
        try {
            pre = preset(get_as<std::string>(j.at("preset"), path + ".preset"));
        } catch (const ConfigError& e) {
            throw ConfigError(path + ".preset: " + e.what());
        }
    }

    std::vector<double> interior;
    if (j.contains("eta")) {
        const auto full = get_as<std::vector<double>>(j.at("eta"), path + ".eta");
        // Accept either the interior thresholds or the full 0..1 list.
        if (full.size() >= 2 && full.front() == 0.0 && full.back() == 1.0) {
            interior.assign(full.begin() + 1, full.end() - 1);
        } else {
            interior = full;
        }
    } else if (pre) {
        interior = pre->interior_boundaries;
    } else if (get_or<int>(j, "K", path, 0) == 1) {
        interior = {};
    } else {
        throw ConfigError(path + ": needs \"eta\", a \"preset\", or K = 1");
    }

    SegmentationScheme scheme = [&] {
        try {
            return SegmentationScheme(interior);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ".eta: " + e.what());
        }
    }();
    if (j.contains("K") && get_as<int>(j.at("K"), path + ".K") != scheme.num_segments()) {
        throw ConfigError(path + ".K: does not match the boundary list");
    }

    const std::string method_name =
        get_as<std::string>(require_key(j, "smoothing", path), path + ".smoothing");
    SmoothingMethod method;
    try {
        method = smoothing_method_from_string(method_name);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ".smoothing: " + e.what());
    }

    SmoothingSpec spec = pre ? pre->smoothing(method) : SmoothingSpec{};
    spec.method = method;
    if (j.contains("params")) {
        const auto& params = j.at("params");
        const std::string ppath = path + ".params";
        if (params.contains("mu")) spec.mu = get_as<double>(params.at("mu"), ppath + ".mu");
        if (params.contains("lambda")) {
            spec.blend_lambda = get_as<std::vector<double>>(params.at("lambda"), ppath + ".lambda");
        }
        if (params.contains("gamma")) {
            spec.blend_gamma = get_as<std::vector<double>>(params.at("gamma"), ppath + ".gamma");
        }
    }
    try {
        spec.validate(scheme);
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return ModelEntry{name, std::move(scheme), std::move(spec)};
}

} // namespace detail

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    const bool has_synthetic = j.is_object() && j.contains("synthetic");
    const bool has_csv = j.is_object() && j.contains("data");
    if (has_synthetic == has_csv) {
        throw ConfigError("config: exactly one of \"synthetic\" or \"data\" is required");
    }

    if (has_synthetic) {
        const auto& s = j.at("synthetic");
        const std::string path = "synthetic";
        SyntheticDataSpec spec;
        spec.market.num_properties =
            detail::get_as<std::size_t>(detail::require_key(s, "num_properties", path), path + ".num_properties");
        spec.market.feature_dim = detail::get_or<int>(s, "feature_dim", path, 6);
        spec.market.noise_scale = detail::get_or<double>(s, "noise_scale", path, 0.15);
        spec.market.regressivity_strength = detail::get_or<double>(s, "regressivity_strength", path, 0.4);
        spec.market.seed = detail::get_or<std::uint64_t>(s, "seed", path, 1);
        spec.market.num_periods = detail::get_or<int>(s, "num_periods", path, 24);
        spec.market.first_period = detail::get_or<int>(s, "first_period", path, 0);
        spec.assessment_properties =
            detail::get_or<std::size_t>(s, "assessment_properties", path, spec.market.num_properties);
        try {
            spec.market.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(path + ": " + e.what());
        }
        cfg.data.synthetic = std::move(spec);
    } else {
        const auto& d = j.at("data");
        const std::string path = "data";
        CsvDataSpec spec;
        spec.path = detail::get_as<std::string>(detail::require_key(d, "path", path), path + ".path");
        const auto& schema = detail::require_key(d, "schema", path);
        const std::string spath = path + ".schema";
        spec.schema.id = detail::get_or<std::string>(schema, "id", spath, "id");
        spec.schema.sale_price = detail::get_or<std::string>(schema, "sale_price", spath, "sale_price");
        spec.schema.sale_date = detail::get_or<std::string>(schema, "sale_date", spath, "sale_date");
        spec.schema.prior_assessment =
            detail::get_or<std::string>(schema, "prior_assessment", spath, "prior_assessment");
        spec.schema.features = detail::get_as<std::vector<std::string>>(
            detail::require_key(schema, "features", spath), spath + ".features");
        if (spec.schema.features.empty()) {
            throw ConfigError(spath + ".features: must name at least one feature column");
        }
        if (d.contains("assessment_path")) {
            spec.assessment_path =
                detail::get_as<std::string>(d.at("assessment_path"), path + ".assessment_path");
        }
        cfg.data.csv = std::move(spec);
    }

    if (j.contains("splits")) {
        const auto& s = j.at("splits");
        cfg.splits.train_fraction = detail::get_or<double>(s, "train_fraction", "splits", 0.9);
        cfg.splits.validation_windows = detail::get_or<int>(s, "validation_windows", "splits", 1);
        if (!(cfg.splits.train_fraction > 0.0 && cfg.splits.train_fraction <= 1.0)) {
            throw ConfigError("splits.train_fraction: must be in (0,1]");
        }
        if (cfg.splits.validation_windows < 1) {
            throw ConfigError("splits.validation_windows: must be >= 1");
        }
    }

    if (j.contains("gbm")) {
        const auto& g = j.at("gbm");
        const std::string path = "gbm";
        cfg.gbm.num_trees = detail::get_or<int>(g, "num_trees", path, cfg.gbm.num_trees);
        cfg.gbm.learning_rate = detail::get_or<double>(g, "learning_rate", path, cfg.gbm.learning_rate);
        cfg.gbm.max_depth = detail::get_or<int>(g, "max_depth", path, cfg.gbm.max_depth);
        cfg.gbm.min_samples_leaf =
            detail::get_or<int>(g, "min_samples_leaf", path, cfg.gbm.min_samples_leaf);
        if (g.contains("target_transform")) {
            try {
                cfg.gbm.target_transform = target_transform_from_string(
                    detail::get_as<std::string>(g.at("target_transform"), path + ".target_transform"));
            } catch (const ConfigError& e) {
                throw ConfigError(path + ".target_transform: " + e.what());
            }
        }
        cfg.gbm.random_search_budget =
            detail::get_or<int>(g, "random_search_budget", path, cfg.gbm.random_search_budget);
        try {
            cfg.gbm.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }

    const auto& models = detail::require_key(j, "models", "config");
    if (!models.is_array() || models.empty()) {
        throw ConfigError("models: must be a non-empty array");
    }
    for (std::size_t i = 0; i < models.size(); ++i) {
        cfg.models.push_back(
            detail::parse_model_entry(models.at(i), "models[" + std::to_string(i) + "]"));
    }
    for (std::size_t i = 0; i < cfg.models.size(); ++i) {
        for (std::size_t k = i + 1; k < cfg.models.size(); ++k) {
            if (cfg.models[i].name == cfg.models[k].name) {
                throw ConfigError("models[" + std::to_string(k) + "].name: duplicate \"" +
                                  cfg.models[k].name + "\"");
            }
        }
    }

    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        cfg.metrics.fairness.n_values =
            detail::get_or<std::vector<int>>(m, "n_values", "metrics", cfg.metrics.fairness.n_values);
        cfg.metrics.fairness.alpha_values = detail::get_or<std::vector<double>>(
            m, "alpha_values", "metrics", cfg.metrics.fairness.alpha_values);
        try {
            cfg.metrics.fairness.validate();
        } catch (const ConfigError& e) {
            throw ConfigError("metrics: " + std::string(e.what()));
        }
        if (m.contains("baseline")) {
            cfg.metrics.baseline = detail::get_as<std::string>(m.at("baseline"), "metrics.baseline");
        }
    }
    if (cfg.metrics.baseline) {
        const bool known = std::any_of(cfg.models.begin(), cfg.models.end(),
                                       [&](const ModelEntry& e) { return e.name == *cfg.metrics.baseline; });
        if (!known) {
            throw ConfigError("metrics.baseline: no model named \"" + *cfg.metrics.baseline + "\"");
        }
    }

    if (j.contains("report")) {
        const auto& r = j.at("report");
        cfg.report.out_dir = detail::get_or<std::string>(r, "out_dir", "report", cfg.report.out_dir);
        if (r.contains("log_range")) {
            const auto range = detail::get_as<std::vector<double>>(r.at("log_range"), "report.log_range");
            if (range.size() != 2 || !(range[0] < range[1])) {
                throw ConfigError("report.log_range: expected [lo, hi] with lo < hi");
            }
            cfg.report.log_lo = range[0];
            cfg.report.log_hi = range[1];
        }
        cfg.report.num_bins = detail::get_or<int>(r, "num_bins", "report", cfg.report.num_bins);
        if (cfg.report.num_bins < 2) throw ConfigError("report.num_bins: must be >= 2");
        cfg.report.r2_scale = detail::get_or<std::string>(r, "r2_scale", "report", cfg.report.r2_scale);
        if (cfg.report.r2_scale != "raw" && cfg.report.r2_scale != "log") {
            throw ConfigError("report.r2_scale: expected raw or log");
        }
        cfg.report.eval_split = detail::get_or<std::string>(r, "eval_split", "report", cfg.report.eval_split);
        cfg.report.pareto_split =
            detail::get_or<std::string>(r, "pareto_split", "report", cfg.report.pareto_split);
        cfg.report.pareto_fairness =
            detail::get_or<std::string>(r, "pareto_fairness", "report", cfg.report.pareto_fairness);
        for (const char* key : {"eval_split", "pareto_split"}) {
            const std::string& value =
                std::string(key) == "eval_split" ? cfg.report.eval_split : cfg.report.pareto_split;
            if (value != "train" && value != "test" && value != "assessment") {
                throw ConfigError("report." + std::string(key) + ": expected train, test, or assessment");
            }
        }
        if (cfg.report.eval_split == "train") {
            throw ConfigError("report.eval_split: expected test or assessment");
        }
    }

    // Validate the fairness axis against the configured metric grids.
    const auto [metric, param] =
        detail::parse_fairness_key(cfg.report.pareto_fairness, "report.pareto_fairness");
    if (metric == "fgrp") {
        const auto& grid = cfg.metrics.fairness.n_values;
        if (std::find(grid.begin(), grid.end(), static_cast<int>(param)) == grid.end()) {
            throw ConfigError("report.pareto_fairness: n=" + std::to_string(static_cast<int>(param)) +
                              " is not in metrics.n_values");
        }
    } else {
        const auto& grid = cfg.metrics.fairness.alpha_values;
        if (std::find(grid.begin(), grid.end(), param) == grid.end()) {
            throw ConfigError("report.pareto_fairness: the alpha is not in metrics.alpha_values");
        }
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config \"" + path + "\"");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config \"" + path + "\" is not valid JSON: " + e.what());
    }
    return experiment_config_from_json(j);
}

// --- experiment execution -----------------------------------------------------

/// Seed offset separating the assessment population from the main one.
inline constexpr std::uint64_t kAssessmentSeedOffset = 1000003;

struct PreparedExperiment {
    std::vector<PropertyRecord> dataset;    // main roll (sold + unsold)
    std::vector<PropertyRecord> assessment; // separate assessment roll, may be empty
    Splits splits;
    GBMConfig gbm; // tuned when a random_search_budget was configured
};

namespace detail {

template <typename F>
auto stage(const std::string& name, F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw Error(name + ": " + e.what());
    }
}

inline std::vector<PropertyRecord> sold_only(const std::vector<PropertyRecord>& records) {
    std::vector<PropertyRecord> sold;
    for (const auto& rec : records) {
        if (rec.sale_price) sold.push_back(rec);
    }
    return sold;
}

} // namespace detail

inline PreparedExperiment prepare_experiment(const ExperimentConfig& cfg) {
    PreparedExperiment prep;
    if (cfg.data.synthetic) {
        const SyntheticDataSpec& spec = *cfg.data.synthetic;
        prep.dataset = detail::stage("generate", [&] { return generate_synthetic(spec.market); });
        if (spec.assessment_properties > 0) {
            SyntheticMarketConfig assessment_market = spec.market;
            assessment_market.num_properties = spec.assessment_properties;
            assessment_market.seed = spec.market.seed + kAssessmentSeedOffset;
            prep.assessment =
                detail::stage("generate", [&] { return generate_synthetic(assessment_market); });
        }
    } else {
        const CsvDataSpec& spec = *cfg.data.csv;
        prep.dataset = detail::stage("load", [&] { return load_csv(spec.path, spec.schema); });
        if (spec.assessment_path) {
            prep.assessment =
                detail::stage("load", [&] { return load_csv(*spec.assessment_path, spec.schema); });
        }
    }

    prep.splits = detail::stage("split", [&] { return make_splits(prep.dataset, cfg.splits); });

    prep.gbm = cfg.gbm;
    if (cfg.gbm.random_search_budget > 0) {
        std::vector<TuneFold> folds;
        for (const Fold& fold : prep.splits.folds) {
            TuneFold tf;
            for (const auto& rec : fold.fit) tf.fit.push_back(Sample{rec.features, *rec.sale_price});
            for (const auto& rec : fold.validation) {
                tf.validation.push_back(Sample{rec.features, *rec.sale_price});
            }
            folds.push_back(std::move(tf));
        }
        const std::uint64_t seed = cfg.data.synthetic ? cfg.data.synthetic->market.seed : 0;
        prep.gbm = detail::stage("tune", [&] { return tune(folds, cfg.gbm, seed); });
    }
    return prep;
}

/// Records the fairness/trend metrics are computed on, honoring eval_split
/// with a fallback to the test split when no assessment roll is configured.
inline std::vector<PropertyRecord> evaluation_records(const PreparedExperiment& prep,
                                                      const ReportSpec& report) {
    if (report.eval_split == "assessment" && !prep.assessment.empty()) {
        return detail::sold_only(prep.assessment);
    }
    return prep.splits.test;
}

struct FairnessValue {
    std::string metric; // "fgrp" or "fdev"
    double parameter = 0.0;
    double raw = 0.0;
    std::optional<double> relative;
};

struct EvaluationReport {
    std::string model;
    std::optional<double> r2_train;
    std::optional<double> r2_test;
    std::optional<double> r2_assessment;
    std::vector<FairnessValue> fairness;
    std::vector<TrendBin> trend;
};

struct ParetoRow {
    std::string model;
    double accuracy = 0.0;
    std::string fairness_metric;
    double fairness_value = 0.0;
    bool on_frontier = false;
    bool on_hull = false;
};

struct ExperimentResult {
    std::vector<EvaluationReport> reports;
    std::vector<ParetoRow> pareto;
    std::filesystem::path out_dir;
};

namespace detail {

/// Reports print with 10 significant digits; rounding the stored value keeps
/// the JSON dump identical to that precision.
inline double round_sig10(double x) {
    if (!std::isfinite(x)) return x;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return std::strtod(buf, nullptr);
}

inline std::string format_sig10(double x) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", x);
    return buf;
}

inline std::string sanitize_filename(const std::string& name) {
    std::string out = name;
    for (char& c : out) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '.' || c == '_' || c == '-';
        if (!ok) c = '_';
    }
    return out;
}

inline std::optional<double> split_r2(const KSegmentModel& model,
                                      std::span<const PropertyRecord> records, bool log_scale) {
    if (records.empty()) return std::nullopt;
    std::vector<double> predictions, truths;
    predictions.reserve(records.size());
    truths.reserve(records.size());
    for (const PropertyRecord& rec : records) {
        if (!rec.sale_price) continue;
        const double v = model.assess(rec);
        predictions.push_back(log_scale ? std::log(v) : v);
        truths.push_back(log_scale ? std::log(*rec.sale_price) : *rec.sale_price);
    }
    if (truths.empty()) return std::nullopt;
    return r_squared(predictions, truths);
}

inline nlohmann::ordered_json report_to_json(const EvaluationReport& report,
                                             const nlohmann::ordered_json& metadata) {
    nlohmann::ordered_json j;
    j["version"] = "report/1";
    j["model"] = report.model;
    j["metadata"] = metadata;
    nlohmann::ordered_json r2;
    r2["train"] = report.r2_train ? nlohmann::ordered_json(round_sig10(*report.r2_train))
                                  : nlohmann::ordered_json(nullptr);
    r2["test"] = report.r2_test ? nlohmann::ordered_json(round_sig10(*report.r2_test))
                                : nlohmann::ordered_json(nullptr);
    r2["assessment"] = report.r2_assessment
                           ? nlohmann::ordered_json(round_sig10(*report.r2_assessment))
                           : nlohmann::ordered_json(nullptr);
    j["r_squared"] = std::move(r2);
    auto& fairness = j["fairness"] = nlohmann::ordered_json::array();
    for (const FairnessValue& value : report.fairness) {
        nlohmann::ordered_json entry;
        entry["metric"] = value.metric;
        if (value.metric == "fgrp") {
            entry["n"] = static_cast<int>(value.parameter);
        } else {
            entry["alpha"] = round_sig10(value.parameter);
        }
        entry["raw"] = round_sig10(value.raw);
        if (value.relative) entry["relative_unfairness"] = round_sig10(*value.relative);
        fairness.push_back(std::move(entry));
    }
    auto& trend = j["trend"] = nlohmann::ordered_json::array();
    for (const TrendBin& bin : report.trend) {
        nlohmann::ordered_json entry;
        entry["bin_center_logprice"] = round_sig10(bin.center_logprice);
        entry["median_ratio"] = bin.median_ratio ? nlohmann::ordered_json(round_sig10(*bin.median_ratio))
                                                 : nlohmann::ordered_json(nullptr);
        entry["count"] = bin.count;
        trend.push_back(std::move(entry));
    }
    return j;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write \"" + path.string() + "\"");
    }
    out << contents;
    if (!out) {
        throw Error("write to \"" + path.string() + "\" failed");
    }
}

} // namespace detail

/// Runs the full pipeline: data, splits, one trained model per configured
/// entry, metrics, and the report files (one report JSON per model plus
/// pareto.csv, trend.csv, and, when a baseline is declared, comparison.csv).
/// Deterministic given the config and seeds.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    const PreparedExperiment prep = prepare_experiment(cfg);
    const std::vector<PropertyRecord> eval_records = evaluation_records(prep, cfg.report);
    if (eval_records.empty()) {
        throw Error("evaluate: the evaluation split is empty");
    }
    const std::vector<PropertyRecord> assessment_sold = detail::sold_only(prep.assessment);

    ExperimentResult result;
    result.out_dir = cfg.report.out_dir;
    std::filesystem::create_directories(result.out_dir);

    std::vector<std::vector<RatioSample>> eval_samples;
    for (const ModelEntry& entry : cfg.models) {
        const KSegmentModel model = detail::stage("train[" + entry.name + "]", [&] {
            return train_ksegment(prep.splits.train, entry.scheme, entry.smoothing, prep.gbm);
        });

        EvaluationReport report;
        report.model = entry.name;
        detail::stage("evaluate[" + entry.name + "]", [&] {
            const bool log_r2 = cfg.report.r2_scale == "log";
            report.r2_train = detail::split_r2(model, prep.splits.train, log_r2);
            report.r2_test = detail::split_r2(model, prep.splits.test, log_r2);
            report.r2_assessment = detail::split_r2(model, assessment_sold, log_r2);

            const std::vector<RatioSample> samples = sta_ratios(eval_records, model);
            for (const int n : cfg.metrics.fairness.n_values) {
                const GroupPartition partition = partition_groups(samples, n);
                report.fairness.push_back(FairnessValue{
                    "fgrp", static_cast<double>(n), group_fairness_fast(samples, partition), {}});
            }
            for (const double alpha : cfg.metrics.fairness.alpha_values) {
                report.fairness.push_back(
                    FairnessValue{"fdev", alpha, deviation_weighted_fairness(samples, alpha), {}});
            }
            report.trend = trend_bins(samples, cfg.report.num_bins, cfg.report.log_lo, cfg.report.log_hi);
            eval_samples.push_back(samples);
            return 0;
        });
        result.reports.push_back(std::move(report));
    }

    // Relative unfairness against the declared baseline's raw scores.
    if (cfg.metrics.baseline) {
        const EvaluationReport* baseline = nullptr;
        for (const EvaluationReport& report : result.reports) {
            if (report.model == *cfg.metrics.baseline) baseline = &report;
        }
        for (EvaluationReport& report : result.reports) {
            for (std::size_t i = 0; i < report.fairness.size(); ++i) {
                const double baseline_raw = baseline->fairness[i].raw;
                if (baseline_raw == 0.0) continue; // degenerate: raw scores stand alone
                report.fairness[i].relative =
                    relative_unfairness(report.fairness[i].raw, baseline_raw);
            }
        }
    }

    // Pareto rows over the declared accuracy split and fairness axis.
    const auto [pareto_metric, pareto_param] =
        detail::parse_fairness_key(cfg.report.pareto_fairness, "report.pareto_fairness");
    std::vector<ParetoPoint> points;
    for (const EvaluationReport& report : result.reports) {
        std::optional<double> accuracy;
        if (cfg.report.pareto_split == "train") accuracy = report.r2_train;
        if (cfg.report.pareto_split == "test") accuracy = report.r2_test;
        if (cfg.report.pareto_split == "assessment") {
            accuracy = report.r2_assessment ? report.r2_assessment : report.r2_test;
        }
        if (!accuracy) {
            throw Error("pareto: split \"" + cfg.report.pareto_split + "\" has no R-squared value");
        }
        double fairness_value = 0.0;
        for (const FairnessValue& value : report.fairness) {
            if (value.metric == pareto_metric && value.parameter == pareto_param) {
                fairness_value = value.raw;
            }
        }
        points.push_back(ParetoPoint{report.model, *accuracy, fairness_value});
    }
    const ParetoFrontier frontier = pareto_frontier(points);
    const auto contains = [](const std::vector<ParetoPoint>& list, const std::string& name) {
        return std::any_of(list.begin(), list.end(),
                           [&](const ParetoPoint& p) { return p.model == name; });
    };
    for (const ParetoPoint& p : points) {
        result.pareto.push_back(ParetoRow{p.model, p.accuracy, cfg.report.pareto_fairness, p.fairness,
                                          contains(frontier.non_dominated, p.model),
                                          contains(frontier.hull, p.model)});
    }

    // --- report files ---
    nlohmann::ordered_json shared_metadata;
    if (cfg.data.synthetic) {
        const auto& market = cfg.data.synthetic->market;
        shared_metadata["data"] = {{"kind", "synthetic"},
                                   {"num_properties", market.num_properties},
                                   {"feature_dim", market.feature_dim},
                                   {"noise_scale", market.noise_scale},
                                   {"regressivity_strength", market.regressivity_strength},
                                   {"seed", market.seed},
                                   {"assessment_properties", cfg.data.synthetic->assessment_properties},
                                   {"assessment_seed", market.seed + kAssessmentSeedOffset}};
    } else {
        shared_metadata["data"] = {{"kind", "csv"}, {"path", cfg.data.csv->path}};
    }
    shared_metadata["splits"] = {{"train_fraction", cfg.splits.train_fraction},
                                 {"validation_windows", cfg.splits.validation_windows}};
    shared_metadata["gbm"] = gbm_config_to_json(prep.gbm);
    shared_metadata["r2_scale"] = cfg.report.r2_scale;
    shared_metadata["eval_split"] =
        cfg.report.eval_split == "assessment" && !prep.assessment.empty() ? "assessment" : "test";
    if (cfg.metrics.baseline) shared_metadata["baseline"] = *cfg.metrics.baseline;

    for (std::size_t i = 0; i < result.reports.size(); ++i) {
        const ModelEntry& entry = cfg.models[i];
        nlohmann::ordered_json metadata = shared_metadata;
        metadata["K"] = entry.scheme.num_segments();
        metadata["eta"] = entry.scheme.boundaries();
        metadata["smoothing"] = smoothing_spec_to_json(entry.smoothing);
        const auto path =
            result.out_dir / ("report_" + detail::sanitize_filename(entry.name) + ".json");
        detail::write_text_file(path, detail::report_to_json(result.reports[i], metadata).dump(2) + "\n");
    }

    {
        std::string csv = "model,accuracy,fairness_metric,fairness_value,on_frontier,on_hull\n";
        for (const ParetoRow& row : result.pareto) {
            csv += row.model + ',' + detail::format_sig10(row.accuracy) + ',' + row.fairness_metric +
                   ',' + detail::format_sig10(row.fairness_value) + ',' +
                   (row.on_frontier ? "true" : "false") + ',' + (row.on_hull ? "true" : "false") + '\n';
        }
        detail::write_text_file(result.out_dir / "pareto.csv", csv);
    }

    {
        std::string csv = "model,bin_center_logprice,median_ratio,count\n";
        for (const EvaluationReport& report : result.reports) {
            for (const TrendBin& bin : report.trend) {
                csv += report.model + ',' + detail::format_sig10(bin.center_logprice) + ',';
                if (bin.median_ratio) csv += detail::format_sig10(*bin.median_ratio);
                csv += ',' + std::to_string(bin.count) + '\n';
            }
        }
        detail::write_text_file(result.out_dir / "trend.csv", csv);
    }

    if (cfg.metrics.baseline) {
        std::size_t baseline_index = 0;
        for (std::size_t i = 0; i < cfg.models.size(); ++i) {
            if (cfg.models[i].name == *cfg.metrics.baseline) baseline_index = i;
        }
        std::string csv = "model,sale_price,baseline_assessment,model_assessment\n";
        for (std::size_t i = 0; i < cfg.models.size(); ++i) {
            if (i == baseline_index) continue;
            for (std::size_t s = 0; s < eval_samples[i].size(); ++s) {
                csv += cfg.models[i].name + ',' +
                       detail::format_sig10(eval_samples[i][s].sale_price) + ',' +
                       detail::format_sig10(eval_samples[baseline_index][s].assessed_value) + ',' +
                       detail::format_sig10(eval_samples[i][s].assessed_value) + '\n';
            }
        }
        detail::write_text_file(result.out_dir / "comparison.csv", csv);
    }

    return result;
}

inline ExperimentResult run_experiment_file(const std::string& config_path) {
    return run_experiment(load_experiment_config(config_path));
}

} // namespace ksegment
