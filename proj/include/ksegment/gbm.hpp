#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ksegment/error.hpp"
#include "ksegment/rng.hpp"

namespace ksegment {

enum class TargetTransform { identity, log };

inline const char* to_string(TargetTransform t) {
    return t == TargetTransform::log ? "log" : "identity";
}

inline TargetTransform target_transform_from_string(const std::string& s) {
    if (s == "log") return TargetTransform::log;
    if (s == "identity") return TargetTransform::identity;
    throw ConfigError("unknown target_transform \"" + s + "\"");
}

struct GBMConfig {
    int num_trees = 150;
    double learning_rate = 0.1;
    int max_depth = 4;
    int min_samples_leaf = 5;
    TargetTransform target_transform = TargetTransform::log;
    int random_search_budget = 0;

    void validate() const {
        if (num_trees < 0) throw ConfigError("num_trees must be >= 0");
        if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
            throw ConfigError("learning_rate must be in (0,1]");
        }
        if (max_depth < 1) throw ConfigError("max_depth must be >= 1");
        if (min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
        if (random_search_budget < 0) throw ConfigError("random_search_budget must be >= 0");
    }
};

/// Flat tree node; feature < 0 marks a leaf.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes; // nodes[0] is the root

    double output(std::span<const double> features) const {
        std::int32_t i = 0;
        while (!nodes[static_cast<std::size_t>(i)].is_leaf()) {
            const TreeNode& node = nodes[static_cast<std::size_t>(i)];
            i = features[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
        }
        return nodes[static_cast<std::size_t>(i)].value;
    }
};

struct Sample {
    std::vector<double> features;
    double target = 0.0;
};

/// Boosted ensemble. Prediction is
///   inverse_transform(base_score + learning_rate * sum of tree outputs).
struct GBMModel {
    GBMConfig config;
    int feature_dim = 0;
    double base_score = 0.0;
    std::vector<Tree> trees;

    double predict(std::span<const double> features) const {
        if (static_cast<int>(features.size()) != feature_dim) {
            throw PredictionError("feature dimension " + std::to_string(features.size()) +
                                  " does not match the model's " + std::to_string(feature_dim));
        }
        double acc = 0.0;
        for (const Tree& tree : trees) acc += tree.output(features);
        const double raw = base_score + config.learning_rate * acc;
        return config.target_transform == TargetTransform::log ? std::exp(raw) : raw;
    }
};

namespace detail {

/// Sum in ascending value order, so the result depends only on the multiset.
inline double ordered_sum(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (const double v : values) sum += v;
    return sum;
}

struct SplitCandidate {
    bool found = false;
    int feature = -1;
    double threshold = 0.0;
};

/// Greedy exact regression-tree builder over residuals. Split search sorts
/// each node by (feature value, residual), and leaf means sum residuals in
/// sorted order, so the fitted tree depends only on the sample multiset, not
/// on input order. Equal-gain ties resolve to the lowest feature index, then
/// the lowest threshold.
class TreeBuilder {
public:
    TreeBuilder(std::span<const Sample> samples, const std::vector<double>& residuals,
                const GBMConfig& config)
        : samples_(samples), residuals_(residuals), config_(config) {}

    Tree build() {
        Tree tree;
        std::vector<std::uint32_t> all(samples_.size());
        std::iota(all.begin(), all.end(), 0u);
        grow(tree, std::move(all), 0);
        return tree;
    }

private:
    std::int32_t grow(Tree& tree, std::vector<std::uint32_t> idx, int depth) {
        const std::int32_t slot = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();

        std::vector<double> node_residuals(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) node_residuals[i] = residuals_[idx[i]];
        const double node_sum = ordered_sum(node_residuals);
        const double node_n = static_cast<double>(idx.size());

        SplitCandidate split;
        if (depth < config_.max_depth &&
            idx.size() >= 2 * static_cast<std::size_t>(config_.min_samples_leaf)) {
            split = find_split(idx, node_sum);
        }
        if (!split.found) {
            tree.nodes[static_cast<std::size_t>(slot)].value = node_sum / node_n;
            return slot;
        }

        std::vector<std::uint32_t> left, right;
        for (const std::uint32_t i : idx) {
            (samples_[i].features[static_cast<std::size_t>(split.feature)] <= split.threshold ? left : right)
                .push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();

        const std::int32_t left_slot = grow(tree, std::move(left), depth + 1);
        const std::int32_t right_slot = grow(tree, std::move(right), depth + 1);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(slot)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = left_slot;
        node.right = right_slot;
        return slot;
    }

    SplitCandidate find_split(const std::vector<std::uint32_t>& idx, double node_sum) {
        const std::size_t n = idx.size();
        const std::size_t min_leaf = static_cast<std::size_t>(config_.min_samples_leaf);
        const int feature_dim = static_cast<int>(samples_[idx[0]].features.size());

        std::vector<double> node_sq(n);
        for (std::size_t i = 0; i < n; ++i) node_sq[i] = residuals_[idx[i]] * residuals_[idx[i]];
        const double node_sse = ordered_sum(std::move(node_sq)) - node_sum * node_sum / static_cast<double>(n);

        SplitCandidate best;
        double best_score = -std::numeric_limits<double>::infinity();
        std::vector<std::uint32_t> order(idx);

        for (int f = 0; f < feature_dim; ++f) {
            const std::size_t fu = static_cast<std::size_t>(f);
            std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
                const double xa = samples_[a].features[fu];
                const double xb = samples_[b].features[fu];
                if (xa != xb) return xa < xb;
                return residuals_[a] < residuals_[b];
            });
            double total = 0.0;
            for (const std::uint32_t i : order) total += residuals_[i];

            double prefix = 0.0;
            for (std::size_t p = 1; p < n; ++p) {
                prefix += residuals_[order[p - 1]];
                if (p < min_leaf || n - p < min_leaf) continue;
                const double lo = samples_[order[p - 1]].features[fu];
                const double hi = samples_[order[p]].features[fu];
                if (!(lo < hi)) continue;
                const double suffix = total - prefix;
                const double score = prefix * prefix / static_cast<double>(p) +
                                     suffix * suffix / static_cast<double>(n - p);
                if (score > best_score) {
                    best_score = score;
                    best.found = true;
                    best.feature = f;
                    best.threshold = lo + (hi - lo) / 2.0;
                }
            }
        }

        const double gain = best_score - node_sum * node_sum / static_cast<double>(n);
        if (!best.found || !(gain > 1e-12 * std::max(node_sse, 1e-12))) {
            best.found = false;
        }
        return best;
    }

    std::span<const Sample> samples_;
    const std::vector<double>& residuals_;
    const GBMConfig& config_;
};

inline double r2_raw(std::span<const double> predictions, std::span<const double> truths) {
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
    if (!(ss_tot > 0.0)) return -std::numeric_limits<double>::infinity();
    return 1.0 - ss_res / ss_tot;
}

} // namespace detail

/// Fits depth-limited regression trees to the residuals of the transformed
/// target. Deterministic in the sample multiset: permuting the training order
/// yields an identical model.
inline GBMModel fit(std::span<const Sample> train, const GBMConfig& config) {
    config.validate();
    if (train.size() < 2) {
        throw TrainingError("need at least 2 training samples, got " + std::to_string(train.size()));
    }
    if (train.size() < static_cast<std::size_t>(config.min_samples_leaf)) {
        throw TrainingError("fewer samples (" + std::to_string(train.size()) +
                            ") than min_samples_leaf (" + std::to_string(config.min_samples_leaf) + ")");
    }
    const int feature_dim = static_cast<int>(train[0].features.size());
    for (const Sample& s : train) {
        if (static_cast<int>(s.features.size()) != feature_dim) {
            throw TrainingError("inconsistent feature dimensions in training data");
        }
    }

    std::vector<double> targets(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        double t = train[i].target;
        if (config.target_transform == TargetTransform::log) {
            if (!(t > 0.0)) {
                throw TrainingError("non-positive target under the log transform");
            }
            t = std::log(t);
        }
        targets[i] = t;
    }

    GBMModel model;
    model.config = config;
    model.feature_dim = feature_dim;
    model.base_score = detail::ordered_sum(targets) / static_cast<double>(targets.size());

    std::vector<double> residuals(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) residuals[i] = targets[i] - model.base_score;

    model.trees.reserve(static_cast<std::size_t>(config.num_trees));
    for (int t = 0; t < config.num_trees; ++t) {
        detail::TreeBuilder builder(train, residuals, config);
        Tree tree = builder.build();
        for (std::size_t i = 0; i < train.size(); ++i) {
            residuals[i] -= config.learning_rate * tree.output(train[i].features);
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

inline double predict(const GBMModel& model, std::span<const double> features) {
    return model.predict(features);
}

struct TuneFold {
    std::vector<Sample> fit;
    std::vector<Sample> validation;
};

/// Seeded random search over a fixed desk-scale grid. Scores each candidate
/// by mean validation R-squared across the rolling-origin folds and returns
/// the best of the sampled set; a zero budget returns the input unchanged.
inline GBMConfig tune(std::span<const TuneFold> folds, const GBMConfig& config,
                      std::uint64_t seed = 0) {
    config.validate();
    if (config.random_search_budget == 0) return config;
    if (folds.empty()) throw TrainingError("tune requires at least one fold");

    Rng rng(seed);
    GBMConfig best = config;
    double best_score = -std::numeric_limits<double>::infinity();

    for (int b = 0; b < config.random_search_budget; ++b) {
        GBMConfig candidate = config;
        candidate.num_trees = static_cast<int>(rng.uniform_int(50, 300));
        candidate.learning_rate = std::exp(rng.uniform(std::log(0.03), std::log(0.3)));
        candidate.max_depth = static_cast<int>(rng.uniform_int(2, 6));
        candidate.min_samples_leaf = static_cast<int>(rng.uniform_int(5, 40));

        double score_sum = 0.0;
        for (const TuneFold& fold : folds) {
            const GBMModel model = fit(fold.fit, candidate);
            std::vector<double> predictions(fold.validation.size());
            std::vector<double> truths(fold.validation.size());
            for (std::size_t i = 0; i < fold.validation.size(); ++i) {
                predictions[i] = model.predict(fold.validation[i].features);
                truths[i] = fold.validation[i].target;
            }
            score_sum += detail::r2_raw(predictions, truths);
        }
        const double score = score_sum / static_cast<double>(folds.size());
        if (score > best_score) {
            best_score = score;
            best = candidate;
        }
    }
    return best;
}

// --- serialization ---------------------------------------------------------

inline constexpr const char* kGbmVersion = "gbm/1";

namespace detail {

inline nlohmann::ordered_json tree_node_to_json(const Tree& tree, std::int32_t index) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
    if (node.is_leaf()) {
        return {{"value", node.value}};
    }
    nlohmann::ordered_json j;
    j["feature"] = node.feature;
    j["threshold"] = node.threshold;
    j["left"] = tree_node_to_json(tree, node.left);
    j["right"] = tree_node_to_json(tree, node.right);
    return j;
}

inline std::int32_t tree_node_from_json(const nlohmann::json& j, Tree& tree) {
    const std::int32_t slot = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("value")) {
        tree.nodes[static_cast<std::size_t>(slot)].value = j.at("value").get<double>();
        return slot;
    }
    const int feature = j.at("feature").get<int>();
    const double threshold = j.at("threshold").get<double>();
    const std::int32_t left = tree_node_from_json(j.at("left"), tree);
    const std::int32_t right = tree_node_from_json(j.at("right"), tree);
    TreeNode& node = tree.nodes[static_cast<std::size_t>(slot)];
    node.feature = feature;
    node.threshold = threshold;
    node.left = left;
    node.right = right;
    return slot;
}

} // namespace detail

inline nlohmann::ordered_json gbm_config_to_json(const GBMConfig& config) {
    return {{"num_trees", config.num_trees},
            {"learning_rate", config.learning_rate},
            {"max_depth", config.max_depth},
            {"min_samples_leaf", config.min_samples_leaf},
            {"target_transform", to_string(config.target_transform)},
            {"random_search_budget", config.random_search_budget}};
}

inline GBMConfig gbm_config_from_json(const nlohmann::json& j) {
    GBMConfig config;
    config.num_trees = j.at("num_trees").get<int>();
    config.learning_rate = j.at("learning_rate").get<double>();
    config.max_depth = j.at("max_depth").get<int>();
    config.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    config.target_transform = target_transform_from_string(j.at("target_transform").get<std::string>());
    config.random_search_budget = j.at("random_search_budget").get<int>();
    config.validate();
    return config;
}

inline nlohmann::ordered_json gbm_to_json(const GBMModel& model) {
    nlohmann::ordered_json j;
    j["version"] = kGbmVersion;
    j["config"] = gbm_config_to_json(model.config);
    j["feature_dim"] = model.feature_dim;
    j["base_score"] = model.base_score;
    auto& trees = j["trees"] = nlohmann::ordered_json::array();
    for (const Tree& tree : model.trees) trees.push_back(detail::tree_node_to_json(tree, 0));
    return j;
}

inline GBMModel gbm_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("version") || j.at("version") != kGbmVersion) {
        throw SerializationError("expected a \"" + std::string(kGbmVersion) + "\" document");
    }
    try {
        GBMModel model;
        model.config = gbm_config_from_json(j.at("config"));
        model.feature_dim = j.at("feature_dim").get<int>();
        model.base_score = j.at("base_score").get<double>();
        for (const auto& tree_json : j.at("trees")) {
            Tree tree;
            detail::tree_node_from_json(tree_json, tree);
            model.trees.push_back(std::move(tree));
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw SerializationError(std::string("malformed model document: ") + e.what());
    }
}

} // namespace ksegment
