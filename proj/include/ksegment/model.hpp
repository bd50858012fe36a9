#pragma once

#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ksegment/dataset.hpp"
#include "ksegment/error.hpp"
#include "ksegment/gbm.hpp"
#include "ksegment/quantile.hpp"
#include "ksegment/segmentation.hpp"

namespace ksegment {

/// A trained ensemble of per-segment submodels. prior_index is the quantile
/// index over the training set's prior assessments, frozen at training time;
/// every assessment, in or out of sample, ranks against it.
struct KSegmentModel {
    SegmentationScheme scheme;
    SmoothingSpec spec;
    std::vector<GBMModel> submodels;
    QuantileIndex prior_index;
    int feature_dim = 0;

    double prior_quantile(double prior_assessment) const {
        return prior_index.quantile_of(prior_assessment);
    }

    /// Weighted combination of all submodel predictions at the record's
    /// prior-assessment quantile. One-hot weights reduce this to the single
    /// assigned submodel.
    double assess(const PropertyRecord& record) const {
        if (static_cast<int>(record.features.size()) != feature_dim) {
            throw PredictionError("feature dimension " + std::to_string(record.features.size()) +
                                  " does not match the model's " + std::to_string(feature_dim));
        }
        const double y = prior_index.quantile_of(record.prior_assessment);
        const WeightVector w = weights(scheme, spec, y);
        double value = 0.0;
        for (std::size_t k = 0; k < submodels.size(); ++k) {
            value += w.weights[k] * submodels[k].predict(record.features);
        }
        return value;
    }
};

/// Trains one submodel per segment on hard-assigned records. Records are
/// ranked by prior assessment against the training population itself;
/// smoothing never changes the training populations, only prediction weights.
inline KSegmentModel train_ksegment(std::span<const PropertyRecord> train,
                                    const SegmentationScheme& scheme, const SmoothingSpec& spec,
                                    const GBMConfig& gbm_config) {
    spec.validate(scheme);
    gbm_config.validate();
    if (train.empty()) {
        throw TrainingError("empty training set");
    }

    const int feature_dim = static_cast<int>(train[0].features.size());
    std::vector<double> priors;
    priors.reserve(train.size());
    for (const PropertyRecord& rec : train) {
        if (!rec.sale_price) {
            throw TrainingError("record \"" + rec.id + "\" has no sale price");
        }
        if (!(rec.prior_assessment > 0.0)) {
            throw TrainingError("record \"" + rec.id + "\" has a non-positive prior assessment");
        }
        priors.push_back(rec.prior_assessment);
    }
    QuantileIndex prior_index(std::move(priors));

    const int K = scheme.num_segments();
    std::vector<std::vector<Sample>> buckets(static_cast<std::size_t>(K));
    for (const PropertyRecord& rec : train) {
        const double y = prior_index.quantile_of(rec.prior_assessment);
        const int k = assign_segment(scheme, y);
        buckets[static_cast<std::size_t>(k) - 1].push_back(Sample{rec.features, *rec.sale_price});
    }

    std::vector<GBMModel> submodels;
    submodels.reserve(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) {
        const auto& bucket = buckets[static_cast<std::size_t>(k) - 1];
        if (bucket.empty()) {
            std::ostringstream msg;
            msg << "segment " << k << " [" << scheme.lower(k) << ", " << scheme.upper(k)
                << "] received no training records";
            throw TrainingError(msg.str());
        }
        submodels.push_back(fit(bucket, gbm_config));
    }

    return KSegmentModel{scheme, spec, std::move(submodels), std::move(prior_index), feature_dim};
}

inline double assess(const KSegmentModel& model, const PropertyRecord& record) {
    return model.assess(record);
}

// --- serialization ----------------------------------------------------------

inline constexpr const char* kKSegmentVersion = "ksegment/1";

inline nlohmann::ordered_json smoothing_spec_to_json(const SmoothingSpec& spec) {
    nlohmann::ordered_json j;
    j["method"] = to_string(spec.method);
    if (spec.method == SmoothingMethod::quantile) {
        j["lambda"] = spec.blend_lambda;
        j["gamma"] = spec.blend_gamma;
    }
    if (spec.method == SmoothingMethod::midpoint_score ||
        spec.method == SmoothingMethod::distance_score) {
        j["mu"] = spec.mu;
    }
    return j;
}

inline SmoothingSpec smoothing_spec_from_json(const nlohmann::json& j) {
    SmoothingSpec spec;
    spec.method = smoothing_method_from_string(j.at("method").get<std::string>());
    if (spec.method == SmoothingMethod::quantile) {
        spec.blend_lambda = j.at("lambda").get<std::vector<double>>();
        spec.blend_gamma = j.at("gamma").get<std::vector<double>>();
    }
    if (j.contains("mu")) spec.mu = j.at("mu").get<double>();
    return spec;
}

inline nlohmann::ordered_json model_to_json(const KSegmentModel& model) {
    nlohmann::ordered_json j;
    j["version"] = kKSegmentVersion;
    j["eta"] = model.scheme.boundaries();
    j["smoothing"] = smoothing_spec_to_json(model.spec);
    j["feature_dim"] = model.feature_dim;
    j["prior_index"] = model.prior_index.sorted_values();
    auto& subs = j["submodels"] = nlohmann::ordered_json::array();
    for (const GBMModel& sub : model.submodels) subs.push_back(gbm_to_json(sub));
    return j;
}

inline KSegmentModel model_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("version") || j.at("version") != kKSegmentVersion) {
        throw SerializationError("expected a \"" + std::string(kKSegmentVersion) + "\" document");
    }
    try {
        auto boundaries = j.at("eta").get<std::vector<double>>();
        if (boundaries.size() < 2) {
            throw SerializationError("boundary list too short");
        }
        SegmentationScheme scheme(
            std::vector<double>(boundaries.begin() + 1, boundaries.end() - 1));
        SmoothingSpec spec = smoothing_spec_from_json(j.at("smoothing"));
        spec.validate(scheme);
        std::vector<GBMModel> submodels;
        for (const auto& sub : j.at("submodels")) submodels.push_back(gbm_from_json(sub));
        if (static_cast<int>(submodels.size()) != scheme.num_segments()) {
            throw SerializationError("submodel count does not match the segment count");
        }
        QuantileIndex prior_index(j.at("prior_index").get<std::vector<double>>());
        const int feature_dim = j.at("feature_dim").get<int>();
        for (const GBMModel& sub : submodels) {
            if (sub.feature_dim != feature_dim) {
                throw SerializationError("submodel feature dimensions disagree with the ensemble");
            }
        }
        return KSegmentModel{std::move(scheme), std::move(spec), std::move(submodels),
                             std::move(prior_index), feature_dim};
    } catch (const nlohmann::json::exception& e) {
        throw SerializationError(std::string("malformed model document: ") + e.what());
    }
}

inline void save_model(const KSegmentModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw SerializationError("cannot write \"" + path + "\"");
    }
    out << model_to_json(model).dump(2) << '\n';
    if (!out) {
        throw SerializationError("write to \"" + path + "\" failed");
    }
}

inline KSegmentModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw SerializationError("cannot open \"" + path + "\"");
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw SerializationError("truncated or invalid model file \"" + path + "\": " + e.what());
    }
    return model_from_json(j);
}

} // namespace ksegment
