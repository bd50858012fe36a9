#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ksegment/error.hpp"

namespace ksegment {

/// K contiguous quantile segments [b_{k-1}, b_k], k = 1..K, with boundaries
/// 0 = b_0 < b_1 < ... < b_K = 1. Constructed from the K-1 interior
/// boundaries; an empty list gives the single-segment (baseline) scheme.
class SegmentationScheme {
public:
    explicit SegmentationScheme(std::vector<double> interior_boundaries) {
        boundaries_.reserve(interior_boundaries.size() + 2);
        boundaries_.push_back(0.0);
        for (const double b : interior_boundaries) boundaries_.push_back(b);
        boundaries_.push_back(1.0);
        for (std::size_t i = 1; i < boundaries_.size(); ++i) {
            if (!(boundaries_[i - 1] < boundaries_[i])) {
                throw ConfigError("segment boundaries must be strictly increasing within (0,1)");
            }
        }
    }

    int num_segments() const { return static_cast<int>(boundaries_.size()) - 1; }

    /// b_k for k in 0..K.
    double boundary(int k) const { return boundaries_[static_cast<std::size_t>(k)]; }

    // Segment accessors, k in 1..K.
    double lower(int k) const { return boundaries_[static_cast<std::size_t>(k) - 1]; }
    double upper(int k) const { return boundaries_[static_cast<std::size_t>(k)]; }
    double length(int k) const { return upper(k) - lower(k); }
    double midpoint(int k) const { return (lower(k) + upper(k)) / 2.0; }

    const std::vector<double>& boundaries() const { return boundaries_; }

    std::vector<double> interior_boundaries() const {
        return {boundaries_.begin() + 1, boundaries_.end() - 1};
    }

private:
    std::vector<double> boundaries_;
};

enum class SmoothingMethod { unsmoothed, quantile, midpoint_score, distance_score };

inline const char* to_string(SmoothingMethod m) {
    switch (m) {
    case SmoothingMethod::unsmoothed: return "unsmoothed";
    case SmoothingMethod::quantile: return "quantile";
    case SmoothingMethod::midpoint_score: return "midpoint_score";
    default: return "distance_score";
    }
}

inline SmoothingMethod smoothing_method_from_string(const std::string& s) {
    if (s == "unsmoothed") return SmoothingMethod::unsmoothed;
    if (s == "quantile") return SmoothingMethod::quantile;
    if (s == "midpoint_score") return SmoothingMethod::midpoint_score;
    if (s == "distance_score") return SmoothingMethod::distance_score;
    throw ConfigError("unknown smoothing method \"" + s + "\"");
}

/// How submodel predictions are combined across segment boundaries.
/// The quantile method blends the two adjacent submodels through a sigmoid
/// ramp whose shape is set per boundary by blend_lambda/blend_gamma; the
/// score methods weight all K submodels by exponential scores with
/// sharpness mu.
struct SmoothingSpec {
    SmoothingMethod method = SmoothingMethod::unsmoothed;
    std::vector<double> blend_lambda; // quantile method, one per interior boundary
    std::vector<double> blend_gamma;  // quantile method, one per interior boundary
    double mu = 10.0;                 // score methods

    static SmoothingSpec unsmoothed() { return {}; }

    static SmoothingSpec quantile(std::vector<double> lambda, std::vector<double> gamma) {
        SmoothingSpec spec;
        spec.method = SmoothingMethod::quantile;
        spec.blend_lambda = std::move(lambda);
        spec.blend_gamma = std::move(gamma);
        return spec;
    }

    static SmoothingSpec midpoint_score(double mu = 10.0) {
        SmoothingSpec spec;
        spec.method = SmoothingMethod::midpoint_score;
        spec.mu = mu;
        return spec;
    }

    static SmoothingSpec distance_score(double mu = 10.0) {
        SmoothingSpec spec;
        spec.method = SmoothingMethod::distance_score;
        spec.mu = mu;
        return spec;
    }

    void validate(const SegmentationScheme& scheme) const {
        const int K = scheme.num_segments();
        switch (method) {
        case SmoothingMethod::unsmoothed: return;
        case SmoothingMethod::quantile: {
            const std::size_t expected = static_cast<std::size_t>(K) - 1;
            if (blend_lambda.size() != expected || blend_gamma.size() != expected) {
                throw ConfigError("quantile smoothing needs " + std::to_string(expected) +
                                  " lambda and gamma values for K=" + std::to_string(K));
            }
            for (int k = 1; k < K; ++k) {
                const double lambda = blend_lambda[static_cast<std::size_t>(k) - 1];
                const double gamma = blend_gamma[static_cast<std::size_t>(k) - 1];
                if (!(lambda > 0.0)) {
                    throw ConfigError("lambda[" + std::to_string(k) + "] must be positive");
                }
                if (!(scheme.boundary(k - 1) <= scheme.boundary(k) - lambda)) {
                    throw ConfigError("lambda[" + std::to_string(k) +
                                      "] reaches below the previous boundary");
                }
                if (!(scheme.boundary(k) < gamma && gamma <= scheme.boundary(k + 1))) {
                    throw ConfigError("gamma[" + std::to_string(k) +
                                      "] must lie in (boundary k, boundary k+1]");
                }
            }
            return;
        }
        case SmoothingMethod::midpoint_score:
        case SmoothingMethod::distance_score:
            if (!(mu > 0.0)) throw ConfigError("mu must be positive");
            return;
        }
    }
};

/// Nonnegative per-submodel weights summing to 1; weights[k-1] belongs to
/// submodel k.
struct WeightVector {
    std::vector<double> weights;
};

namespace detail {

inline void check_quantile_domain(double y) {
    if (!(y >= 0.0 && y <= 1.0)) {
        throw DomainError("quantile " + std::to_string(y) + " outside [0,1]");
    }
}

} // namespace detail

/// Hard segment assignment: the k with y in [b_{k-1}, b_k). A y exactly on an
/// interior boundary belongs to the segment above it; y = 1 stays in K.
inline int assign_segment(const SegmentationScheme& scheme, double y) {
    detail::check_quantile_domain(y);
    const int K = scheme.num_segments();
    for (int k = 1; k < K; ++k) {
        if (y < scheme.boundary(k)) return k;
    }
    return K;
}

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Sigmoid ramp for the quantile method at interior boundary k (1-based,
/// k < K): strictly decreasing from logistic(5) at the blend start
/// b_k - lambda_k down to logistic(-5) at gamma_k.
inline double sigmoid_blend(const SegmentationScheme& scheme, const SmoothingSpec& spec, int k,
                            double y) {
    if (spec.method != SmoothingMethod::quantile) {
        throw DomainError("sigmoid_blend requires the quantile smoothing method");
    }
    if (k < 1 || k >= scheme.num_segments()) {
        throw DomainError("blend boundary index " + std::to_string(k) + " out of range");
    }
    const double lambda = spec.blend_lambda[static_cast<std::size_t>(k) - 1];
    const double gamma = spec.blend_gamma[static_cast<std::size_t>(k) - 1];
    const double lo = scheme.boundary(k) - lambda;
    if (!(y >= lo && y <= gamma)) {
        throw DomainError("y = " + std::to_string(y) + " outside the blend interval [" +
                          std::to_string(lo) + ", " + std::to_string(gamma) + "]");
    }
    const double width = gamma - scheme.boundary(k) + lambda;
    return logistic(-10.0 / width * (y - gamma) - 5.0);
}

/// Midpoint scores: exp(-(mu / segment length) * |y - segment midpoint|) per
/// segment. All strictly positive; exactly 1 at the midpoint.
inline std::vector<double> midpoint_scores(const SegmentationScheme& scheme, double mu, double y) {
    detail::check_quantile_domain(y);
    if (!(mu > 0.0)) throw DomainError("mu must be positive");
    const int K = scheme.num_segments();
    std::vector<double> scores(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) {
        const double rate = mu / scheme.length(k);
        scores[static_cast<std::size_t>(k) - 1] = std::exp(-rate * std::abs(y - scheme.midpoint(k)));
    }
    return scores;
}

/// Distance scores: exp(-(mu / segment length) * dist(y, segment)) where the
/// distance to the closed segment interval is 0 inside it.
inline std::vector<double> distance_scores(const SegmentationScheme& scheme, double mu, double y) {
    detail::check_quantile_domain(y);
    if (!(mu > 0.0)) throw DomainError("mu must be positive");
    const int K = scheme.num_segments();
    std::vector<double> scores(static_cast<std::size_t>(K));
    for (int k = 1; k <= K; ++k) {
        const double rate = mu / scheme.length(k);
        const double dist = std::max({0.0, scheme.lower(k) - y, y - scheme.upper(k)});
        scores[static_cast<std::size_t>(k) - 1] = std::exp(-rate * dist);
    }
    return scores;
}

namespace detail {

/// Normalized weights from log-scores, shifted by the maximum so extreme mu
/// values cannot underflow the whole score vector.
inline WeightVector normalize_log_scores(std::vector<double> log_scores) {
    double max_ls = log_scores[0];
    for (const double ls : log_scores) max_ls = std::max(max_ls, ls);
    double sum = 0.0;
    for (double& ls : log_scores) {
        ls = std::exp(ls - max_ls);
        sum += ls;
    }
    for (double& w : log_scores) w /= sum;
    return WeightVector{std::move(log_scores)};
}

} // namespace detail

/// Per-submodel combination weights at quantile y.
///   unsmoothed     one-hot at the assigned segment;
///   quantile       sigmoid split between the two submodels adjacent to a
///                  boundary inside the blend window [b_k - lambda_k,
///                  gamma_k), one-hot in the pure regions between windows;
///   score methods  scores normalized over all K submodels.
inline WeightVector weights(const SegmentationScheme& scheme, const SmoothingSpec& spec, double y) {
    detail::check_quantile_domain(y);
    const int K = scheme.num_segments();
    switch (spec.method) {
    case SmoothingMethod::unsmoothed: {
        std::vector<double> w(static_cast<std::size_t>(K), 0.0);
        w[static_cast<std::size_t>(assign_segment(scheme, y)) - 1] = 1.0;
        return WeightVector{std::move(w)};
    }
    case SmoothingMethod::quantile: {
        std::vector<double> w(static_cast<std::size_t>(K), 0.0);
        for (int k = 1; k < K; ++k) {
            const double lo = scheme.boundary(k) - spec.blend_lambda[static_cast<std::size_t>(k) - 1];
            const double hi = spec.blend_gamma[static_cast<std::size_t>(k) - 1];
            if (y >= lo && y < hi) {
                const double g = sigmoid_blend(scheme, spec, k, y);
                w[static_cast<std::size_t>(k) - 1] = g;
                w[static_cast<std::size_t>(k)] = 1.0 - g;
                return WeightVector{std::move(w)};
            }
        }
        // Pure region: the submodel just above the last blend window below y.
        int segment = 1;
        for (int k = 1; k < K; ++k) {
            if (y >= spec.blend_gamma[static_cast<std::size_t>(k) - 1]) segment = k + 1;
        }
        w[static_cast<std::size_t>(segment) - 1] = 1.0;
        return WeightVector{std::move(w)};
    }
    case SmoothingMethod::midpoint_score:
    case SmoothingMethod::distance_score: {
        if (!(spec.mu > 0.0)) throw DomainError("mu must be positive");
        std::vector<double> log_scores(static_cast<std::size_t>(K));
        for (int k = 1; k <= K; ++k) {
            const double rate = spec.mu / scheme.length(k);
            const double dist = spec.method == SmoothingMethod::midpoint_score
                                    ? std::abs(y - scheme.midpoint(k))
                                    : std::max({0.0, scheme.lower(k) - y, y - scheme.upper(k)});
            log_scores[static_cast<std::size_t>(k) - 1] = -rate * dist;
        }
        return detail::normalize_log_scores(std::move(log_scores));
    }
    }
    throw DomainError("unhandled smoothing method");
}

// --- built-in segmentation presets ------------------------------------------

/// A named segmentation plus the smoothing hyper-parameters published with it.
struct SegmentationPreset {
    std::string name;
    std::vector<double> interior_boundaries;
    std::vector<double> blend_lambda;
    std::vector<double> blend_gamma;
    double mu = 10.0;

    SegmentationScheme scheme() const { return SegmentationScheme(interior_boundaries); }

    SmoothingSpec smoothing(SmoothingMethod method) const {
        switch (method) {
        case SmoothingMethod::unsmoothed: return SmoothingSpec::unsmoothed();
        case SmoothingMethod::quantile: return SmoothingSpec::quantile(blend_lambda, blend_gamma);
        case SmoothingMethod::midpoint_score: return SmoothingSpec::midpoint_score(mu);
        default: return SmoothingSpec::distance_score(mu);
        }
    }
};

/// Built-in presets: "k3-default" and "k5-default".
inline const SegmentationPreset& preset(std::string_view name) {
    static const SegmentationPreset k3{"k3-default", {0.1, 0.9}, {0.1, 0.1}, {0.2, 1.0}, 10.0};
    static const SegmentationPreset k5{
        "k5-default", {0.2, 0.35, 0.7, 0.9}, {0.15, 0.03, 0.1, 0.1}, {0.3, 0.5, 0.73, 1.0}, 10.0};
    if (name == k3.name) return k3;
    if (name == k5.name) return k5;
    throw ConfigError("unknown preset \"" + std::string(name) + "\"");
}

} // namespace ksegment
