#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "ksegment/rng.hpp"
#include "ksegment/segmentation.hpp"

using namespace ksegment;
using Catch::Matchers::WithinAbs;

namespace {

const double kSigma5 = logistic(5.0);   // 0.993307...
const double kSigmaM5 = logistic(-5.0); // 0.006692...

SegmentationScheme figure_scheme() { return SegmentationScheme({0.1, 0.35, 0.7, 0.95}); }

double weight_sum(const WeightVector& w) {
    double sum = 0.0;
    for (const double x : w.weights) sum += x;
    return sum;
}

} // namespace

TEST_CASE("scheme construction and accessors") {
    const SegmentationScheme k3({0.1, 0.9});
    CHECK(k3.num_segments() == 3);
    CHECK(k3.boundary(0) == 0.0);
    CHECK(k3.boundary(3) == 1.0);
    CHECK(k3.lower(2) == 0.1);
    CHECK(k3.upper(2) == 0.9);
    CHECK(k3.length(2) == 0.8);
    CHECK(k3.midpoint(2) == 0.5);

    const SegmentationScheme single({});
    CHECK(single.num_segments() == 1);

    CHECK_THROWS_AS(SegmentationScheme({0.9, 0.1}), ConfigError);
    CHECK_THROWS_AS(SegmentationScheme({0.0, 0.5}), ConfigError);
    CHECK_THROWS_AS(SegmentationScheme({0.5, 1.0}), ConfigError);
}

TEST_CASE("assign_segment follows the boundary tie-break") {
    const SegmentationScheme scheme({0.1, 0.9});
    CHECK(assign_segment(scheme, 0.5) == 2);
    CHECK(assign_segment(scheme, 0.1) == 2); // boundary goes to the segment above
    CHECK(assign_segment(scheme, 1.0) == 3); // the top stays in K
    CHECK(assign_segment(scheme, 0.0) == 1);
    CHECK(assign_segment(scheme, 0.9) == 3);
    CHECK_THROWS_AS(assign_segment(scheme, -0.01), DomainError);
    CHECK_THROWS_AS(assign_segment(scheme, 1.01), DomainError);
}

TEST_CASE("sigmoid_blend hits its published endpoints") {
    for (const char* name : {"k3-default", "k5-default"}) {
        const SegmentationPreset& pre = preset(name);
        const SegmentationScheme scheme = pre.scheme();
        const SmoothingSpec spec = pre.smoothing(SmoothingMethod::quantile);
        for (int k = 1; k < scheme.num_segments(); ++k) {
            const double lo = scheme.boundary(k) - spec.blend_lambda[static_cast<std::size_t>(k) - 1];
            const double hi = spec.blend_gamma[static_cast<std::size_t>(k) - 1];
            CHECK_THAT(sigmoid_blend(scheme, spec, k, lo), WithinAbs(kSigma5, 1e-9));
            CHECK_THAT(sigmoid_blend(scheme, spec, k, hi), WithinAbs(kSigmaM5, 1e-9));
            CHECK_THAT(sigmoid_blend(scheme, spec, k, (lo + hi) / 2.0), WithinAbs(0.5, 1e-12));

            // strictly decreasing across the blend window
            double prev = sigmoid_blend(scheme, spec, k, lo);
            for (int i = 1; i <= 20; ++i) {
                const double y = lo + (hi - lo) * i / 20.0;
                const double g = sigmoid_blend(scheme, spec, k, y);
                CHECK(g < prev);
                prev = g;
            }
            CHECK_THROWS_AS(sigmoid_blend(scheme, spec, k, lo - 1e-6), DomainError);
            CHECK_THROWS_AS(sigmoid_blend(scheme, spec, k, hi + 1e-6), DomainError);
        }
    }
}

TEST_CASE("sigmoid_blend requires the quantile method") {
    const SegmentationScheme scheme({0.5});
    CHECK_THROWS_AS(sigmoid_blend(scheme, SmoothingSpec::unsmoothed(), 1, 0.5), DomainError);
}

TEST_CASE("midpoint scores match a scalar evaluation") {
    const SegmentationScheme scheme({0.5});
    const auto scores = midpoint_scores(scheme, 10.0, 0.25);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0] == 1.0); // zero distance to segment 1's midpoint
    CHECK_THAT(scores[1], WithinAbs(std::exp(-10.0), 1e-15));

    // all strictly positive everywhere
    for (double y = 0.0; y <= 1.0; y += 0.05) {
        for (const double s : midpoint_scores(scheme, 10.0, y)) {
            CHECK(s > 0.0);
            CHECK(s <= 1.0);
        }
    }
    CHECK_THROWS_AS(midpoint_scores(scheme, -1.0, 0.5), DomainError);
}

TEST_CASE("distance scores are 1 exactly inside the owning segment") {
    const SegmentationScheme scheme({0.5});
    const auto inside = distance_scores(scheme, 10.0, 0.2);
    CHECK(inside[0] == 1.0);
    CHECK(inside[1] < 1.0);

    const auto boundary = distance_scores(scheme, 10.0, 0.5);
    CHECK(boundary[0] == 1.0); // the boundary belongs to both closed intervals
    CHECK(boundary[1] == 1.0);
    const auto w = weights(scheme, SmoothingSpec::distance_score(10.0), 0.5);
    CHECK(w.weights[0] == 0.5);
    CHECK(w.weights[1] == 0.5);

    const auto above = distance_scores(scheme, 10.0, 0.75);
    CHECK_THAT(above[0], WithinAbs(std::exp(-5.0), 1e-15)); // dist 0.25 at rate 20
    CHECK(above[1] == 1.0);
}

TEST_CASE("unsmoothed weights are one-hot at the assigned segment") {
    const SegmentationScheme scheme({0.2, 0.35, 0.7, 0.9});
    const SmoothingSpec spec = SmoothingSpec::unsmoothed();
    for (double y = 0.0; y <= 1.0; y += 0.01) {
        const WeightVector w = weights(scheme, spec, y);
        const int k = assign_segment(scheme, y);
        for (int i = 1; i <= scheme.num_segments(); ++i) {
            CHECK(w.weights[static_cast<std::size_t>(i) - 1] == (i == k ? 1.0 : 0.0));
        }
    }
}

TEST_CASE("quantile weights: pure regions are one-hot, blends split the pair") {
    const SegmentationPreset& pre = preset("k5-default");
    const SegmentationScheme scheme = pre.scheme();
    const SmoothingSpec spec = pre.smoothing(SmoothingMethod::quantile);

    // y = 0.4: above gamma_1 = 0.3, below eta_2 - lambda_2 = 0.32? No: 0.4 is
    // past that window's start, inside the second blend window [0.32, 0.5).
    const WeightVector blended = weights(scheme, spec, 0.4);
    CHECK(blended.weights[1] == sigmoid_blend(scheme, spec, 2, 0.4));
    CHECK(blended.weights[2] == 1.0 - sigmoid_blend(scheme, spec, 2, 0.4));

    // y = 0.31: between gamma_1 = 0.3 and eta_2 - lambda_2 = 0.32, pure S_2.
    const WeightVector pure = weights(scheme, spec, 0.31);
    CHECK(pure.weights[1] == 1.0);

    // blend-window left endpoint: the (sigma(5), sigma(-5)) proportioned pair
    const double left = scheme.boundary(2) - spec.blend_lambda[1];
    const WeightVector at_left = weights(scheme, spec, left);
    CHECK_THAT(at_left.weights[1], WithinAbs(kSigma5, 1e-12));
    CHECK_THAT(at_left.weights[2], WithinAbs(kSigmaM5, 1e-12));

    // gamma_k itself starts the pure region of the next submodel
    const WeightVector at_gamma = weights(scheme, spec, spec.blend_gamma[1]);
    CHECK(at_gamma.weights[2] == 1.0);

    // top of the domain stays with the last submodel (gamma_4 = 1.0)
    const WeightVector top = weights(scheme, spec, 1.0);
    CHECK(top.weights[4] == 1.0);
}

TEST_CASE("weights are nonnegative and sum to one for every method") {
    std::vector<std::pair<SegmentationScheme, SmoothingSpec>> cases;
    for (const char* name : {"k3-default", "k5-default"}) {
        const SegmentationPreset& pre = preset(name);
        for (const SmoothingMethod method :
             {SmoothingMethod::unsmoothed, SmoothingMethod::quantile, SmoothingMethod::midpoint_score,
              SmoothingMethod::distance_score}) {
            cases.emplace_back(pre.scheme(), pre.smoothing(method));
        }
    }
    // plus the figure parameter set with both score methods
    cases.emplace_back(figure_scheme(), SmoothingSpec::midpoint_score(10.0));
    cases.emplace_back(figure_scheme(), SmoothingSpec::distance_score(10.0));

    for (const auto& [scheme, spec] : cases) {
        for (int i = 0; i <= 2000; ++i) {
            const double y = static_cast<double>(i) / 2000.0;
            const WeightVector w = weights(scheme, spec, y);
            REQUIRE(w.weights.size() == static_cast<std::size_t>(scheme.num_segments()));
            for (const double x : w.weights) CHECK(x >= 0.0);
            CHECK_THAT(weight_sum(w), WithinAbs(1.0, 1e-12));
        }
    }
}

TEST_CASE("distance-score weight is the strict maximum inside its segment") {
    Rng rng(404);
    for (const SegmentationScheme& scheme :
         {preset("k3-default").scheme(), preset("k5-default").scheme(), figure_scheme()}) {
        const SmoothingSpec spec = SmoothingSpec::distance_score(10.0);
        for (int k = 1; k <= scheme.num_segments(); ++k) {
            for (int i = 0; i < 200; ++i) {
                const double y = rng.uniform(scheme.lower(k) + 1e-9, scheme.upper(k) - 1e-9);
                const WeightVector w = weights(scheme, spec, y);
                const double wk = w.weights[static_cast<std::size_t>(k) - 1];
                for (int j = 1; j <= scheme.num_segments(); ++j) {
                    if (j != k) CHECK(wk > w.weights[static_cast<std::size_t>(j) - 1]);
                }
            }
        }
    }
}

TEST_CASE("midpoint scores admit a non-monotonicity witness inside a segment") {
    const SegmentationScheme scheme = figure_scheme();
    const SmoothingSpec spec = SmoothingSpec::midpoint_score(10.0);
    bool witness = false;
    for (int k = 1; k <= scheme.num_segments() && !witness; ++k) {
        double best_so_far = -1.0;
        for (int i = 1; i < 2000 && !witness; ++i) {
            const double y = static_cast<double>(i) / 2000.0;
            if (y <= scheme.lower(k) || y >= scheme.upper(k)) continue;
            const double wk = weights(scheme, spec, y).weights[static_cast<std::size_t>(k) - 1];
            if (wk < best_so_far - 1e-9) witness = true; // fell after rising: w_k(y1) > w_k(y2)
            best_so_far = std::max(best_so_far, wk);
        }
    }
    CHECK(witness);
}

TEST_CASE("distance-score weights decay monotonically when moving away from a segment") {
    // Holds whenever no neighboring segment is short enough to out-decay the
    // target (true for these two sets; k5-default's segment 2 violates it).
    for (const SegmentationScheme& scheme : {preset("k3-default").scheme(), figure_scheme()}) {
        const SmoothingSpec spec = SmoothingSpec::distance_score(10.0);
        const int grid = 4000;
        for (int k = 1; k <= scheme.num_segments(); ++k) {
            // walking right from the segment's upper end
            double prev = 2.0;
            for (int i = 0; i <= grid; ++i) {
                const double y = scheme.upper(k) + (1.0 - scheme.upper(k)) * i / grid;
                const double wk = weights(scheme, spec, y).weights[static_cast<std::size_t>(k) - 1];
                if (i > 0) CHECK(wk <= prev + 1e-12);
                prev = wk;
            }
            // walking left from the segment's lower end
            prev = 2.0;
            for (int i = 0; i <= grid; ++i) {
                const double y = scheme.lower(k) * (1.0 - static_cast<double>(i) / grid);
                const double wk = weights(scheme, spec, y).weights[static_cast<std::size_t>(k) - 1];
                if (i > 0) CHECK(wk <= prev + 1e-12);
                prev = wk;
            }
        }
    }
}

TEST_CASE("quantile weight jumps never exceed the sigmoid tail mass") {
    for (const char* name : {"k3-default", "k5-default"}) {
        const SegmentationPreset& pre = preset(name);
        const SegmentationScheme scheme = pre.scheme();
        const SmoothingSpec spec = pre.smoothing(SmoothingMethod::quantile);
        const int grid = 10000;
        WeightVector prev = weights(scheme, spec, 0.0);
        double max_jump = 0.0;
        for (int i = 1; i <= grid; ++i) {
            const WeightVector w = weights(scheme, spec, static_cast<double>(i) / grid);
            for (std::size_t k = 0; k < w.weights.size(); ++k) {
                max_jump = std::max(max_jump, std::abs(w.weights[k] - prev.weights[k]));
            }
            prev = w;
        }
        // Discontinuities at window edges carry at most sigma(-5) of mass,
        // plus the sigmoid's own slope across one grid step.
        const double slope_allowance = 10.0 / 0.1 / 4.0 / grid; // steepest ramp, k3 lambda 0.1
        CHECK(max_jump <= 0.0067 + slope_allowance);
    }
}

TEST_CASE("larger mu drives score weights toward the unsmoothed one-hot") {
    const SegmentationScheme scheme = figure_scheme();
    for (const bool midpoint : {true, false}) {
        double prev_deviation = 2.0;
        for (const double mu : {1.0, 10.0, 100.0}) {
            const SmoothingSpec spec =
                midpoint ? SmoothingSpec::midpoint_score(mu) : SmoothingSpec::distance_score(mu);
            double deviation = 0.0;
            for (int i = 0; i <= 2000; ++i) {
                const double y = static_cast<double>(i) / 2000.0;
                const WeightVector w = weights(scheme, spec, y);
                const int hot = assign_segment(scheme, y);
                for (int k = 1; k <= scheme.num_segments(); ++k) {
                    const double target = k == hot ? 1.0 : 0.0;
                    deviation =
                        std::max(deviation, std::abs(w.weights[static_cast<std::size_t>(k) - 1] - target));
                }
            }
            CHECK(deviation < prev_deviation);
            prev_deviation = deviation;
        }
    }
}

TEST_CASE("score weights survive extreme sharpness without underflowing") {
    const SegmentationScheme scheme = figure_scheme();
    for (const double mu : {1e4, 1e6}) {
        const WeightVector w = weights(scheme, SmoothingSpec::midpoint_score(mu), 0.5);
        CHECK_THAT(weight_sum(w), WithinAbs(1.0, 1e-12));
    }
}

TEST_CASE("table presets carry the published parameters") {
    const SegmentationPreset& k3 = preset("k3-default");
    CHECK(k3.interior_boundaries == std::vector<double>{0.1, 0.9});
    CHECK(k3.blend_lambda == std::vector<double>{0.1, 0.1});
    CHECK(k3.blend_gamma == std::vector<double>{0.2, 1.0});
    CHECK(k3.mu == 10.0);

    const SegmentationPreset& k5 = preset("k5-default");
    CHECK(k5.interior_boundaries == std::vector<double>{0.2, 0.35, 0.7, 0.9});
    CHECK(k5.blend_lambda == std::vector<double>{0.15, 0.03, 0.1, 0.1});
    CHECK(k5.blend_gamma == std::vector<double>{0.3, 0.5, 0.73, 1.0});
    CHECK(k5.mu == 10.0);

    // Both presets satisfy the quantile-method feasibility constraints.
    for (const auto* pre : {&k3, &k5}) {
        CHECK_NOTHROW(pre->smoothing(SmoothingMethod::quantile).validate(pre->scheme()));
    }
    CHECK_THROWS_AS(preset("k7-default"), ConfigError);
}

TEST_CASE("smoothing spec validation rejects infeasible blend parameters") {
    const SegmentationScheme scheme({0.1, 0.9});
    // lambda too large: reaches below the previous boundary
    CHECK_THROWS_AS(SmoothingSpec::quantile({0.2, 0.1}, {0.2, 1.0}).validate(scheme), ConfigError);
    // gamma at or below its own boundary
    CHECK_THROWS_AS(SmoothingSpec::quantile({0.1, 0.1}, {0.1, 1.0}).validate(scheme), ConfigError);
    // gamma above the next boundary
    CHECK_THROWS_AS(SmoothingSpec::quantile({0.1, 0.1}, {0.95, 1.0}).validate(scheme), ConfigError);
    // wrong count
    CHECK_THROWS_AS(SmoothingSpec::quantile({0.1}, {0.2}).validate(scheme), ConfigError);
    // nonpositive mu
    CHECK_THROWS_AS(SmoothingSpec::midpoint_score(0.0).validate(scheme), ConfigError);
    CHECK_NOTHROW(SmoothingSpec::quantile({0.1, 0.1}, {0.2, 1.0}).validate(scheme));
}
