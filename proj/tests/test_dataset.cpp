#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <fstream>
#include <set>
#include <string>

#include "ksegment/dataset.hpp"
#include "ksegment/quantile.hpp"
#include "ksegment/rng.hpp"

using namespace ksegment;

namespace {

namespace fs = std::filesystem;

/// Writes contents to a unique temp file and removes it on destruction.
struct TempFile {
    fs::path path;

    explicit TempFile(const std::string& contents) {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("ksegment_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + ".csv");
        std::ofstream out(path);
        out << contents;
    }
    ~TempFile() { fs::remove(path); }
};

CsvSchema two_feature_schema() {
    CsvSchema schema;
    schema.features = {"f0", "f1"};
    return schema;
}

} // namespace

TEST_CASE("load_csv ingests rows in order") {
    TempFile file(
        "id,sale_price,sale_date,prior_assessment,f0,f1\n"
        "a,100000,3,95000,1.5,-0.25\n"
        "b,250000,5,240000,0.0,2.0\n"
        "c,80000,1,90000,-1.0,0.5\n");
    const auto records = load_csv(file.path.string(), two_feature_schema());
    REQUIRE(records.size() == 3);
    CHECK(records[0].id == "a");
    CHECK(records[1].id == "b");
    CHECK(records[2].id == "c");
    CHECK(records[0].sale_price == 100000.0);
    CHECK(records[0].sale_date == 3);
    CHECK(records[0].prior_assessment == 95000.0);
    CHECK(records[0].features == std::vector<double>{1.5, -0.25});
}

TEST_CASE("load_csv reports the missing column by name") {
    TempFile file(
        "id,sale_price,sale_date,f0,f1\n"
        "a,100000,3,1.5,-0.25\n");
    try {
        load_csv(file.path.string(), two_feature_schema());
        FAIL("expected SchemaError");
    } catch (const SchemaError& e) {
        CHECK(std::string(e.what()).find("prior_assessment") != std::string::npos);
    }
}

TEST_CASE("load_csv keeps rows with an empty sale_price as unsold") {
    TempFile file(
        "id,sale_price,sale_date,prior_assessment,f0,f1\n"
        "a,,3,95000,1.5,-0.25\n"
        "b,250000,5,240000,0.0,2.0\n");
    const auto records = load_csv(file.path.string(), two_feature_schema());
    REQUIRE(records.size() == 2);
    CHECK_FALSE(records[0].sale_price.has_value());
    CHECK(records[1].sale_price == 250000.0);
}

TEST_CASE("load_csv rejects unparseable numeric cells with the row index") {
    TempFile file(
        "id,sale_price,sale_date,prior_assessment,f0,f1\n"
        "a,100000,3,95000,1.5,-0.25\n"
        "b,oops,5,240000,0.0,2.0\n");
    try {
        load_csv(file.path.string(), two_feature_schema());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row() == 2);
        CHECK(std::string(e.what()).find("oops") != std::string::npos);
    }
}

TEST_CASE("load_csv rejects empty and row-free files") {
    TempFile empty("");
    CHECK_THROWS_AS(load_csv(empty.path.string(), two_feature_schema()), DatasetError);
    TempFile header_only("id,sale_price,sale_date,prior_assessment,f0,f1\n");
    CHECK_THROWS_AS(load_csv(header_only.path.string(), two_feature_schema()), DatasetError);
}

TEST_CASE("csv round trip preserves records") {
    SyntheticMarketConfig config;
    config.num_properties = 50;
    config.feature_dim = 3;
    config.seed = 7;
    const auto records = generate_synthetic(config);
    TempFile file("");
    const auto schema = synthetic_schema(config.feature_dim);
    write_csv(file.path.string(), records, schema);
    const auto loaded = load_csv(file.path.string(), schema);
    REQUIRE(loaded.size() == records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        CHECK(loaded[i].id == records[i].id);
        CHECK(loaded[i].sale_price == records[i].sale_price);
        CHECK(loaded[i].sale_date == records[i].sale_date);
        CHECK(loaded[i].prior_assessment == records[i].prior_assessment);
        CHECK(loaded[i].features == records[i].features);
    }
}

TEST_CASE("quantile index counts ties inclusively") {
    const QuantileIndex index({10, 20, 30, 40});
    CHECK(index.population_size() == 4);
    CHECK(index.quantile_of(20.0) == 0.5);
    CHECK(index.quantile_of(5.0) == 0.0);
    CHECK(index.quantile_of(40.0) == 1.0);
    CHECK(index.quantile_of(1000.0) == 1.0);

    const QuantileIndex ties({5, 5, 5});
    CHECK(ties.quantile_of(5.0) == 1.0);

    const QuantileIndex single({7});
    CHECK(single.quantile_of(7.0) == 1.0);

    CHECK_THROWS_AS(QuantileIndex({}), DatasetError);
}

TEST_CASE("quantile_of is monotone and ranks the index's own values") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> values;
        const int m = 1 + static_cast<int>(rng.uniform_int(0, 99));
        for (int i = 0; i < m; ++i) values.push_back(rng.uniform(1.0, 100.0));
        const QuantileIndex index(values);

        double prev = -1.0;
        for (double x = 0.0; x <= 110.0; x += 1.37) {
            const double q = index.quantile_of(x);
            CHECK(q >= prev);
            prev = q;
        }
        for (const double v : values) {
            const double q = index.quantile_of(v);
            CHECK(q > 0.0);
            CHECK(q <= 1.0);
            // rank under <=-counting
            std::size_t rank = 0;
            for (const double other : values) {
                if (other <= v) ++rank;
            }
            CHECK(q == static_cast<double>(rank) / static_cast<double>(m));
        }
    }
}

namespace {

std::vector<PropertyRecord> monthly_records(int months) {
    std::vector<PropertyRecord> records;
    for (int m = 1; m <= months; ++m) {
        PropertyRecord rec;
        rec.id = "r" + std::to_string(m);
        rec.features = {static_cast<double>(m)};
        rec.sale_price = 1000.0 * m;
        rec.sale_date = m;
        rec.prior_assessment = 900.0 * m;
        records.push_back(rec);
    }
    return records;
}

} // namespace

TEST_CASE("make_splits carves the chronological tail and expanding folds") {
    const auto records = monthly_records(10);
    const Splits splits = make_splits(records, SplitSpec{0.9, 3});

    REQUIRE(splits.test.size() == 1);
    CHECK(splits.test[0].sale_date == 10);
    REQUIRE(splits.train.size() == 9);

    REQUIRE(splits.folds.size() == 3);
    CHECK(splits.folds[0].validation_period == 7);
    CHECK(splits.folds[1].validation_period == 8);
    CHECK(splits.folds[2].validation_period == 9);
    CHECK(splits.folds[0].fit.size() == 6);
    CHECK(splits.folds[1].fit.size() == 7);
    CHECK(splits.folds[2].fit.size() == 8);
    for (const Fold& fold : splits.folds) {
        CHECK(fold.validation.size() == 1);
        for (const auto& rec : fold.fit) CHECK(rec.sale_date < fold.validation_period);
        for (const auto& rec : fold.validation) CHECK(rec.sale_date == fold.validation_period);
    }
}

TEST_CASE("make_splits boundary cases") {
    const auto records = monthly_records(10);

    const Splits full = make_splits(records, SplitSpec{1.0, 3});
    CHECK(full.test.empty());
    CHECK(full.train.size() == 10);
    CHECK(full.folds.size() == 3);

    const Splits one = make_splits(records, SplitSpec{0.9, 1});
    REQUIRE(one.folds.size() == 1);
    CHECK(one.folds[0].validation_period == 9);
    CHECK(one.folds[0].fit.size() == 8);

    CHECK_THROWS_AS(make_splits(records, SplitSpec{0.9, 9}), SplitError);
    CHECK_THROWS_AS(make_splits(monthly_records(1), SplitSpec{1.0, 1}), SplitError);
}

TEST_CASE("rolling-origin folds never fit on their own or later periods") {
    SyntheticMarketConfig config;
    config.num_properties = 500;
    config.feature_dim = 2;
    config.seed = 11;
    config.num_periods = 12;
    const auto records = generate_synthetic(config);
    const Splits splits = make_splits(records, SplitSpec{0.8, 4});
    REQUIRE(splits.folds.size() == 4);
    for (std::size_t f = 0; f < splits.folds.size(); ++f) {
        for (const auto& rec : splits.folds[f].fit) {
            for (std::size_t g = f; g < splits.folds.size(); ++g) {
                CHECK(rec.sale_date < splits.folds[g].validation_period);
            }
        }
    }
}

TEST_CASE("synthetic market without compression or noise reproduces true values") {
    SyntheticMarketConfig config;
    config.num_properties = 200;
    config.feature_dim = 4;
    config.noise_scale = 0.0;
    config.regressivity_strength = 0.0;
    config.seed = 3;
    const auto records = generate_synthetic(config);
    for (const auto& rec : records) {
        REQUIRE(rec.sale_price.has_value());
        CHECK(rec.prior_assessment == *rec.sale_price);
    }
}

TEST_CASE("synthetic market is deterministic in the seed") {
    SyntheticMarketConfig config;
    config.num_properties = 300;
    config.seed = 99;
    const auto a = generate_synthetic(config);
    const auto b = generate_synthetic(config);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].sale_price == b[i].sale_price);
        CHECK(a[i].sale_date == b[i].sale_date);
        CHECK(a[i].prior_assessment == b[i].prior_assessment);
        CHECK(a[i].features == b[i].features);
    }
}

TEST_CASE("full compression collapses priors to the geometric mean value") {
    SyntheticMarketConfig config;
    config.num_properties = 400;
    config.noise_scale = 0.0;
    config.regressivity_strength = 1.0;
    config.seed = 5;
    const auto records = generate_synthetic(config);

    double log_sum = 0.0;
    for (const auto& rec : records) log_sum += std::log(*rec.sale_price);
    const double geometric_mean = std::exp(log_sum / static_cast<double>(records.size()));

    for (const auto& rec : records) {
        CHECK(rec.prior_assessment == records[0].prior_assessment);
        CHECK_THAT(rec.prior_assessment,
                   Catch::Matchers::WithinRel(geometric_mean, 1e-12));
    }
}

TEST_CASE("compressed priors over-state cheap properties and under-state expensive ones") {
    for (const double noise : {0.0, 0.15}) {
        SyntheticMarketConfig config;
        config.num_properties = 4000;
        config.noise_scale = noise;
        config.regressivity_strength = 0.4;
        config.seed = 12345;
        const auto records = generate_synthetic(config);

        // Correlation between prior/price ratio and price must be negative.
        double mean_ratio = 0.0, mean_price = 0.0;
        for (const auto& rec : records) {
            mean_ratio += rec.prior_assessment / *rec.sale_price;
            mean_price += *rec.sale_price;
        }
        mean_ratio /= static_cast<double>(records.size());
        mean_price /= static_cast<double>(records.size());
        double cov = 0.0;
        for (const auto& rec : records) {
            cov += (rec.prior_assessment / *rec.sale_price - mean_ratio) *
                   (*rec.sale_price - mean_price);
        }
        CHECK(cov < 0.0);
    }
}

TEST_CASE("synthetic sale dates stay inside the configured span") {
    SyntheticMarketConfig config;
    config.num_properties = 1000;
    config.seed = 8;
    config.num_periods = 6;
    config.first_period = 100;
    std::set<int> seen;
    for (const auto& rec : generate_synthetic(config)) {
        CHECK(rec.sale_date >= 100);
        CHECK(rec.sale_date <= 105);
        seen.insert(rec.sale_date);
    }
    CHECK(seen.size() == 6);
}

TEST_CASE("synthetic config validation") {
    SyntheticMarketConfig config;
    config.num_properties = 0;
    CHECK_THROWS_AS(generate_synthetic(config), ConfigError);
    config.num_properties = 10;
    config.regressivity_strength = 1.5;
    CHECK_THROWS_AS(generate_synthetic(config), ConfigError);
}
