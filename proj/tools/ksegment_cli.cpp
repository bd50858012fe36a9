// Command-line front end for the K-segment valuation pipeline.
//
//   ksegment gen-data --config cfg.json [--seed N] [--out DIR]
//   ksegment train    --config cfg.json [--seed N] [--out DIR]
//   ksegment assess   --config cfg.json [--seed N] [--out DIR]
//   ksegment evaluate --config cfg.json [--seed N] [--out DIR]
//   ksegment pareto   --config cfg.json [--seed N] [--out DIR]
//   ksegment report   --config cfg.json [--seed N] [--out DIR]
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ksegment/ksegment.hpp"

namespace {

namespace fs = std::filesystem;
using ksegment::ExperimentConfig;

struct CommonOptions {
    std::string config_path;
    std::optional<std::int64_t> seed;
    std::optional<std::string> out_dir;
};

void add_common_options(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("--config", opts.config_path, "experiment configuration JSON")->required();
    cmd->add_option("--seed", opts.seed, "override the synthetic generator seed");
    cmd->add_option("--out", opts.out_dir, "override the report output directory");
}

ExperimentConfig load_config(const CommonOptions& opts) {
    ExperimentConfig cfg = ksegment::load_experiment_config(opts.config_path);
    if (opts.seed) {
        if (!cfg.data.synthetic) {
            throw ksegment::ConfigError("--seed requires a synthetic data block");
        }
        cfg.data.synthetic->market.seed = static_cast<std::uint64_t>(*opts.seed);
    }
    if (opts.out_dir) cfg.report.out_dir = *opts.out_dir;
    return cfg;
}

fs::path model_path(const ExperimentConfig& cfg, const std::string& name) {
    return fs::path(cfg.report.out_dir) /
           ("model_" + ksegment::detail::sanitize_filename(name) + ".json");
}

int cmd_gen_data(const CommonOptions& opts) {
    const ExperimentConfig cfg = load_config(opts);
    if (!cfg.data.synthetic) {
        throw ksegment::ConfigError("gen-data requires a synthetic data block");
    }
    const auto& spec = *cfg.data.synthetic;
    fs::create_directories(cfg.report.out_dir);
    const auto schema = ksegment::synthetic_schema(spec.market.feature_dim);

    const auto main_path = fs::path(cfg.report.out_dir) / "synthetic.csv";
    ksegment::write_csv(main_path.string(), ksegment::generate_synthetic(spec.market), schema);
    std::cout << "wrote " << main_path.string() << " (" << spec.market.num_properties << " rows)\n";

    if (spec.assessment_properties > 0) {
        ksegment::SyntheticMarketConfig assessment = spec.market;
        assessment.num_properties = spec.assessment_properties;
        assessment.seed = spec.market.seed + ksegment::kAssessmentSeedOffset;
        const auto assessment_path = fs::path(cfg.report.out_dir) / "assessment.csv";
        ksegment::write_csv(assessment_path.string(), ksegment::generate_synthetic(assessment), schema);
        std::cout << "wrote " << assessment_path.string() << " (" << spec.assessment_properties
                  << " rows)\n";
    }
    return 0;
}

int cmd_train(const CommonOptions& opts) {
    const ExperimentConfig cfg = load_config(opts);
    const ksegment::PreparedExperiment prep = ksegment::prepare_experiment(cfg);
    fs::create_directories(cfg.report.out_dir);
    for (const auto& entry : cfg.models) {
        const auto model =
            ksegment::train_ksegment(prep.splits.train, entry.scheme, entry.smoothing, prep.gbm);
        const auto path = model_path(cfg, entry.name);
        ksegment::save_model(model, path.string());
        std::cout << "trained " << entry.name << " -> " << path.string() << '\n';
    }
    return 0;
}

int cmd_assess(const CommonOptions& opts) {
    const ExperimentConfig cfg = load_config(opts);
    const ksegment::PreparedExperiment prep = ksegment::prepare_experiment(cfg);
    const auto records = prep.assessment.empty() ? prep.splits.test : prep.assessment;
    if (records.empty()) {
        throw ksegment::Error("assess: no records to assess");
    }
    fs::create_directories(cfg.report.out_dir);

    std::string csv = "model,id,assessed_value\n";
    for (const auto& entry : cfg.models) {
        const auto path = model_path(cfg, entry.name);
        if (!fs::exists(path)) {
            throw ksegment::Error("assess: missing " + path.string() + "; run train first");
        }
        const auto model = ksegment::load_model(path.string());
        for (const auto& rec : records) {
            csv += entry.name + ',' + rec.id + ',' +
                   ksegment::detail::format_sig10(model.assess(rec)) + '\n';
        }
    }
    const auto out_path = fs::path(cfg.report.out_dir) / "assessments.csv";
    ksegment::detail::write_text_file(out_path, csv);
    std::cout << "wrote " << out_path.string() << " (" << records.size() << " records per model)\n";
    return 0;
}

int cmd_evaluate(const CommonOptions& opts) {
    const ExperimentConfig cfg = load_config(opts);
    const ksegment::ExperimentResult result = ksegment::run_experiment(cfg);
    std::cout << "wrote " << result.reports.size() << " report(s) to " << result.out_dir.string()
              << '\n';
    return 0;
}

nlohmann::json load_report(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ksegment::Error("cannot open " + path.string() + "; run evaluate first");
    }
    return nlohmann::json::parse(in);
}

int cmd_pareto(const CommonOptions& opts) {
    const ExperimentConfig cfg = load_config(opts);
    const auto [metric, param] = ksegment::detail::parse_fairness_key(
        cfg.report.pareto_fairness, "report.pareto_fairness");

    std::vector<ksegment::ParetoPoint> points;
    for (const auto& entry : cfg.models) {
        const auto path = fs::path(cfg.report.out_dir) /
                          ("report_" + ksegment::detail::sanitize_filename(entry.name) + ".json");
        const nlohmann::json report = load_report(path);
        const auto& r2 = report.at("r_squared");
        nlohmann::json accuracy = r2.at(cfg.report.pareto_split);
        if (accuracy.is_null() && cfg.report.pareto_split == "assessment") accuracy = r2.at("test");
        if (accuracy.is_null()) {
            throw ksegment::Error("pareto: no R-squared for split " + cfg.report.pareto_split);
        }
        double fairness = 0.0;
        bool found = false;
        for (const auto& value : report.at("fairness")) {
            if (value.at("metric") != metric) continue;
            const double p = metric == "fgrp" ? value.at("n").get<double>()
                                              : value.at("alpha").get<double>();
            if (p == param) {
                fairness = value.at("raw").get<double>();
                found = true;
            }
        }
        if (!found) {
            throw ksegment::Error("pareto: " + cfg.report.pareto_fairness + " missing from " +
                                  path.string());
        }
        points.push_back({entry.name, accuracy.get<double>(), fairness});
    }

    const auto frontier = ksegment::pareto_frontier(points);
    const auto contains = [](const std::vector<ksegment::ParetoPoint>& list, const std::string& name) {
        for (const auto& p : list) {
            if (p.model == name) return true;
        }
        return false;
    };
    std::string csv = "model,accuracy,fairness_metric,fairness_value,on_frontier,on_hull\n";
    for (const auto& p : points) {
        csv += p.model + ',' + ksegment::detail::format_sig10(p.accuracy) + ',' +
               cfg.report.pareto_fairness + ',' + ksegment::detail::format_sig10(p.fairness) + ',' +
               (contains(frontier.non_dominated, p.model) ? "true" : "false") + ',' +
               (contains(frontier.hull, p.model) ? "true" : "false") + '\n';
    }
    const auto out_path = fs::path(cfg.report.out_dir) / "pareto.csv";
    ksegment::detail::write_text_file(out_path, csv);
    std::cout << "wrote " << out_path.string() << '\n';
    return 0;
}

int cmd_report(const CommonOptions& opts) {
    const ExperimentConfig cfg = load_config(opts);
    std::cout << "model        R2(train)    R2(test)     R2(assessment)\n";
    for (const auto& entry : cfg.models) {
        const auto path = fs::path(cfg.report.out_dir) /
                          ("report_" + ksegment::detail::sanitize_filename(entry.name) + ".json");
        const nlohmann::json report = load_report(path);
        const auto& r2 = report.at("r_squared");
        const auto cell = [&](const char* key) {
            return r2.at(key).is_null() ? std::string("-")
                                        : ksegment::detail::format_sig10(r2.at(key).get<double>());
        };
        std::printf("%-12s %-12s %-12s %-12s\n", entry.name.c_str(), cell("train").c_str(),
                    cell("test").c_str(), cell("assessment").c_str());
        for (const auto& value : report.at("fairness")) {
            std::string label = value.at("metric").get<std::string>();
            label += value.at("metric") == "fgrp"
                         ? " n=" + std::to_string(value.at("n").get<int>())
                         : " a=" + ksegment::detail::format_sig10(value.at("alpha").get<double>());
            std::printf("  %-16s raw=%-16s", label.c_str(),
                        ksegment::detail::format_sig10(value.at("raw").get<double>()).c_str());
            if (value.contains("relative_unfairness")) {
                std::printf(" RU=%s",
                            ksegment::detail::format_sig10(
                                value.at("relative_unfairness").get<double>())
                                .c_str());
            }
            std::printf("\n");
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"K-segment property valuation: train, assess, and evaluate"};
    app.require_subcommand(1);

    CommonOptions gen_opts, train_opts, assess_opts, eval_opts, pareto_opts, report_opts;
    add_common_options(app.add_subcommand("gen-data", "write synthetic rolls as CSV"), gen_opts);
    add_common_options(app.add_subcommand("train", "train all configured models"), train_opts);
    add_common_options(app.add_subcommand("assess", "apply trained models to the assessment roll"),
                       assess_opts);
    add_common_options(app.add_subcommand("evaluate", "run the full experiment pipeline"), eval_opts);
    add_common_options(app.add_subcommand("pareto", "rebuild pareto.csv from existing reports"),
                       pareto_opts);
    add_common_options(app.add_subcommand("report", "print a summary of existing reports"),
                       report_opts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand("gen-data")) return cmd_gen_data(gen_opts);
        if (app.got_subcommand("train")) return cmd_train(train_opts);
        if (app.got_subcommand("assess")) return cmd_assess(assess_opts);
        if (app.got_subcommand("evaluate")) return cmd_evaluate(eval_opts);
        if (app.got_subcommand("pareto")) return cmd_pareto(pareto_opts);
        if (app.got_subcommand("report")) return cmd_report(report_opts);
    } catch (const ksegment::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
