#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "autotab/config.hpp"
#include "autotab/csv.hpp"
#include "autotab/engine.hpp"
#include "autotab/ensemble.hpp"
#include "autotab/metrics.hpp"
#include "autotab/synthdata.hpp"

namespace autotab {

inline bool is_count_response(const Vector& y) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (!(y[i] >= 0.0) || y[i] != std::floor(y[i])) return false;
    }
    return y.size() > 0;
}

inline std::string default_objective(TaskKind task, bool count_response) {
    if (task == TaskKind::regression) return count_response ? "poisson_deviance" : "mse";
    return task == TaskKind::binary_classification ? "auc" : "accuracy";
}

struct ExperimentData {
    Dataset train;
    std::optional<Dataset> test;
    bool count_response = false;
};

inline LoadOptions load_options(const DataConfig& d) {
    LoadOptions options;
    options.missing_tokens = {d.missing_tokens.begin(), d.missing_tokens.end()};
    for (const auto& [name, kind] : d.column_kinds) options.forced_kinds[name] = parse_column_kind(kind);
    if (!d.task.empty()) options.task = parse_task(d.task);
    return options;
}

/// Options that load further files exactly as the training file was typed.
inline LoadOptions follow_schema(const Dataset& reference, LoadOptions options) {
    for (const auto& column : reference.columns) options.forced_kinds[column.schema.name] = column.schema.kind;
    options.task = reference.task;
    options.class_labels = reference.class_labels;
    return options;
}

inline ExperimentData load_experiment_data(const ExperimentConfig& config) {
    const auto options = load_options(config.data);
    ExperimentData out;
    Dataset train = load_csv(config.data.train, config.data.response, options);
    std::optional<Dataset> test;
    if (!config.data.test.empty()) {
        test = load_csv(config.data.test, config.data.response, follow_schema(train, options));
    } else if (config.data.test_fraction > 0.0) {
        const auto s = split(train, config.data.test_fraction, 0.0, config.seed);
        test = train.take(s.test_indices);
        train = train.take(s.train_indices);
    }
    if (!config.data.log1p_columns.empty() || config.data.log1p_response) {
        train = log1p_transform(train, config.data.log1p_columns, config.data.log1p_response);
        if (test) test = log1p_transform(*test, config.data.log1p_columns, config.data.log1p_response);
    }
    out.count_response = train.task == TaskKind::regression && is_count_response(train.y);
    out.train = std::move(train);
    out.test = std::move(test);
    return out;
}

inline json schema_json(const Dataset& data, const ExperimentConfig& config) {
    json features = json::array();
    for (const auto& c : data.columns) features.push_back(c.schema);
    return {{"features", features},
            {"response", data.response.name},
            {"task", to_string(data.task)},
            {"class_labels", data.class_labels},
            {"missing_tokens", config.data.missing_tokens},
            {"log1p_columns", config.data.log1p_columns},
            {"log1p_response", config.data.log1p_response}};
}

/// Objective plus the task's report metrics, raw (unsigned) values; metrics that
/// cannot be computed on these predictions are reported as null.
inline json metric_report(const std::string& objective, TaskKind task, bool count_response, const Vector& y,
                          const PredictionBundle& prediction) {
    std::vector<std::string> names{objective};
    for (const auto& m : report_metrics(task, count_response)) {
        if (std::find(names.begin(), names.end(), m) == names.end()) names.push_back(m);
    }
    json out = json::object();
    for (const auto& name : names) {
        try {
            const auto metric = get_metric(name);
            out[name] = metric.raw({y.data(), static_cast<std::size_t>(y.size())}, prediction);
        } catch (const Error& e) {
            out[name] = nullptr;
        }
    }
    return out;
}

inline void write_predictions(const std::filesystem::path& path, const PredictionBundle& prediction, TaskKind task,
                              const std::vector<std::string>& class_labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
    const bool classify = is_classification(task);
    csv::Record header{"prediction"};
    if (classify && prediction.probabilities) {
        for (const auto& label : class_labels) header.push_back("class_" + label);
    }
    csv::write_record(out, header);
    for (std::size_t r = 0; r < prediction.size(); ++r) {
        csv::Record record;
        if (classify) {
            record.push_back(class_labels.at(static_cast<std::size_t>(prediction.values[r])));
            if (prediction.probabilities) {
                for (Eigen::Index c = 0; c < prediction.probabilities->cols(); ++c) {
                    record.push_back(csv::format_number((*prediction.probabilities)(static_cast<Eigen::Index>(r), c)));
                }
            }
        } else {
            record.push_back(csv::format_number(prediction.values[r]));
        }
        csv::write_record(out, record);
    }
    if (!out) fail(ErrorKind::io, "failed writing '" + path.string() + "'");
}

/// history.jsonl / timing.jsonl for one or several searches (bagging subsets,
/// boosting stages carry a "search" field).
inline json persist_searches(const std::vector<SearchResult>& searches, const std::filesystem::path& dir,
                             const json& extra) {
    if (searches.size() == 1) return persist_history(searches.front(), dir, extra);
    ensure_directory(dir);
    std::string history, timing;
    std::size_t trials = 0;
    double seconds = 0.0;
    json best = json::array();
    for (std::size_t s = 0; s < searches.size(); ++s) {
        const auto& result = searches[s];
        for (const auto& t : result.history) {
            json line = trial_to_json(t);
            line["search"] = s;
            history += line.dump() + "\n";
            timing += json{{"search", s}, {"k", t.k}, {"seconds", t.fit_seconds}}.dump() + "\n";
        }
        trials += result.history.size();
        seconds += result.seconds_used;
        best.push_back(result.best ? json(result.history[*result.best].k) : json(nullptr));
    }
    write_text(dir / "history.jsonl", history);
    write_text(dir / "timing.jsonl", timing);
    json manifest = extra.is_object() ? extra : json::object();
    manifest["version"] = history_version;
    manifest["trials"] = trials;
    manifest["seconds_used"] = seconds;
    manifest["best_k"] = best;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

struct FitOutcome {
    std::filesystem::path directory;
    std::vector<SearchResult> searches;
    std::shared_ptr<const Predictor> model;
    json report;
};

/// Loads data, runs the configured search or ensemble build and writes every
/// artifact under output_dir/model_name.
inline FitOutcome run_fit(const ExperimentConfig& config, std::ostream& out) {
    config.check();
    const auto data = load_experiment_data(config);
    const Dataset& train = data.train;
    const std::string objective =
        config.objective.empty() ? default_objective(train.task, data.count_response) : config.objective;
    const Metric metric = get_metric(objective);
    check_metric_for_task(metric, train.task);
    if (metric.id == "poisson_deviance") {
        for (Eigen::Index i = 0; i < train.y.size(); ++i) {
            require(train.y[i] >= 0.0, ErrorKind::config,
                    "objective poisson_deviance needs a non-negative response; row " + std::to_string(i + 1) +
                        " holds " + csv::format_number(train.y[i]));
        }
    }

    SearchSpace space = default_space(train.task, data.count_response);
    space.apply_overrides(config.space);
    const auto sampler = make_sampler(config.search_algo);
    const Budget budget{config.timeout, config.max_evals};
    SearchOptions options;
    options.validation = ValidationPlan{parse_validation_mode(config.validation), config.valid_size, config.folds};
    options.detection_threshold = config.detection_threshold;
    options.parallelism = config.effective_parallelism();
    options.seed = config.seed;

    FitOutcome outcome;
    outcome.directory = config.output_path();
    ensure_directory(outcome.directory);
    json extra{{"model_name", config.model_name},
               {"config", config},
               {"objective", objective},
               {"task", to_string(train.task)},
               {"budget", {{"timeout", config.timeout}, {"max_evals", config.max_evals}}}};

    const std::string strategy = config.ensemble.strategy;
    const std::size_t h = config.ensemble.n_estimators;
    if (strategy == "none" || strategy == "stacking") {
        auto result = run_search(train, space, budget, *sampler, metric, options);
        outcome.searches.push_back(std::move(result));
        persist_searches(outcome.searches, outcome.directory, extra);
        const auto& searched = outcome.searches.front();
        if (!searched.best) {
            throw OptimizationError("no valid trial among " + std::to_string(searched.history.size()),
                                    searched.failure_histogram());
        }
        if (strategy == "none") {
            outcome.model = searched.best_trial().pipeline;
        } else {
            const Voting voting = config.ensemble.voting.empty() ? default_voting(Strategy::stacking, train.task)
                                                                 : parse_voting(config.ensemble.voting);
            outcome.model = std::make_shared<EnsembleModel>(
                build_stacking(searched.history, h, voting, train.task, train.num_classes()));
        }
    } else if (strategy == "bagging") {
        const Voting voting = config.ensemble.voting.empty() ? default_voting(Strategy::bagging, train.task)
                                                             : parse_voting(config.ensemble.voting);
        auto built = build_bagging(train, space, budget, *sampler, metric, options, h,
                                   config.ensemble.feature_fraction, voting);
        outcome.searches = std::move(built.searches);
        persist_searches(outcome.searches, outcome.directory, extra);
        outcome.model = std::make_shared<EnsembleModel>(std::move(built.model));
    } else {
        require(config.ensemble.voting.empty() || config.ensemble.voting == "sum", ErrorKind::config,
                "boosting combines members by sum voting");
        auto built = build_boosting(train, space, budget, *sampler, metric, options, h);
        outcome.searches = std::move(built.searches);
        persist_searches(outcome.searches, outcome.directory, extra);
        outcome.model = std::make_shared<EnsembleModel>(std::move(built.model));
    }

    save_model(*outcome.model, outcome.directory / "model.json", schema_json(train, config));
    const auto train_prediction = outcome.model->predict(train);
    write_predictions(outcome.directory / "predictions_train.csv", train_prediction, train.task, train.class_labels);
    json report{{"objective", objective},
                {"train", metric_report(objective, train.task, data.count_response, train.y, train_prediction)},
                {"test", nullptr}};
    if (data.test) {
        const auto test_prediction = outcome.model->predict(*data.test);
        write_predictions(outcome.directory / "predictions_test.csv", test_prediction, train.task, train.class_labels);
        report["test"] = metric_report(objective, train.task, data.count_response, data.test->y, test_prediction);
    }
    write_text(outcome.directory / "report.json", report.dump(2) + "\n");

    std::size_t trials = 0, valid = 0;
    for (const auto& s : outcome.searches) {
        trials += s.history.size();
        for (const auto& t : s.history) valid += t.valid() ? 1 : 0;
    }
    out << "trials: " << trials << " (valid " << valid << ")\n";
    if (strategy == "none" || strategy == "stacking") {
        const auto& best = outcome.searches.front().best_trial();
        out << "best trial " << best.k << ": " << best.spec.summary() << "\n";
    }
    auto echo = [&](const char* label, const json& values) {
        if (values.is_null()) return;
        const auto& v = values.at(objective);
        out << label << " " << objective << ": " << (v.is_null() ? std::string("n/a") : csv::format_number(v.get<double>()))
            << "\n";
    };
    echo("train", report["train"]);
    echo("test", report["test"]);
    out << "artifacts: " << outcome.directory.string() << "\n";
    outcome.report = std::move(report);
    return outcome;
}

inline int cmd_fit(const ExperimentConfig& config, std::ostream& out) {
    run_fit(config, out);
    return 0;
}

/// Reads a data file for prediction, projected onto the fit-time feature schema.
inline Dataset load_for_prediction(const json& schema, const std::filesystem::path& data_path) {
    auto records = csv::read_file(data_path.string());
    require(!records.empty(), ErrorKind::schema, "missing header row in '" + data_path.string() + "'");
    const auto& header = records.front();
    const std::string response = schema.value("response", "");
    std::vector<std::size_t> picks;
    LoadOptions options;
    const auto tokens = schema.at("missing_tokens").get<std::vector<std::string>>();
    options.missing_tokens = {tokens.begin(), tokens.end()};
    std::set<std::string> expected;
    for (const auto& f : schema.at("features")) {
        const auto s = f.get<ColumnSchema>();
        expected.insert(s.name);
        const auto it = std::find(header.begin(), header.end(), s.name);
        require(it != header.end(), ErrorKind::schema, "feature column '" + s.name + "' is missing");
        picks.push_back(static_cast<std::size_t>(it - header.begin()));
        options.forced_kinds[s.name] = s.kind;
    }
    for (const auto& name : header) {
        if (!expected.contains(name) && name != response) warn("ignoring unknown column '" + name + "'");
    }
    std::vector<csv::Record> projected;
    projected.reserve(records.size());
    for (const auto& record : records) {
        require(record.size() == header.size(), ErrorKind::schema, "ragged row in '" + data_path.string() + "'");
        csv::Record row;
        row.reserve(picks.size());
        for (auto p : picks) row.push_back(record[p]);
        projected.push_back(std::move(row));
    }
    Dataset data = from_records(projected, "", options);
    data.task = parse_task(schema.at("task").get<std::string>());
    data.class_labels = schema.at("class_labels").get<std::vector<std::string>>();
    const auto log1p_columns = schema.at("log1p_columns").get<std::vector<std::string>>();
    if (!log1p_columns.empty()) data = log1p_transform(data, log1p_columns, false);
    return data;
}

inline int cmd_predict(const std::filesystem::path& model_path, const std::filesystem::path& data_path,
                       const std::filesystem::path& output_path, std::ostream& out) {
    const auto file = read_model_file(model_path);
    require(file.contains("schema") && file.at("schema").is_object(), ErrorKind::format,
            "model file carries no data schema");
    const auto& schema = file.at("schema");
    std::unique_ptr<Predictor> model;
    try {
        model = predictor_from_json(file.at("predictor"));
    } catch (const json::exception& e) {
        fail(ErrorKind::format, "corrupt model in '" + model_path.string() + "': " + e.what());
    }
    const Dataset data = load_for_prediction(schema, data_path);
    const auto prediction = model->predict(data);
    write_predictions(output_path, prediction, model->task(), schema.at("class_labels").get<std::vector<std::string>>());
    out << "wrote " << prediction.size() << " predictions to " << output_path.string() << "\n";
    return 0;
}

inline int cmd_history(const std::filesystem::path& directory, std::size_t top, std::ostream& out) {
    const auto history_path = directory / "history.jsonl";
    const std::string text = read_text(history_path);
    struct Row {
        std::size_t search;
        TrialRecord trial;
    };
    std::vector<Row> rows;
    {
        std::istringstream lines(text);
        std::string line;
        std::size_t number = 0;
        while (std::getline(lines, line)) {
            ++number;
            if (line.empty()) continue;
            try {
                const auto j = json::parse(line);
                rows.push_back({j.value("search", std::size_t{0}), trial_from_json(j)});
            } catch (const json::exception& e) {
                fail(ErrorKind::format, history_path.string() + ":" + std::to_string(number) + ": " + e.what());
            }
        }
    }
    require(!rows.empty(), ErrorKind::format, "history '" + history_path.string() + "' is empty");

    std::map<std::pair<std::size_t, std::size_t>, double> seconds;
    if (std::filesystem::exists(directory / "timing.jsonl")) {
        std::istringstream lines(read_text(directory / "timing.jsonl"));
        std::string line;
        while (std::getline(lines, line)) {
            if (line.empty()) continue;
            try {
                const auto j = json::parse(line);
                seconds[{j.value("search", std::size_t{0}), j.at("k").get<std::size_t>()}] = j.at("seconds").get<double>();
            } catch (const json::exception&) {
                warn("skipping malformed timing line");
            }
        }
    }

    std::vector<const Row*> ranked;
    for (const auto& r : rows) {
        if (r.trial.valid()) ranked.push_back(&r);
    }
    std::sort(ranked.begin(), ranked.end(), [](const Row* a, const Row* b) {
        if (*a->trial.loss != *b->trial.loss) return *a->trial.loss < *b->trial.loss;
        if (a->search != b->search) return a->search < b->search;
        return a->trial.k < b->trial.k;
    });
    const bool multi = std::any_of(rows.begin(), rows.end(), [](const Row& r) { return r.search > 0; });
    auto pad = [](std::string text, std::size_t width) {
        text.resize(std::max(text.size() + 2, width), ' ');
        return text;
    };
    out << (multi ? pad("search", 8) : "") << pad("k", 6) << pad("loss", 22) << pad("seconds", 10) << "pipeline\n";
    for (std::size_t i = 0; i < std::min(top, ranked.size()); ++i) {
        const auto& r = *ranked[i];
        const auto it = seconds.find({r.search, r.trial.k});
        if (multi) out << pad(std::to_string(r.search), 8);
        out << pad(std::to_string(r.trial.k), 6) << pad(csv::format_number(*r.trial.loss), 22)
            << pad(it == seconds.end() ? std::string("-") : csv::format_number(std::round(it->second * 1000.0) / 1000.0), 10)
            << r.trial.spec.summary() << "\n";
    }
    std::map<std::size_t, std::vector<TrialRecord>> by_search;
    for (const auto& r : rows) by_search[r.search].push_back(r.trial);
    for (const auto& [s, trials] : by_search) {
        out << (multi ? "incumbent[" + std::to_string(s) + "]:" : std::string("incumbent:"));
        for (const auto& v : incumbent_curve(trials)) out << " " << (v ? csv::format_number(*v) : std::string("-"));
        out << "\n";
    }
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r.trial.valid() ? 0 : 1;
    out << rows.size() << " trials, " << failed << " invalid or failed\n";
    return 0;
}

struct BaselineOutcome {
    std::string model;
    json report;
};

/// Fits the task's reference GLM on one-hot encoded, mean-imputed features:
/// poisson_glm for counts (ln(exposure) offset when configured), logistic for
/// classification, ridge otherwise.
inline BaselineOutcome run_glm_baseline(const ExperimentConfig& config, std::ostream& out) {
    require(!config.data.train.empty() && !config.data.response.empty(), ErrorKind::config,
            "data.train and data.response are required");
    const auto data = load_experiment_data(config);
    const Dataset& train = data.train;
    const std::string objective =
        config.objective.empty() ? default_objective(train.task, data.count_response) : config.objective;

    std::vector<std::size_t> feature_columns;
    std::optional<std::size_t> exposure;
    for (std::size_t j = 0; j < train.width(); ++j) {
        if (!config.data.exposure_column.empty() && train.columns[j].schema.name == config.data.exposure_column) {
            exposure = j;
        } else {
            feature_columns.push_back(j);
        }
    }
    require(config.data.exposure_column.empty() || exposure.has_value(), ErrorKind::config,
            "exposure column '" + config.data.exposure_column + "' not found");
    require(!feature_columns.empty(), ErrorKind::data, "no feature columns");

    auto offset_of = [&](const Dataset& d) -> Vector {
        if (!exposure) return Vector();
        const auto& column = d.columns[*exposure];
        Vector offset(static_cast<Eigen::Index>(d.rows()));
        for (std::size_t r = 0; r < d.rows(); ++r) {
            const double e = column.numbers.empty() ? missing_value : column.numbers[r];
            require(std::isfinite(e) && e > 0.0, ErrorKind::data,
                    "exposure must be positive (row " + std::to_string(r + 1) + ")");
            offset[static_cast<Eigen::Index>(r)] = std::log(e);
        }
        return offset;
    };

    Encoder encoder(EncodeMethod::onehot);
    Imputer imputer(ImputeMethod::mean);
    const Matrix x = imputer.fit_transform(encoder.fit_transform(train.select_columns(feature_columns)));
    auto design = [&](const Dataset& d) { return imputer.transform(encoder.transform(d.select_columns(feature_columns))); };

    BaselineOutcome outcome;
    std::function<PredictionBundle(const Dataset&)> predict;
    if (train.task == TaskKind::regression && data.count_response) {
        auto glm = std::make_shared<PoissonGlmModel>(train.task, 0, 1e-6);
        glm->fit(x, train.y, offset_of(train));
        predict = [=](const Dataset& d) { return glm->predict(design(d), offset_of(d)); };
        outcome.model = "poisson_glm";
    } else if (is_classification(train.task)) {
        auto logistic = std::make_shared<LogisticModel>(train.task, train.num_classes(), 1e-4);
        logistic->fit(x, train.y);
        predict = [=](const Dataset& d) { return logistic->predict(design(d)); };
        outcome.model = "logistic";
    } else {
        auto ridge = std::make_shared<RidgeModel>(train.task, 0, 1e-6);
        ridge->fit(x, train.y);
        predict = [=](const Dataset& d) { return ridge->predict(design(d)); };
        outcome.model = "ridge";
    }

    outcome.report = json{{"model", outcome.model},
                          {"objective", objective},
                          {"train", metric_report(objective, train.task, data.count_response, train.y, predict(train))},
                          {"test", nullptr}};
    if (data.test) {
        outcome.report["test"] =
            metric_report(objective, train.task, data.count_response, data.test->y, predict(*data.test));
    }
    out << "glm-baseline (" << outcome.model << ")\n";
    for (const char* part : {"train", "test"}) {
        const auto& values = outcome.report[part];
        if (values.is_null()) continue;
        for (const auto& [name, v] : values.items()) {
            out << part << " " << name << ": " << (v.is_null() ? std::string("n/a") : csv::format_number(v.get<double>()))
                << "\n";
        }
    }
    return outcome;
}

inline int cmd_glm_baseline(const ExperimentConfig& config, std::ostream& out) {
    run_glm_baseline(config, out);
    return 0;
}

inline int cmd_synth(const GeneratorSpec& spec, const std::filesystem::path& output, std::ostream& out) {
    const auto data = generate(spec);
    if (output.has_parent_path()) ensure_directory(output.parent_path());
    write_csv(data, output.string());
    out << "wrote " << data.rows() << " rows x " << data.width() << " features to " << output.string() << "\n";
    return 0;
}

}  // namespace autotab
