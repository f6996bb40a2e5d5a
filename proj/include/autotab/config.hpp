#pragma once

#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autotab/engine.hpp"
#include "autotab/ensemble.hpp"
#include "autotab/space.hpp"

namespace autotab {

struct DataConfig {
    std::string train;
    std::string response;
    std::string test;            // optional separate test file
    double test_fraction = 0.0;  // held out from `train` when no test file is given
    std::vector<std::string> missing_tokens{"", "NA", "NaN", "null"};
    std::string task;  // empty: inferred
    std::map<std::string, std::string> column_kinds;
    std::vector<std::string> log1p_columns;
    bool log1p_response = false;
    std::string exposure_column;  // glm-baseline: ln(exposure) offset

    bool operator==(const DataConfig&) const = default;
};

struct EnsembleConfig {
    std::string strategy = "none";  // none | stacking | bagging | boosting
    std::size_t n_estimators = 5;
    std::string voting;  // empty: mean (regression), soft (classification), sum (boosting)
    double feature_fraction = 0.8;

    bool operator==(const EnsembleConfig&) const = default;
};

struct ExperimentConfig {
    std::string model_name = "experiment";
    DataConfig data;
    std::string objective;  // empty: task default
    std::size_t max_evals = 32;
    double timeout = 300.0;
    std::string validation = "holdout";
    double valid_size = 0.2;
    std::size_t folds = 5;
    std::string search_algo = "adaptive";
    EnsembleConfig ensemble;
    json space = nullptr;  // {"allow": {...}, "domains": {...}}
    double detection_threshold = default_detection_threshold;
    std::uint64_t seed = 0;
    std::optional<std::size_t> parallelism;  // unset: AUTOTAB_PARALLELISM or 1
    std::string output_dir = "output";

    bool operator==(const ExperimentConfig&) const = default;

    void check() const {
        require(!model_name.empty() && model_name.find('/') == std::string::npos, ErrorKind::config,
                "model_name must be a non-empty plain name");
        require(!data.train.empty(), ErrorKind::config, "data.train is required");
        require(!data.response.empty(), ErrorKind::config, "data.response is required");
        require(data.test_fraction >= 0.0 && data.test_fraction < 1.0, ErrorKind::config,
                "data.test_fraction must be in [0, 1)");
        if (!data.task.empty()) parse_task(data.task);
        for (const auto& [name, kind] : data.column_kinds) parse_column_kind(kind);
        Budget{timeout, max_evals}.check();
        ValidationPlan{parse_validation_mode(validation), valid_size, folds}.check();
        make_sampler(search_algo);
        if (ensemble.strategy != "none") {
            parse_strategy(ensemble.strategy);
            require(ensemble.n_estimators >= 1, ErrorKind::config, "ensemble.n_estimators must be >= 1");
            require(ensemble.feature_fraction > 0.0 && ensemble.feature_fraction <= 1.0, ErrorKind::config,
                    "ensemble.feature_fraction must be in (0, 1]");
            if (!ensemble.voting.empty()) parse_voting(ensemble.voting);
        }
        require(detection_threshold >= 1.0, ErrorKind::config, "detection_threshold must be >= 1");
        require(!parallelism || *parallelism >= 1, ErrorKind::config, "parallelism must be >= 1");
    }

    std::size_t effective_parallelism() const {
        if (parallelism) return *parallelism;
        if (const char* env = std::getenv("AUTOTAB_PARALLELISM")) {
            try {
                const long v = std::stol(env);
                if (v >= 1) return static_cast<std::size_t>(v);
            } catch (const std::exception&) {
            }
            warn(std::string("ignoring AUTOTAB_PARALLELISM='") + env + "'");
        }
        return 1;
    }

    std::filesystem::path output_path() const { return std::filesystem::path(output_dir) / model_name; }
};

inline void to_json(json& j, const DataConfig& d) {
    j = json{{"train", d.train},
             {"response", d.response},
             {"test", d.test},
             {"test_fraction", d.test_fraction},
             {"missing_tokens", d.missing_tokens},
             {"task", d.task},
             {"column_kinds", d.column_kinds},
             {"log1p_columns", d.log1p_columns},
             {"log1p_response", d.log1p_response},
             {"exposure_column", d.exposure_column}};
}

inline void from_json(const json& j, DataConfig& d) {
    d = DataConfig{};
    d.train = j.value("train", d.train);
    d.response = j.value("response", d.response);
    d.test = j.value("test", d.test);
    d.test_fraction = j.value("test_fraction", d.test_fraction);
    d.missing_tokens = j.value("missing_tokens", d.missing_tokens);
    d.task = j.value("task", d.task);
    d.column_kinds = j.value("column_kinds", d.column_kinds);
    d.log1p_columns = j.value("log1p_columns", d.log1p_columns);
    d.log1p_response = j.value("log1p_response", d.log1p_response);
    d.exposure_column = j.value("exposure_column", d.exposure_column);
}

inline void to_json(json& j, const EnsembleConfig& e) {
    j = json{{"strategy", e.strategy},
             {"n_estimators", e.n_estimators},
             {"voting", e.voting},
             {"feature_fraction", e.feature_fraction}};
}

inline void from_json(const json& j, EnsembleConfig& e) {
    e = EnsembleConfig{};
    // An ensemble block without a strategy means stacking.
    e.strategy = j.value("strategy", std::string("stacking"));
    e.n_estimators = j.value("n_estimators", e.n_estimators);
    e.voting = j.value("voting", e.voting);
    e.feature_fraction = j.value("feature_fraction", e.feature_fraction);
}

inline void to_json(json& j, const ExperimentConfig& c) {
    j = json{{"model_name", c.model_name},
             {"data", c.data},
             {"objective", c.objective},
             {"max_evals", c.max_evals},
             {"timeout", c.timeout},
             {"validation", c.validation},
             {"valid_size", c.valid_size},
             {"folds", c.folds},
             {"search_algo", c.search_algo},
             {"ensemble", c.ensemble},
             {"space", c.space},
             {"detection_threshold", c.detection_threshold},
             {"seed", c.seed},
             {"parallelism", c.parallelism ? json(*c.parallelism) : json(nullptr)},
             {"output_dir", c.output_dir}};
}

inline void from_json(const json& j, ExperimentConfig& c) {
    require(j.is_object(), ErrorKind::config, "configuration must be an object");
    static const std::set<std::string> known{"model_name", "data",     "objective",   "max_evals",
                                             "timeout",    "validation", "valid_size", "folds",
                                             "search_algo", "ensemble", "space",      "detection_threshold",
                                             "seed",       "parallelism", "output_dir"};
    for (const auto& [key, value] : j.items()) {
        require(known.contains(key), ErrorKind::config, "unknown configuration key '" + key + "'");
    }
    c = ExperimentConfig{};
    c.model_name = j.value("model_name", c.model_name);
    if (j.contains("data")) c.data = j.at("data").get<DataConfig>();
    c.objective = j.value("objective", c.objective);
    c.max_evals = j.value("max_evals", c.max_evals);
    c.timeout = j.value("timeout", c.timeout);
    c.validation = j.value("validation", c.validation);
    c.valid_size = j.value("valid_size", c.valid_size);
    c.folds = j.value("folds", c.folds);
    c.search_algo = j.value("search_algo", c.search_algo);
    if (j.contains("ensemble")) c.ensemble = j.at("ensemble").get<EnsembleConfig>();
    if (j.contains("space")) c.space = j.at("space");
    c.detection_threshold = j.value("detection_threshold", c.detection_threshold);
    c.seed = j.value("seed", c.seed);
    if (j.contains("parallelism") && !j.at("parallelism").is_null()) c.parallelism = j.at("parallelism").get<std::size_t>();
    c.output_dir = j.value("output_dir", c.output_dir);
}

inline ExperimentConfig parse_config(const std::string& text) {
    try {
        return json::parse(text).get<ExperimentConfig>();
    } catch (const json::exception& e) {
        fail(ErrorKind::config, std::string("malformed configuration: ") + e.what());
    }
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::config, "cannot read configuration '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_config(buffer.str());
}

}  // namespace autotab
