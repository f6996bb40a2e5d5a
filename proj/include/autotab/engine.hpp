#pragma once

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "autotab/deadline.hpp"
#include "autotab/metrics.hpp"
#include "autotab/pipeline.hpp"
#include "autotab/space.hpp"
#include "autotab/tabular.hpp"

namespace autotab {

inline constexpr int history_version = 1;
inline constexpr int model_version = 1;

enum class ValidationMode { none, holdout, kfold };

inline std::string to_string(ValidationMode m) {
    switch (m) {
        case ValidationMode::none: return "none";
        case ValidationMode::holdout: return "holdout";
        case ValidationMode::kfold: return "kfold";
    }
    return "holdout";
}

inline ValidationMode parse_validation_mode(const std::string& s) {
    if (s == "none") return ValidationMode::none;
    if (s == "holdout") return ValidationMode::holdout;
    if (s == "kfold") return ValidationMode::kfold;
    fail(ErrorKind::config, "unknown validation '" + s + "' (expected none, holdout or kfold)");
}

struct ValidationPlan {
    ValidationMode mode = ValidationMode::holdout;
    double valid_fraction = 0.2;
    std::size_t folds = 5;

    void check() const {
        if (mode == ValidationMode::holdout) {
            require(valid_fraction > 0.0 && valid_fraction < 1.0, ErrorKind::config, "valid_size must be in (0, 1)");
        }
        if (mode == ValidationMode::kfold) require(folds >= 2, ErrorKind::config, "kfold needs folds >= 2");
    }
};

/// Train/score views the objective is evaluated on, built once per search.
struct ValidationViews {
    struct Fold {
        Dataset train;
        Dataset valid;
    };
    ValidationMode mode = ValidationMode::holdout;
    std::vector<Fold> folds;
    const Dataset* full = nullptr;
};

inline ValidationViews make_views(const Dataset& data, const ValidationPlan& plan, std::uint64_t seed) {
    plan.check();
    ValidationViews views;
    views.mode = plan.mode;
    views.full = &data;
    switch (plan.mode) {
        case ValidationMode::none: break;
        case ValidationMode::holdout: {
            const auto s = split(data.rows(), 0.0, plan.valid_fraction, seed);
            require(!s.valid_indices.empty(), ErrorKind::config, "validation split is empty; raise valid_size");
            views.folds.push_back({data.take(s.train_indices), data.take(s.valid_indices)});
            break;
        }
        case ValidationMode::kfold: {
            require(data.rows() >= plan.folds, ErrorKind::config, "fewer rows than folds");
            const auto plan_rows = make_folds(data.rows(), plan.folds, seed);
            for (std::size_t f = 0; f < plan.folds; ++f) {
                views.folds.push_back({data.take(plan_rows.complement_rows(f)), data.take(plan_rows.fold_rows(f))});
            }
            break;
        }
    }
    return views;
}

enum class TrialStatus { valid, invalid, failed };

inline std::string to_string(TrialStatus s) {
    switch (s) {
        case TrialStatus::valid: return "valid";
        case TrialStatus::invalid: return "invalid";
        case TrialStatus::failed: return "failed";
    }
    return "failed";
}

inline TrialStatus parse_trial_status(const std::string& s) {
    if (s == "valid") return TrialStatus::valid;
    if (s == "invalid") return TrialStatus::invalid;
    if (s == "failed") return TrialStatus::failed;
    fail(ErrorKind::format, "unknown trial status '" + s + "'");
}

struct TrialRecord {
    std::size_t k = 0;
    PipelineSpec spec;
    std::optional<double> loss;  // engine loss; set iff status is valid
    std::vector<double> fold_losses;
    TrialStatus status = TrialStatus::failed;
    std::string reason;   // error kind for invalid/failed trials
    std::string message;  // full error text
    double fit_seconds = 0.0;
    std::shared_ptr<const TrainedPipeline> pipeline;

    bool valid() const { return status == TrialStatus::valid; }
};

namespace detail {

inline void classify_failure(TrialRecord& record, const Error& e) {
    const bool invalid = e.kind() == ErrorKind::invalid_prediction || e.kind() == ErrorKind::undefined_metric;
    record.status = invalid ? TrialStatus::invalid : TrialStatus::failed;
    record.reason = std::string(to_string(e.kind()));
    record.message = e.what();
}

inline double score(const TrainedPipeline& pipeline, const Dataset& valid, const Metric& metric) {
    const auto prediction = pipeline.predict(valid);
    const double loss = metric.engine_loss({valid.y.data(), static_cast<std::size_t>(valid.y.size())}, prediction);
    require(std::isfinite(loss), ErrorKind::invalid_prediction, "loss is not finite");
    return loss;
}

}  // namespace detail

/// The objective: fit the pipeline on the training view(s) and score the held-out
/// view(s). Fit failures and invalid predictions are recorded, never thrown.
inline TrialRecord evaluate(const PipelineSpec& spec, std::size_t k, const ValidationViews& views, const Metric& metric,
                            double detection_threshold = default_detection_threshold) {
    TrialRecord record;
    record.k = k;
    record.spec = spec;
    try {
        std::shared_ptr<TrainedPipeline> pipeline;
        if (views.mode == ValidationMode::none) {
            pipeline = std::make_shared<TrainedPipeline>(TrainedPipeline::fit(spec, *views.full, detection_threshold));
            record.loss = detail::score(*pipeline, *views.full, metric);
        } else if (views.mode == ValidationMode::holdout) {
            const auto& fold = views.folds.front();
            pipeline = std::make_shared<TrainedPipeline>(TrainedPipeline::fit(spec, fold.train, detection_threshold));
            record.loss = detail::score(*pipeline, fold.valid, metric);
        } else {
            double sum = 0.0;
            for (const auto& fold : views.folds) {
                const auto fitted = TrainedPipeline::fit(spec, fold.train, detection_threshold);
                const double loss = detail::score(fitted, fold.valid, metric);
                record.fold_losses.push_back(loss);
                sum += loss;
            }
            record.loss = sum / static_cast<double>(views.folds.size());
            pipeline = std::make_shared<TrainedPipeline>(TrainedPipeline::fit(spec, *views.full, detection_threshold));
        }
        pipeline->set_trial(k);
        record.pipeline = std::move(pipeline);
        record.status = TrialStatus::valid;
    } catch (const Error& e) {
        record.loss.reset();
        record.fold_losses.clear();
        detail::classify_failure(record, e);
    } catch (const std::exception& e) {
        record.loss.reset();
        record.fold_losses.clear();
        record.status = TrialStatus::failed;
        record.reason = "internal";
        record.message = e.what();
    }
    return record;
}

struct Budget {
    double time_seconds = 60.0;  // T
    std::size_t max_evals = 32;  // G

    void check() const {
        require(time_seconds > 0.0 && std::isfinite(time_seconds), ErrorKind::config, "timeout must be positive");
        require(max_evals >= 1, ErrorKind::config, "max_evals must be >= 1");
    }
};

struct SearchOptions {
    ValidationPlan validation;
    double detection_threshold = default_detection_threshold;
    std::size_t parallelism = 1;
    std::uint64_t seed = 0;
    std::optional<double> trial_timeout;  // default T / G * 10
};

struct SearchResult {
    std::vector<TrialRecord> history;  // ordered by trial index
    std::optional<std::size_t> best;   // position in history
    double seconds_used = 0.0;         // budget consumed (sum of trial durations)
    double wall_seconds = 0.0;

    const TrialRecord& best_trial() const {
        require(best.has_value(), ErrorKind::optimization, "no valid trial");
        return history[*best];
    }

    std::map<std::string, std::size_t> failure_histogram() const {
        std::map<std::string, std::size_t> out;
        for (const auto& t : history) {
            if (!t.valid()) ++out[to_string(t.status) + ":" + t.reason];
        }
        return out;
    }

    /// Valid trials ordered by (loss, k).
    std::vector<const TrialRecord*> ranked() const {
        std::vector<const TrialRecord*> out;
        for (const auto& t : history) {
            if (t.valid()) out.push_back(&t);
        }
        std::sort(out.begin(), out.end(), [](const TrialRecord* a, const TrialRecord* b) {
            if (*a->loss != *b->loss) return *a->loss < *b->loss;
            return a->k < b->k;
        });
        return out;
    }
};

/// Best valid loss after each trial; nullopt until the first valid trial.
inline std::vector<std::optional<double>> incumbent_curve(const std::vector<TrialRecord>& history) {
    std::vector<std::optional<double>> curve;
    std::optional<double> best;
    for (const auto& t : history) {
        if (t.valid() && (!best || *t.loss < *best)) best = t.loss;
        curve.push_back(best);
    }
    return curve;
}

inline std::optional<std::size_t> best_position(const std::vector<TrialRecord>& history) {
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < history.size(); ++i) {
        const auto& t = history[i];
        if (!t.valid()) continue;
        if (!best || *t.loss < *history[*best].loss ||
            (*t.loss == *history[*best].loss && t.k < history[*best].k)) {
            best = i;
        }
    }
    return best;
}

namespace detail {

inline void finish(SearchResult& result) {
    std::sort(result.history.begin(), result.history.end(),
              [](const TrialRecord& a, const TrialRecord& b) { return a.k < b.k; });
    result.best = best_position(result.history);
}

}  // namespace detail

/// Budgeted search loop. Both budgets are audited before each trial starts; a
/// trial in flight always completes, so the loop may overshoot T by one trial.
/// With parallelism 1 every trial's duration runs from the end of the previous
/// one, so the consumed time budget equals the loop's wall time.
inline SearchResult run_search(const Dataset& data, const SearchSpace& space, const Budget& budget,
                               const Sampler& sampler, const Metric& metric, const SearchOptions& options) {
    budget.check();
    space.validate();
    check_metric_for_task(metric, data.task);
    require(options.parallelism >= 1, ErrorKind::config, "parallelism must be >= 1");
    const auto views = make_views(data, options.validation, derive_seed(options.seed, 0x5eed));
    const double timeout =
        options.trial_timeout.value_or(budget.time_seconds / static_cast<double>(budget.max_evals) * 10.0);
    const auto timeout_duration = std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(timeout));

    SearchResult result;
    std::vector<Observation> observations;
    const auto start = Clock::now();

    if (options.parallelism == 1) {
        double t_re = budget.time_seconds;
        std::size_t g_re = budget.max_evals;
        auto mark = start;
        std::size_t k = 0;
        while (t_re > 0.0 && g_re > 0) {
            const auto spec = sampler.sample(space, observations, options.seed, k);
            TrialRecord record;
            {
                ScopedDeadline deadline(Clock::now() + timeout_duration);
                record = evaluate(spec, k, views, metric, options.detection_threshold);
            }
            const auto end = Clock::now();
            record.fit_seconds = seconds_between(mark, end);
            mark = end;
            t_re -= record.fit_seconds;
            g_re -= 1;
            result.seconds_used += record.fit_seconds;
            observations.push_back({k, record.spec, record.loss});
            result.history.push_back(std::move(record));
            ++k;
        }
        result.wall_seconds = seconds_between(start, Clock::now());
        detail::finish(result);
        return result;
    }

    std::mutex mutex;
    std::size_t next_k = 0;
    std::size_t g_re = budget.max_evals;
    auto worker = [&] {
        for (;;) {
            PipelineSpec spec;
            std::size_t k;
            Clock::time_point trial_start;
            {
                std::lock_guard lock(mutex);
                const double t_re = budget.time_seconds - seconds_between(start, Clock::now());
                if (!(t_re > 0.0) || g_re == 0) return;
                --g_re;
                k = next_k++;
                trial_start = Clock::now();
                spec = sampler.sample(space, observations, options.seed, k);
            }
            TrialRecord record;
            {
                ScopedDeadline deadline(trial_start + timeout_duration);
                record = evaluate(spec, k, views, metric, options.detection_threshold);
            }
            record.fit_seconds = seconds_between(trial_start, Clock::now());
            std::lock_guard lock(mutex);
            observations.push_back({k, record.spec, record.loss});
            result.history.push_back(std::move(record));
        }
    };
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < options.parallelism; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    result.wall_seconds = seconds_between(start, Clock::now());
    result.seconds_used = result.wall_seconds;
    detail::finish(result);
    return result;
}

/// run_search that insists on at least one valid trial.
inline SearchResult optimize(const Dataset& data, const SearchSpace& space, const Budget& budget,
                             const Sampler& sampler, const Metric& metric, const SearchOptions& options) {
    auto result = run_search(data, space, budget, sampler, metric, options);
    if (!result.best) {
        throw OptimizationError("no valid trial among " + std::to_string(result.history.size()),
                                result.failure_histogram());
    }
    return result;
}

// ---- persistence -------------------------------------------------------------

inline json trial_to_json(const TrialRecord& t) {
    json j{{"version", history_version},
           {"k", t.k},
           {"status", to_string(t.status)},
           {"loss", t.loss ? json(*t.loss) : json(nullptr)},
           {"fold_losses", t.fold_losses},
           {"spec", t.spec.to_json()}};
    if (!t.valid()) {
        j["reason"] = t.reason;
        j["message"] = t.message;
    }
    return j;
}

inline TrialRecord trial_from_json(const json& j) {
    require(j.is_object() && j.contains("version"), ErrorKind::format, "history record lacks a version");
    require(j.at("version").get<int>() == history_version, ErrorKind::format,
            "history version " + j.at("version").dump() + " is not supported");
    TrialRecord t;
    t.k = j.at("k").get<std::size_t>();
    t.status = parse_trial_status(j.at("status").get<std::string>());
    if (!j.at("loss").is_null()) t.loss = j.at("loss").get<double>();
    t.fold_losses = j.at("fold_losses").get<std::vector<double>>();
    t.spec = PipelineSpec::from_json(j.at("spec"));
    t.reason = j.value("reason", "");
    t.message = j.value("message", "");
    require(t.valid() == t.loss.has_value(), ErrorKind::format, "history record status and loss disagree");
    return t;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
    out << text;
    if (!out) fail(ErrorKind::io, "failed writing '" + path.string() + "'");
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot read '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

inline void ensure_directory(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) fail(ErrorKind::io, "cannot create directory '" + dir.string() + "'");
}

/// Writes history.jsonl (one record per trial, no timing so reruns compare
/// byte-for-byte), timing.jsonl, and manifest.json. Returns the manifest.
inline json persist_history(const SearchResult& result, const std::filesystem::path& dir, const json& extra = {}) {
    ensure_directory(dir);
    std::string history, timing;
    for (const auto& t : result.history) {
        history += trial_to_json(t).dump() + "\n";
        timing += json{{"k", t.k}, {"seconds", t.fit_seconds}}.dump() + "\n";
    }
    write_text(dir / "history.jsonl", history);
    write_text(dir / "timing.jsonl", timing);
    json manifest = extra.is_object() ? extra : json::object();
    manifest["version"] = history_version;
    manifest["trials"] = result.history.size();
    manifest["seconds_used"] = result.seconds_used;
    manifest["best_k"] = result.best ? json(result.history[*result.best].k) : json(nullptr);
    manifest["best_loss"] = result.best ? json(*result.history[*result.best].loss) : json(nullptr);
    manifest["failures"] = result.failure_histogram();
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    return manifest;
}

inline std::vector<TrialRecord> read_history(const std::filesystem::path& path) {
    const std::string text = read_text(path);
    std::vector<TrialRecord> out;
    std::istringstream lines(text);
    std::string line;
    std::size_t number = 0;
    while (std::getline(lines, line)) {
        ++number;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            fail(ErrorKind::format, path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
        try {
            out.push_back(trial_from_json(j));
        } catch (const json::exception& e) {
            fail(ErrorKind::format, path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

/// Model file: format tag, version, optional fit-time schema and the predictor.
inline void save_model(const Predictor& predictor, const std::filesystem::path& path, const json& schema = nullptr) {
    json j{{"format", "autotab-model"}, {"version", model_version}, {"schema", schema}, {"predictor", predictor.to_json()}};
    write_text(path, j.dump() + "\n");
}

inline json read_model_file(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text(path));
    } catch (const json::exception& e) {
        fail(ErrorKind::format, "'" + path.string() + "' is not a model file: " + e.what());
    }
    require(j.is_object() && j.value("format", "") == "autotab-model", ErrorKind::format,
            "'" + path.string() + "' is not a model file");
    require(j.value("version", -1) == model_version, ErrorKind::format,
            "model version " + j.value("version", json(nullptr)).dump() + " is not supported");
    return j;
}

inline TrainedPipeline load_pipeline(const std::filesystem::path& path) {
    const auto j = read_model_file(path);
    try {
        return TrainedPipeline::from_json(j.at("predictor"));
    } catch (const json::exception& e) {
        fail(ErrorKind::format, "corrupt pipeline in '" + path.string() + "': " + e.what());
    }
}

}  // namespace autotab
