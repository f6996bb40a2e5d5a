#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "autotab/error.hpp"
#include "autotab/linalg.hpp"
#include "autotab/tabular.hpp"

namespace autotab {

enum class Direction { minimize, maximize };

/// Point predictions (regression values or class codes) plus, for classifiers,
/// a rows x classes probability table.
struct PredictionBundle {
    std::vector<double> values;
    std::optional<Matrix> probabilities;

    std::size_t size() const { return values.size(); }

    /// Positive-class probabilities of a binary classifier.
    std::vector<double> positive_probabilities() const {
        require(probabilities.has_value() && probabilities->cols() == 2, ErrorKind::invalid_prediction,
                "binary class probabilities required");
        std::vector<double> out(static_cast<std::size_t>(probabilities->rows()));
        for (Eigen::Index r = 0; r < probabilities->rows(); ++r) out[static_cast<std::size_t>(r)] = (*probabilities)(r, 1);
        return out;
    }
};

inline bool is_row_stochastic(const Matrix& p, double tolerance = 1e-9) {
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        double sum = 0.0;
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
            const double v = p(r, c);
            if (!(v >= 0.0 && v <= 1.0)) return false;
            sum += v;
        }
        if (std::abs(sum - 1.0) > tolerance) return false;
    }
    return true;
}

namespace detail {
inline void check_lengths(std::span<const double> y, std::span<const double> yhat) {
    require(y.size() == yhat.size(), ErrorKind::contract,
            "length mismatch: " + std::to_string(y.size()) + " vs " + std::to_string(yhat.size()));
    require(!y.empty(), ErrorKind::contract, "empty input");
}
inline void check_finite(std::span<const double> yhat) {
    for (double v : yhat) {
        require(std::isfinite(v), ErrorKind::invalid_prediction, "non-finite prediction");
    }
}
}  // namespace detail

/// Mean Poisson deviance (2/Z) sum(yhat - y + y log(y/yhat)); a zero count contributes yhat.
inline double poisson_deviance(std::span<const double> y, std::span<const double> yhat) {
    detail::check_lengths(y, yhat);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        require(y[i] >= 0.0, ErrorKind::domain, "poisson deviance needs non-negative responses");
        require(std::isfinite(yhat[i]) && yhat[i] > 0.0, ErrorKind::invalid_prediction,
                "poisson deviance needs strictly positive predictions");
        double term = yhat[i] - y[i];
        if (y[i] > 0.0) term += y[i] * std::log(y[i] / yhat[i]);
        sum += term;
    }
    return 2.0 * sum / static_cast<double>(y.size());
}

/// Coefficient of determination 1 - RSS/TSS.
inline double r2_score(std::span<const double> y, std::span<const double> yhat) {
    detail::check_lengths(y, yhat);
    require(y.size() >= 2, ErrorKind::undefined_metric, "r2 needs at least two observations");
    detail::check_finite(yhat);
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double rss = 0.0;
    double tss = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        rss += (yhat[i] - y[i]) * (yhat[i] - y[i]);
        tss += (y[i] - mean) * (y[i] - mean);
    }
    require(tss > 0.0, ErrorKind::undefined_metric, "r2 undefined for a constant response");
    return 1.0 - rss / tss;
}

/// Area under the ROC curve as the fraction of (negative, positive) pairs ordered
/// correctly; tied scores count one half. Computed from average ranks in O(n log n).
inline double auc(std::span<const double> y, std::span<const double> scores) {
    detail::check_lengths(y, scores);
    detail::check_finite(scores);
    std::vector<std::size_t> order(y.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double positives = 0.0;
    double negatives = 0.0;
    double positive_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double average_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t t = i; t < j; ++t) {
            const double label = y[order[t]];
            require(label == 0.0 || label == 1.0, ErrorKind::contract, "auc needs binary 0/1 labels");
            if (label == 1.0) {
                positives += 1.0;
                positive_rank_sum += average_rank;
            } else {
                negatives += 1.0;
            }
        }
        i = j;
    }
    require(positives > 0.0 && negatives > 0.0, ErrorKind::undefined_metric, "auc needs both classes present");
    return (positive_rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

inline double mse(std::span<const double> y, std::span<const double> yhat) {
    detail::check_lengths(y, yhat);
    detail::check_finite(yhat);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return sum / static_cast<double>(y.size());
}

inline double mae(std::span<const double> y, std::span<const double> yhat) {
    detail::check_lengths(y, yhat);
    detail::check_finite(yhat);
    double sum = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) sum += std::abs(y[i] - yhat[i]);
    return sum / static_cast<double>(y.size());
}

inline double accuracy(std::span<const double> y, std::span<const double> yhat) {
    detail::check_lengths(y, yhat);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hits += y[i] == yhat[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(y.size());
}

using MetricFn = std::function<double(std::span<const double>, const PredictionBundle&)>;

struct Metric {
    std::string id;
    Direction direction = Direction::minimize;
    bool needs_probabilities = false;
    MetricFn fn;

    double raw(std::span<const double> y, const PredictionBundle& prediction) const {
        if (needs_probabilities) {
            require(prediction.probabilities.has_value(), ErrorKind::invalid_prediction,
                    "metric '" + id + "' needs class probabilities");
        }
        return fn(y, prediction);
    }

    /// Loss the engine minimizes: maximize-direction metrics are negated.
    double engine_loss(std::span<const double> y, const PredictionBundle& prediction) const {
        return to_loss(raw(y, prediction));
    }

    double to_loss(double raw_value) const { return direction == Direction::minimize ? raw_value : -raw_value; }
    double from_loss(double loss) const { return direction == Direction::minimize ? loss : -loss; }
};

namespace detail {
inline std::span<const double> values(const PredictionBundle& p) { return {p.values.data(), p.values.size()}; }

inline std::vector<Metric> builtin_metrics() {
    return {
        {"poisson_deviance", Direction::minimize, false,
         [](std::span<const double> y, const PredictionBundle& p) { return poisson_deviance(y, values(p)); }},
        {"r2", Direction::maximize, false,
         [](std::span<const double> y, const PredictionBundle& p) { return r2_score(y, values(p)); }},
        {"auc", Direction::maximize, true,
         [](std::span<const double> y, const PredictionBundle& p) {
             const auto scores = p.positive_probabilities();
             return auc(y, scores);
         }},
        {"gini", Direction::maximize, true,
         [](std::span<const double> y, const PredictionBundle& p) {
             const auto scores = p.positive_probabilities();
             return 2.0 * auc(y, scores) - 1.0;
         }},
        {"mse", Direction::minimize, false,
         [](std::span<const double> y, const PredictionBundle& p) { return mse(y, values(p)); }},
        {"mae", Direction::minimize, false,
         [](std::span<const double> y, const PredictionBundle& p) { return mae(y, values(p)); }},
        {"accuracy", Direction::maximize, false,
         [](std::span<const double> y, const PredictionBundle& p) { return accuracy(y, values(p)); }},
    };
}
}  // namespace detail

/// Built-in metrics plus user-registered customs. Customs are addressed as
/// "custom:<id>" (or bare "<id>"); ids are unique across both groups.
class MetricRegistry {
public:
    MetricRegistry() {
        for (auto& m : detail::builtin_metrics()) builtins_.emplace(m.id, std::move(m));
    }

    static MetricRegistry& global() {
        static MetricRegistry registry;
        return registry;
    }

    const Metric& register_custom(std::string id, MetricFn fn, Direction direction, bool needs_probabilities) {
        std::unique_lock lock(mutex_);
        if (id.starts_with("custom:")) id = id.substr(7);
        require(!id.empty(), ErrorKind::registration, "metric id is empty");
        require(!builtins_.contains(id) && !customs_.contains(id), ErrorKind::registration,
                "metric '" + id + "' is already registered");
        require(static_cast<bool>(fn), ErrorKind::registration, "metric '" + id + "' has no function");
        auto [it, inserted] = customs_.emplace(id, Metric{id, direction, needs_probabilities, std::move(fn)});
        return it->second;
    }

    bool contains(const std::string& name) const {
        std::shared_lock lock(mutex_);
        return find_locked(name) != nullptr;
    }

    Metric get(const std::string& name) const {
        std::shared_lock lock(mutex_);
        const Metric* metric = find_locked(name);
        require(metric != nullptr, ErrorKind::config, "unknown metric '" + name + "'");
        return *metric;
    }

private:
    const Metric* find_locked(const std::string& name) const {
        if (name.starts_with("custom:")) {
            const auto it = customs_.find(name.substr(7));
            return it == customs_.end() ? nullptr : &it->second;
        }
        if (const auto it = builtins_.find(name); it != builtins_.end()) return &it->second;
        if (const auto it = customs_.find(name); it != customs_.end()) return &it->second;
        return nullptr;
    }

    mutable std::shared_mutex mutex_;
    std::map<std::string, Metric> builtins_;
    std::map<std::string, Metric> customs_;
};

inline Metric get_metric(const std::string& name) { return MetricRegistry::global().get(name); }

inline const Metric& register_custom_metric(std::string id, MetricFn fn, Direction direction,
                                            bool needs_probabilities) {
    return MetricRegistry::global().register_custom(std::move(id), std::move(fn), direction, needs_probabilities);
}

/// Metric/task compatibility checked before a search starts.
inline void check_metric_for_task(const Metric& metric, TaskKind task) {
    const std::string& id = metric.id;
    if (id == "auc" || id == "gini") {
        require(task == TaskKind::binary_classification, ErrorKind::config,
                "objective '" + id + "' needs a binary classification task");
    } else if (id == "accuracy") {
        require(is_classification(task), ErrorKind::config, "objective 'accuracy' needs a classification task");
    } else if (id == "poisson_deviance" || id == "r2" || id == "mse" || id == "mae") {
        require(task == TaskKind::regression, ErrorKind::config, "objective '" + id + "' needs a regression task");
    }
}

/// Metrics reported next to the objective for a task.
inline std::vector<std::string> report_metrics(TaskKind task, bool count_response) {
    if (task == TaskKind::regression) {
        std::vector<std::string> out{"mse", "mae", "r2"};
        if (count_response) out.insert(out.begin(), "poisson_deviance");
        return out;
    }
    if (task == TaskKind::binary_classification) return {"accuracy", "auc", "gini"};
    return {"accuracy"};
}

}  // namespace autotab
