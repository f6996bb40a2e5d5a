#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "autotab/engine.hpp"
#include "autotab/pipeline.hpp"

namespace autotab {

enum class Strategy { stacking, bagging, boosting };
enum class Voting { sum, mean, median, max, hard, soft };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::stacking: return "stacking";
        case Strategy::bagging: return "bagging";
        case Strategy::boosting: return "boosting";
    }
    return "stacking";
}

inline Strategy parse_strategy(const std::string& s) {
    if (s == "stacking") return Strategy::stacking;
    if (s == "bagging") return Strategy::bagging;
    if (s == "boosting") return Strategy::boosting;
    fail(ErrorKind::config, "unknown ensemble strategy '" + s + "'");
}

inline std::string to_string(Voting v) {
    static const char* names[] = {"sum", "mean", "median", "max", "hard", "soft"};
    return names[static_cast<int>(v)];
}

inline Voting parse_voting(const std::string& s) {
    for (auto v : {Voting::sum, Voting::mean, Voting::median, Voting::max, Voting::hard, Voting::soft}) {
        if (to_string(v) == s) return v;
    }
    fail(ErrorKind::config, "unknown voting '" + s + "'");
}

inline Voting default_voting(Strategy strategy, TaskKind task) {
    if (strategy == Strategy::boosting) return Voting::sum;
    return is_classification(task) ? Voting::soft : Voting::mean;
}

inline void check_voting(Strategy strategy, Voting voting, TaskKind task) {
    if (strategy == Strategy::boosting) {
        require(task == TaskKind::regression, ErrorKind::unsupported, "boosting supports regression only");
        require(voting == Voting::sum, ErrorKind::config, "boosting combines members by sum voting");
        return;
    }
    if (is_classification(task)) {
        require(voting == Voting::hard || voting == Voting::soft, ErrorKind::config,
                "classification ensembles use hard or soft voting");
    } else {
        require(voting == Voting::mean || voting == Voting::median || voting == Voting::max, ErrorKind::config,
                "regression ensembles use mean, median or max voting");
    }
}

/// Column mask Q over the W feature columns; rho maps column w to position
/// sum_{a<=w} q_a, so X rho keeps the masked columns in their original order.
struct FeatureSubsetRule {
    std::vector<int> mask;

    std::size_t omega() const { return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)); }

    std::vector<std::size_t> indices() const {
        std::vector<std::size_t> out;
        for (std::size_t w = 0; w < mask.size(); ++w) {
            if (mask[w] == 1) out.push_back(w);
        }
        return out;
    }

    Matrix rho() const {
        Matrix r = Matrix::Zero(static_cast<Eigen::Index>(mask.size()), static_cast<Eigen::Index>(omega()));
        std::size_t position = 0;
        for (std::size_t w = 0; w < mask.size(); ++w) {
            position += static_cast<std::size_t>(mask[w]);
            if (mask[w] == 1) r(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(position - 1)) = 1.0;
        }
        return r;
    }

    Dataset apply(const Dataset& data) const {
        require(data.width() == mask.size(), ErrorKind::contract,
                "feature mask covers " + std::to_string(mask.size()) + " columns, data has " +
                    std::to_string(data.width()));
        const auto keep = indices();
        return data.select_columns(keep);
    }

    void check() const {
        for (int q : mask) require(q == 0 || q == 1, ErrorKind::config, "feature mask entries must be 0 or 1");
        require(omega() >= 1, ErrorKind::config, "feature mask keeps no column");
    }

    static FeatureSubsetRule random(std::size_t width, double feature_fraction, std::uint64_t seed) {
        require(feature_fraction > 0.0 && feature_fraction <= 1.0, ErrorKind::config,
                "feature_fraction must be in (0, 1]");
        const auto count = static_cast<std::size_t>(std::ceil(feature_fraction * static_cast<double>(width)));
        require(count >= 1, ErrorKind::config, "feature subset would be empty");
        Rng rng(seed);
        FeatureSubsetRule rule{std::vector<int>(width, 0)};
        for (auto w : rng.sample_without_replacement(width, std::min(count, width))) rule.mask[w] = 1;
        return rule;
    }
};

struct EnsembleMember {
    std::shared_ptr<const TrainedPipeline> pipeline;
    std::optional<FeatureSubsetRule> rule;  // bagging
    std::size_t stage = 0;                  // boosting order / bagging subset / stacking rank
    std::optional<double> loss;
};

/// H pipelines combined by a voting rule.
class EnsembleModel final : public Predictor {
public:
    EnsembleModel(Strategy strategy, Voting voting, TaskKind task, std::size_t classes,
                  std::vector<EnsembleMember> members)
        : strategy_(strategy), voting_(voting), task_(task), classes_(classes), members_(std::move(members)) {
        require(!members_.empty(), ErrorKind::ensemble, "ensemble has no members");
        check_voting(strategy_, voting_, task_);
    }

    Strategy strategy() const { return strategy_; }
    Voting voting() const { return voting_; }
    TaskKind task() const override { return task_; }
    std::size_t num_classes() const override { return classes_; }
    std::size_t size() const { return members_.size(); }
    const std::vector<EnsembleMember>& members() const { return members_; }

    PredictionBundle member_prediction(std::size_t h, const Dataset& data) const {
        const auto& m = members_.at(h);
        return m.rule ? m.pipeline->predict(m.rule->apply(data)) : m.pipeline->predict(data);
    }

    PredictionBundle predict(const Dataset& data) const override {
        std::vector<PredictionBundle> parts;
        for (std::size_t h = 0; h < members_.size(); ++h) parts.push_back(member_prediction(h, data));
        return combine(parts);
    }

    /// Applies the voting rule to member predictions computed elsewhere.
    PredictionBundle combine(const std::vector<PredictionBundle>& parts) const {
        const std::size_t n = parts.front().size();
        for (const auto& p : parts) require(p.size() == n, ErrorKind::contract, "member prediction lengths differ");
        const double h = static_cast<double>(parts.size());
        PredictionBundle out;
        out.values.resize(n);
        switch (voting_) {
            case Voting::sum:
            case Voting::mean:
                for (std::size_t r = 0; r < n; ++r) {
                    double sum = 0.0;
                    for (const auto& p : parts) sum += p.values[r];
                    out.values[r] = voting_ == Voting::sum ? sum : sum / h;
                }
                return out;
            case Voting::median:
            case Voting::max: {
                std::vector<double> column(parts.size());
                for (std::size_t r = 0; r < n; ++r) {
                    for (std::size_t i = 0; i < parts.size(); ++i) column[i] = parts[i].values[r];
                    std::sort(column.begin(), column.end());
                    const std::size_t m = column.size();
                    out.values[r] = voting_ == Voting::max
                                        ? column.back()
                                        : (m % 2 == 1 ? column[m / 2] : 0.5 * (column[m / 2 - 1] + column[m / 2]));
                }
                return out;
            }
            case Voting::soft: {
                Matrix total = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(classes_));
                for (const auto& p : parts) {
                    require(p.probabilities.has_value(), ErrorKind::contract, "soft voting needs member probabilities");
                    total += *p.probabilities;
                }
                return classification_bundle(total / h);
            }
            case Voting::hard: {
                Matrix votes = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(classes_));
                for (const auto& p : parts) {
                    for (std::size_t r = 0; r < n; ++r) {
                        votes(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(p.values[r])) += 1.0;
                    }
                }
                // Vote fractions double as probabilities for AUC-type metrics.
                return classification_bundle(votes / h);
            }
        }
        return out;
    }

    json to_json() const override {
        json members = json::array();
        for (const auto& m : members_) {
            members.push_back({{"stage", m.stage},
                               {"loss", m.loss ? json(*m.loss) : json(nullptr)},
                               {"mask", m.rule ? json(m.rule->mask) : json(nullptr)},
                               {"pipeline", m.pipeline->to_json()}});
        }
        return {{"kind", "ensemble"},
                {"strategy", to_string(strategy_)},
                {"voting", to_string(voting_)},
                {"task", to_string(task_)},
                {"classes", classes_},
                {"members", members}};
    }

    static EnsembleModel from_json(const json& j) {
        require(j.value("kind", "") == "ensemble", ErrorKind::format, "not a serialized ensemble");
        std::vector<EnsembleMember> members;
        for (const auto& m : j.at("members")) {
            EnsembleMember member;
            member.stage = m.at("stage").get<std::size_t>();
            if (!m.at("loss").is_null()) member.loss = m.at("loss").get<double>();
            if (!m.at("mask").is_null()) member.rule = FeatureSubsetRule{m.at("mask").get<std::vector<int>>()};
            member.pipeline = std::make_shared<TrainedPipeline>(TrainedPipeline::from_json(m.at("pipeline")));
            members.push_back(std::move(member));
        }
        return EnsembleModel(parse_strategy(j.at("strategy").get<std::string>()),
                             parse_voting(j.at("voting").get<std::string>()),
                             parse_task(j.at("task").get<std::string>()), j.at("classes").get<std::size_t>(),
                             std::move(members));
    }

private:
    Strategy strategy_;
    Voting voting_;
    TaskKind task_;
    std::size_t classes_;
    std::vector<EnsembleMember> members_;
};

/// Top-H valid trials by (loss, k); no refitting. H shrinks, with a warning, when
/// fewer valid trials exist.
inline EnsembleModel build_stacking(const std::vector<TrialRecord>& history, std::size_t h, Voting voting,
                                    TaskKind task, std::size_t classes) {
    require(h >= 1, ErrorKind::config, "ensemble needs n_estimators >= 1");
    std::vector<const TrialRecord*> ranked;
    for (const auto& t : history) {
        if (t.valid() && t.pipeline) ranked.push_back(&t);
    }
    std::sort(ranked.begin(), ranked.end(), [](const TrialRecord* a, const TrialRecord* b) {
        if (*a->loss != *b->loss) return *a->loss < *b->loss;
        return a->k < b->k;
    });
    if (ranked.empty()) {
        std::map<std::string, std::size_t> histogram;
        for (const auto& t : history) ++histogram[to_string(t.status) + ":" + t.reason];
        throw OptimizationError("stacking found no valid trial", histogram);
    }
    if (ranked.size() < h) {
        warn("only " + std::to_string(ranked.size()) + " valid pipelines; stacking shrinks from " + std::to_string(h) +
             " to " + std::to_string(ranked.size()) + " members");
        h = ranked.size();
    }
    std::vector<EnsembleMember> members;
    for (std::size_t i = 0; i < h; ++i) members.push_back({ranked[i]->pipeline, std::nullopt, i, ranked[i]->loss});
    return EnsembleModel(Strategy::stacking, voting, task, classes, std::move(members));
}

inline Budget split_budget(const Budget& budget, std::size_t h) {
    require(h >= 1, ErrorKind::config, "ensemble needs n_estimators >= 1");
    const std::size_t evals = budget.max_evals / h;
    require(evals >= 1, ErrorKind::config,
            "max_evals " + std::to_string(budget.max_evals) + " leaves no trial per member for n_estimators " +
                std::to_string(h));
    return Budget{budget.time_seconds / static_cast<double>(h), evals};
}

struct EnsembleBuild {
    EnsembleModel model;
    std::vector<SearchResult> searches;  // one per subset / stage
};

/// H independent searches, each on a random feature subset with budget (T/H, G//H).
inline EnsembleBuild build_bagging(const Dataset& data, const SearchSpace& space, const Budget& budget,
                                   const Sampler& sampler, const Metric& metric, const SearchOptions& options,
                                   std::size_t h, double feature_fraction, Voting voting) {
    check_voting(Strategy::bagging, voting, data.task);
    const Budget member_budget = split_budget(budget, h);
    std::vector<EnsembleMember> members;
    std::vector<SearchResult> searches;
    for (std::size_t i = 0; i < h; ++i) {
        const auto rule = FeatureSubsetRule::random(data.width(), feature_fraction, derive_seed(options.seed, 0xba9, i));
        SearchOptions member_options = options;
        member_options.seed = derive_seed(options.seed, 0xba9 + 1, i);
        auto result = run_search(rule.apply(data), space, member_budget, sampler, metric, member_options);
        if (!result.best) {
            throw Error(ErrorKind::ensemble, "bagging subset " + std::to_string(i) + " produced no valid trial");
        }
        const auto& best = result.best_trial();
        members.push_back({best.pipeline, rule, i, best.loss});
        searches.push_back(std::move(result));
    }
    return {EnsembleModel(Strategy::bagging, voting, data.task, data.num_classes(), std::move(members)),
            std::move(searches)};
}

/// Sequential searches on residuals: stage 1 fits y with the caller's seed (so H=1
/// is a plain search), stage h fits y - sum_{j<h} P_j(X). Stages are scored in
/// residual space; a Poisson objective falls back to mse from stage 2 on, since
/// residuals are not counts.
inline EnsembleBuild build_boosting(const Dataset& data, const SearchSpace& space, const Budget& budget,
                                    const Sampler& sampler, const Metric& metric, const SearchOptions& options,
                                    std::size_t h) {
    require(data.task == TaskKind::regression, ErrorKind::unsupported, "boosting supports regression only");
    const Budget stage_budget = split_budget(budget, h);
    std::vector<EnsembleMember> members;
    std::vector<SearchResult> searches;
    Vector residual = data.y;
    for (std::size_t i = 0; i < h; ++i) {
        const Dataset stage_data = data.with_response(residual);
        Metric stage_metric = metric;
        if (i > 0 && metric.id == "poisson_deviance") stage_metric = get_metric("mse");
        SearchOptions stage_options = options;
        if (i > 0) stage_options.seed = derive_seed(options.seed, 0xb005, i);
        auto result = run_search(stage_data, space, stage_budget, sampler, stage_metric, stage_options);
        if (!result.best) {
            searches.push_back(std::move(result));
            if (i == 0) throw Error(ErrorKind::ensemble, "boosting stage 0 produced no valid trial");
            warn("boosting stage " + std::to_string(i) + " produced no valid trial; ensemble truncated at " +
                 std::to_string(i) + " stages");
            break;
        }
        const auto& best = result.best_trial();
        const auto prediction = best.pipeline->predict(data);
        for (Eigen::Index r = 0; r < residual.size(); ++r) residual[r] -= prediction.values[static_cast<std::size_t>(r)];
        members.push_back({best.pipeline, std::nullopt, i, best.loss});
        searches.push_back(std::move(result));
    }
    return {EnsembleModel(Strategy::boosting, Voting::sum, data.task, 0, std::move(members)), std::move(searches)};
}

inline std::unique_ptr<Predictor> predictor_from_json(const json& j) {
    const auto kind = j.value("kind", "");
    if (kind == "pipeline") return std::make_unique<TrainedPipeline>(TrainedPipeline::from_json(j));
    if (kind == "ensemble") return std::make_unique<EnsembleModel>(EnsembleModel::from_json(j));
    fail(ErrorKind::format, "unknown predictor kind '" + kind + "'");
}

inline std::unique_ptr<Predictor> load_predictor(const std::filesystem::path& path) {
    const auto j = read_model_file(path);
    try {
        return predictor_from_json(j.at("predictor"));
    } catch (const json::exception& e) {
        fail(ErrorKind::format, "corrupt model in '" + path.string() + "': " + e.what());
    }
}

}  // namespace autotab
