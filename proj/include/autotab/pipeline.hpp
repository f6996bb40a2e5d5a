#pragma once

#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "autotab/balance.hpp"
#include "autotab/models.hpp"
#include "autotab/preprocess.hpp"
#include "autotab/space.hpp"
#include "autotab/tabular.hpp"

namespace autotab {

/// Anything that maps a feature table to predictions: a single pipeline or an ensemble.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual PredictionBundle predict(const Dataset& data) const = 0;
    virtual json to_json() const = 0;
    virtual TaskKind task() const = 0;
    virtual std::size_t num_classes() const = 0;
};

inline constexpr double default_detection_threshold = 3.0;

/// Fitted E -> I -> B -> S -> F -> M chain. Balancing runs on the training rows
/// during fit only; prediction applies E, I, S, F, M.
class TrainedPipeline final : public Predictor {
public:
    static TrainedPipeline fit(const PipelineSpec& spec, const Dataset& train,
                               double detection_threshold = default_detection_threshold) {
        require(train.rows() > 0, ErrorKind::fit, "empty training set");
        TrainedPipeline p;
        p.spec_ = spec;
        p.task_ = train.task;
        p.classes_ = is_classification(train.task) ? train.num_classes() : 0;

        const auto& e = spec[Stage::encode];
        const auto& i = spec[Stage::impute];
        const auto& b = spec[Stage::balance];
        const auto& s = spec[Stage::scale];
        const auto& f = spec[Stage::select];
        const auto& m = spec[Stage::model];

        p.encoder_ = Encoder(parse_encode_method(e.method));
        Matrix x = p.encoder_.fit_transform(train);
        check_deadline();

        p.imputer_ = Imputer(parse_impute_method(i.method), get_real(i.params, "value", 0.0),
                             to_count(get_int(i.params, "k", 5), "k"));
        x = p.imputer_.fit_transform(x);
        check_deadline();

        Vector y = train.y;
        const auto balance = parse_balance_method(b.method);
        if (balance != BalanceMethod::none) {
            require(is_classification(train.task), ErrorKind::unsupported, "balancing needs a classification task");
            BalancerSpec bs{balance, get_real(b.params, "ratio", 1.0), to_count(get_int(b.params, "k", 5), "k"),
                            derive_seed(spec.seed, static_cast<std::uint64_t>(Stage::balance))};
            auto resampled = apply_balancer(bs, x, y, detection_threshold);
            x = std::move(resampled.x);
            y = std::move(resampled.y);
            check_deadline();
        }
        p.balanced_rows_ = static_cast<std::size_t>(y.size());

        p.scaler_ = Scaler(parse_scale_method(s.method));
        x = p.scaler_.fit_transform(x);

        p.selector_ = Selector(parse_select_method(f.method), get_real(f.params, "threshold", 0.0),
                               to_count(get_int(f.params, "k", 1), "k"));
        x = p.selector_.fit_transform(x, y);
        check_deadline();

        auto model = make_model(m.method, m.params, train.task, p.classes_,
                                derive_seed(spec.seed, static_cast<std::uint64_t>(Stage::model)));
        model->fit(x, y);
        p.model_ = std::move(model);
        return p;
    }

    /// The numeric design matrix the model sees (stages E, I, S, F).
    Matrix transform(const Dataset& data) const {
        Matrix x = encoder_.transform(data);
        x = imputer_.transform(x);
        x = scaler_.transform(x);
        return selector_.transform(x);
    }

    PredictionBundle predict(const Dataset& data) const override { return model_->predict(transform(data)); }

    const PipelineSpec& spec() const { return spec_; }
    const Model& model() const { return *model_; }
    TaskKind task() const override { return task_; }
    std::size_t num_classes() const override { return classes_; }
    std::size_t balanced_rows() const { return balanced_rows_; }
    std::optional<std::size_t> trial() const { return trial_; }
    void set_trial(std::size_t k) { trial_ = k; }

    json to_json() const override {
        json j{{"kind", "pipeline"},
               {"spec", spec_.to_json()},
               {"task", to_string(task_)},
               {"classes", classes_},
               {"encoder", encoder_.to_json()},
               {"imputer", imputer_.to_json()},
               {"scaler", scaler_.to_json()},
               {"selector", selector_.to_json()},
               {"model", model_->to_json()}};
        j["trial"] = trial_ ? json(*trial_) : json(nullptr);
        return j;
    }

    static TrainedPipeline from_json(const json& j) {
        require(j.value("kind", "") == "pipeline", ErrorKind::format, "not a serialized pipeline");
        TrainedPipeline p;
        p.spec_ = PipelineSpec::from_json(j.at("spec"));
        p.task_ = parse_task(j.at("task").get<std::string>());
        p.classes_ = j.at("classes").get<std::size_t>();
        p.encoder_ = Encoder::from_json(j.at("encoder"));
        p.imputer_ = Imputer::from_json(j.at("imputer"));
        p.scaler_ = Scaler::from_json(j.at("scaler"));
        p.selector_ = Selector::from_json(j.at("selector"));
        p.model_ = model_from_json(j.at("model"));
        if (!j.at("trial").is_null()) p.trial_ = j.at("trial").get<std::size_t>();
        return p;
    }

private:
    PipelineSpec spec_;
    TaskKind task_ = TaskKind::regression;
    std::size_t classes_ = 0;
    Encoder encoder_;
    Imputer imputer_;
    Scaler scaler_;
    Selector selector_;
    std::shared_ptr<const Model> model_;
    std::size_t balanced_rows_ = 0;
    std::optional<std::size_t> trial_;
};

}  // namespace autotab
