#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "autotab/error.hpp"
#include "autotab/linalg.hpp"
#include "autotab/metrics.hpp"
#include "autotab/tabular.hpp"

namespace autotab {

/// Base of the model zoo. Classifiers are trained on class codes 0..O-1 and
/// always return an O-column row-stochastic probability table.
class Model {
public:
    Model(TaskKind task, std::size_t num_classes) : task_(task), classes_(num_classes) {}
    virtual ~Model() = default;

    virtual std::string id() const = 0;
    virtual void fit(const Matrix& x, const Vector& y) = 0;
    virtual PredictionBundle predict(const Matrix& x) const = 0;
    virtual json to_json() const = 0;

    TaskKind task() const { return task_; }
    std::size_t num_classes() const { return classes_; }
    std::size_t input_width() const { return width_; }
    bool fitted() const { return fitted_; }

protected:
    void begin_fit(const Matrix& x, const Vector& y) {
        require(x.rows() == y.size(), ErrorKind::contract, "feature rows and response length differ");
        require(x.rows() > 0, ErrorKind::fit, "cannot fit on zero rows");
        require(!x.array().isNaN().any(), ErrorKind::contract, "model input has missing cells");
        if (is_classification(task_)) {
            require(classes_ >= 2, ErrorKind::contract, "classifier needs at least two classes");
        }
        width_ = static_cast<std::size_t>(x.cols());
    }

    void check_predict_input(const Matrix& x) const {
        require(fitted_, ErrorKind::contract, id() + " used before fit");
        require(static_cast<std::size_t>(x.cols()) == width_, ErrorKind::contract,
                id() + " expects " + std::to_string(width_) + " columns, got " + std::to_string(x.cols()));
    }

    json base_json() const {
        return {{"method", id()}, {"task", to_string(task_)}, {"classes", classes_}, {"width", width_}};
    }

    void restore_base(const json& j) {
        j.at("width").get_to(width_);
        fitted_ = true;
    }

    TaskKind task_;
    std::size_t classes_;
    std::size_t width_ = 0;
    bool fitted_ = false;
};

/// Values = row-wise argmax of the probabilities, ties to the lowest class.
inline PredictionBundle classification_bundle(Matrix probabilities) {
    PredictionBundle out;
    out.values.resize(static_cast<std::size_t>(probabilities.rows()));
    for (Eigen::Index r = 0; r < probabilities.rows(); ++r) {
        Eigen::Index best = 0;
        for (Eigen::Index c = 1; c < probabilities.cols(); ++c) {
            if (probabilities(r, c) > probabilities(r, best)) best = c;
        }
        out.values[static_cast<std::size_t>(r)] = static_cast<double>(best);
    }
    out.probabilities = std::move(probabilities);
    return out;
}

/// Predicts the training mean (regression) or the training class frequencies.
class DummyModel final : public Model {
public:
    using Model::Model;

    std::string id() const override { return "dummy"; }

    void fit(const Matrix& x, const Vector& y) override {
        begin_fit(x, y);
        const auto n = static_cast<double>(y.size());
        if (is_classification(task_)) {
            value_.assign(classes_, 0.0);
            for (Eigen::Index i = 0; i < y.size(); ++i) value_[static_cast<std::size_t>(y[i])] += 1.0;
            for (auto& v : value_) v /= n;
        } else {
            double sum = 0.0;
            for (Eigen::Index i = 0; i < y.size(); ++i) sum += y[i];
            value_ = {sum / n};
        }
        fitted_ = true;
    }

    PredictionBundle predict(const Matrix& x) const override {
        check_predict_input(x);
        if (is_classification(task_)) {
            Matrix p(x.rows(), static_cast<Eigen::Index>(classes_));
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                for (std::size_t c = 0; c < classes_; ++c) p(r, static_cast<Eigen::Index>(c)) = value_[c];
            }
            return classification_bundle(std::move(p));
        }
        return PredictionBundle{std::vector<double>(static_cast<std::size_t>(x.rows()), value_.front()), std::nullopt};
    }

    json to_json() const override {
        json j = base_json();
        j["value"] = value_;
        return j;
    }

    static std::unique_ptr<DummyModel> from_json(const json& j, TaskKind task, std::size_t classes) {
        auto m = std::make_unique<DummyModel>(task, classes);
        m->restore_base(j);
        j.at("value").get_to(m->value_);
        return m;
    }

private:
    std::vector<double> value_;
};

}  // namespace autotab
