#pragma once

#include <algorithm>
#include <memory>
#include <utility>
#include <vector>

#include "autotab/deadline.hpp"
#include "autotab/models/model.hpp"

namespace autotab {

/// k nearest neighbours under Euclidean distance; equal distances resolve to the
/// lower training row. Regression averages, classification reports vote fractions.
class KnnModel final : public Model {
public:
    KnnModel(TaskKind task, std::size_t classes, std::size_t k) : Model(task, classes), k_(k) {
        require(k >= 1, ErrorKind::config, "knn needs k >= 1");
    }

    std::string id() const override { return "knn"; }

    void fit(const Matrix& x, const Vector& y) override {
        begin_fit(x, y);
        x_ = x;
        y_ = y;
        fitted_ = true;
    }

    PredictionBundle predict(const Matrix& x) const override {
        check_predict_input(x);
        const auto n = x_.rows();
        const auto k = static_cast<std::ptrdiff_t>(std::min<std::size_t>(k_, static_cast<std::size_t>(n)));
        const bool classify = is_classification(task_);
        PredictionBundle out;
        Matrix probabilities;
        if (classify) {
            probabilities = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(classes_));
        } else {
            out.values.resize(static_cast<std::size_t>(x.rows()));
        }
        std::vector<std::pair<double, Eigen::Index>> scored(static_cast<std::size_t>(n));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            if (r % 64 == 0) check_deadline();
            for (Eigen::Index i = 0; i < n; ++i) scored[static_cast<std::size_t>(i)] = {squared_distance(x, r, x_, i), i};
            std::partial_sort(scored.begin(), scored.begin() + k, scored.end());
            if (classify) {
                for (std::ptrdiff_t i = 0; i < k; ++i) {
                    probabilities(r, static_cast<Eigen::Index>(y_[scored[static_cast<std::size_t>(i)].second])) += 1.0;
                }
                probabilities.row(r) /= static_cast<double>(k);
            } else {
                double sum = 0.0;
                for (std::ptrdiff_t i = 0; i < k; ++i) sum += y_[scored[static_cast<std::size_t>(i)].second];
                out.values[static_cast<std::size_t>(r)] = sum / static_cast<double>(k);
            }
        }
        if (classify) return classification_bundle(std::move(probabilities));
        return out;
    }

    json to_json() const override {
        json j = base_json();
        j["k"] = k_;
        j["rows"] = x_.rows();
        j["x"] = std::vector<double>(x_.data(), x_.data() + x_.size());
        j["y"] = std::vector<double>(y_.data(), y_.data() + y_.size());
        return j;
    }

    static std::unique_ptr<KnnModel> from_json(const json& j, TaskKind task, std::size_t classes) {
        auto m = std::make_unique<KnnModel>(task, classes, j.at("k").get<std::size_t>());
        m->restore_base(j);
        const auto rows = j.at("rows").get<Eigen::Index>();
        const auto xs = j.at("x").get<std::vector<double>>();
        const auto ys = j.at("y").get<std::vector<double>>();
        m->x_.resize(rows, static_cast<Eigen::Index>(m->width_));
        std::copy(xs.begin(), xs.end(), m->x_.data());
        m->y_ = Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(ys.size()));
        return m;
    }

private:
    std::size_t k_;
    Matrix x_;
    Vector y_;
};

}  // namespace autotab
