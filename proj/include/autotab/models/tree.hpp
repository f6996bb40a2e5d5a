#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "autotab/deadline.hpp"
#include "autotab/models/model.hpp"
#include "autotab/random.hpp"

namespace autotab {

struct TreeParams {
    std::size_t max_depth = 5;
    std::size_t min_samples_split = 2;
    std::size_t min_samples_leaf = 1;
    std::size_t max_features = 0;  // 0: consider every feature at every split
};

/// Greedy binary tree. Splits minimise the summed squared error (regression) or the
/// size-weighted Gini impurity (classification) and must strictly improve on the
/// parent. Equal candidates resolve to the lower feature, then the lower threshold.
/// Rows with x[feature] <= threshold go left.
class DecisionTree {
public:
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        std::vector<double> value;  // leaf mean, or class frequencies
    };

    void fit(const Matrix& x, const Vector& y, std::vector<std::size_t> rows, bool classify, std::size_t classes,
             const TreeParams& params, Rng* rng) {
        x_ = &x;
        y_ = &y;
        classify_ = classify;
        classes_ = classes;
        params_ = params;
        rng_ = rng;
        nodes_.clear();
        build(rows, 0);
        x_ = nullptr;
        y_ = nullptr;
        rng_ = nullptr;
    }

    const std::vector<double>& leaf_value(const Matrix& x, Eigen::Index row) const {
        std::size_t node = 0;
        while (nodes_[node].feature >= 0) {
            const Node& n = nodes_[node];
            node = static_cast<std::size_t>(x(row, n.feature) <= n.threshold ? n.left : n.right);
        }
        return nodes_[node].value;
    }

    const std::vector<Node>& nodes() const { return nodes_; }

    json to_json() const {
        json out = json::array();
        for (const auto& n : nodes_) {
            out.push_back({n.feature, n.threshold, n.left, n.right, n.value});
        }
        return out;
    }

    static DecisionTree from_json(const json& j) {
        DecisionTree tree;
        for (const auto& n : j) {
            tree.nodes_.push_back(Node{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(),
                                       n.at(3).get<int>(), n.at(4).get<std::vector<double>>()});
        }
        return tree;
    }

private:
    struct Candidate {
        int feature = -1;
        double threshold = 0.0;
        double score = 0.0;
    };

    std::vector<double> leaf(const std::vector<std::size_t>& rows) const {
        const auto n = static_cast<double>(rows.size());
        if (classify_) {
            std::vector<double> freq(classes_, 0.0);
            for (auto r : rows) freq[static_cast<std::size_t>((*y_)[static_cast<Eigen::Index>(r)])] += 1.0;
            for (auto& f : freq) f /= n;
            return freq;
        }
        double sum = 0.0;
        for (auto r : rows) sum += (*y_)[static_cast<Eigen::Index>(r)];
        return {sum / n};
    }

    // Purity score sum over children of (sum^2 / n) (regression) or (sum_c count_c^2 / n)
    // (classification); larger is better and the parent's own score is the baseline.
    double parent_score(const std::vector<std::size_t>& rows) const {
        const auto n = static_cast<double>(rows.size());
        if (classify_) {
            std::vector<double> counts(classes_, 0.0);
            for (auto r : rows) counts[static_cast<std::size_t>((*y_)[static_cast<Eigen::Index>(r)])] += 1.0;
            double sq = 0.0;
            for (double c : counts) sq += c * c;
            return sq / n;
        }
        double sum = 0.0;
        for (auto r : rows) sum += (*y_)[static_cast<Eigen::Index>(r)];
        return sum * sum / n;
    }

    std::vector<int> candidate_features() {
        const auto w = static_cast<std::size_t>(x_->cols());
        std::vector<int> features;
        if (params_.max_features == 0 || params_.max_features >= w || rng_ == nullptr) {
            for (std::size_t j = 0; j < w; ++j) features.push_back(static_cast<int>(j));
            return features;
        }
        for (auto j : rng_->sample_without_replacement(w, params_.max_features)) features.push_back(static_cast<int>(j));
        return features;
    }

    std::optional<Candidate> best_split(const std::vector<std::size_t>& rows) {
        const std::size_t n = rows.size();
        const std::size_t min_leaf = std::max<std::size_t>(params_.min_samples_leaf, 1);
        const double baseline = parent_score(rows);
        const double tolerance = 1e-12 * std::max(1.0, std::abs(baseline));
        std::optional<Candidate> best;
        std::vector<std::pair<double, std::size_t>> sorted(n);
        std::vector<double> left_counts(classes_);
        std::vector<double> right_counts(classes_);

        for (int feature : candidate_features()) {
            for (std::size_t i = 0; i < n; ++i) {
                sorted[i] = {(*x_)(static_cast<Eigen::Index>(rows[i]), feature), rows[i]};
            }
            std::sort(sorted.begin(), sorted.end());
            if (sorted.front().first == sorted.back().first) continue;

            double left_sum = 0.0, right_sum = 0.0, left_sq = 0.0, right_sq = 0.0;
            if (classify_) {
                std::fill(left_counts.begin(), left_counts.end(), 0.0);
                std::fill(right_counts.begin(), right_counts.end(), 0.0);
                for (const auto& [v, r] : sorted) right_counts[static_cast<std::size_t>((*y_)[static_cast<Eigen::Index>(r)])] += 1.0;
                for (double c : right_counts) right_sq += c * c;
            } else {
                for (const auto& [v, r] : sorted) right_sum += (*y_)[static_cast<Eigen::Index>(r)];
            }

            for (std::size_t i = 0; i + 1 < n; ++i) {
                const double target = (*y_)[static_cast<Eigen::Index>(sorted[i].second)];
                if (classify_) {
                    const auto c = static_cast<std::size_t>(target);
                    left_sq += 2.0 * left_counts[c] + 1.0;
                    left_counts[c] += 1.0;
                    right_sq -= 2.0 * right_counts[c] - 1.0;
                    right_counts[c] -= 1.0;
                } else {
                    left_sum += target;
                    right_sum -= target;
                }
                const std::size_t n_left = i + 1;
                const std::size_t n_right = n - n_left;
                if (sorted[i].first == sorted[i + 1].first) continue;
                if (n_left < min_leaf || n_right < min_leaf) continue;
                const double score =
                    classify_ ? left_sq / static_cast<double>(n_left) + right_sq / static_cast<double>(n_right)
                              : left_sum * left_sum / static_cast<double>(n_left) +
                                    right_sum * right_sum / static_cast<double>(n_right);
                if (score <= baseline + tolerance) continue;
                if (!best || score > best->score) {
                    double threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
                    if (!(threshold < sorted[i + 1].first)) threshold = sorted[i].first;
                    best = Candidate{feature, threshold, score};
                }
            }
        }
        return best;
    }

    int build(const std::vector<std::size_t>& rows, std::size_t depth) {
        check_deadline();
        const int index = static_cast<int>(nodes_.size());
        nodes_.push_back(Node{-1, 0.0, -1, -1, leaf(rows)});
        if (depth >= params_.max_depth || rows.size() < std::max<std::size_t>(params_.min_samples_split, 2) ||
            rows.size() < 2 * std::max<std::size_t>(params_.min_samples_leaf, 1)) {
            return index;
        }
        const auto split = best_split(rows);
        if (!split) return index;

        std::vector<std::size_t> left, right;
        for (auto r : rows) {
            ((*x_)(static_cast<Eigen::Index>(r), split->feature) <= split->threshold ? left : right).push_back(r);
        }
        nodes_[static_cast<std::size_t>(index)].feature = split->feature;
        nodes_[static_cast<std::size_t>(index)].threshold = split->threshold;
        nodes_[static_cast<std::size_t>(index)].value.clear();
        const int l = build(left, depth + 1);
        const int r = build(right, depth + 1);
        nodes_[static_cast<std::size_t>(index)].left = l;
        nodes_[static_cast<std::size_t>(index)].right = r;
        return index;
    }

    std::vector<Node> nodes_;
    const Matrix* x_ = nullptr;
    const Vector* y_ = nullptr;
    bool classify_ = false;
    std::size_t classes_ = 0;
    TreeParams params_;
    Rng* rng_ = nullptr;
};

namespace detail {

inline std::vector<std::size_t> iota_rows(Eigen::Index n) {
    std::vector<std::size_t> rows(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    return rows;
}

inline json tree_params_json(const TreeParams& p) {
    return {{"max_depth", p.max_depth}, {"min_samples_split", p.min_samples_split},
            {"min_samples_leaf", p.min_samples_leaf}, {"max_features", p.max_features}};
}

inline TreeParams tree_params_from_json(const json& j) {
    return TreeParams{j.at("max_depth").get<std::size_t>(), j.at("min_samples_split").get<std::size_t>(),
                      j.at("min_samples_leaf").get<std::size_t>(), j.at("max_features").get<std::size_t>()};
}

}  // namespace detail

class CartModel final : public Model {
public:
    CartModel(TaskKind task, std::size_t classes, TreeParams params) : Model(task, classes), params_(params) {
        params_.max_features = 0;
    }

    std::string id() const override { return "cart"; }

    void fit(const Matrix& x, const Vector& y) override {
        begin_fit(x, y);
        tree_.fit(x, y, detail::iota_rows(x.rows()), is_classification(task_), classes_, params_, nullptr);
        fitted_ = true;
    }

    PredictionBundle predict(const Matrix& x) const override {
        check_predict_input(x);
        if (is_classification(task_)) {
            Matrix p(x.rows(), static_cast<Eigen::Index>(classes_));
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                const auto& v = tree_.leaf_value(x, r);
                for (std::size_t c = 0; c < classes_; ++c) p(r, static_cast<Eigen::Index>(c)) = v[c];
            }
            return classification_bundle(std::move(p));
        }
        PredictionBundle out;
        out.values.resize(static_cast<std::size_t>(x.rows()));
        for (Eigen::Index r = 0; r < x.rows(); ++r) out.values[static_cast<std::size_t>(r)] = tree_.leaf_value(x, r)[0];
        return out;
    }

    const DecisionTree& tree() const { return tree_; }

    json to_json() const override {
        json j = base_json();
        j["params"] = detail::tree_params_json(params_);
        j["tree"] = tree_.to_json();
        return j;
    }

    static std::unique_ptr<CartModel> from_json(const json& j, TaskKind task, std::size_t classes) {
        auto m = std::make_unique<CartModel>(task, classes, detail::tree_params_from_json(j.at("params")));
        m->restore_base(j);
        m->tree_ = DecisionTree::from_json(j.at("tree"));
        return m;
    }

private:
    TreeParams params_;
    DecisionTree tree_;
};

struct ForestParams {
    std::size_t n_trees = 50;
    TreeParams tree;
    bool bootstrap = true;
    std::optional<std::size_t> max_features;  // nullopt: ceil(sqrt(W))
    std::uint64_t seed = 0;
};

/// Bagged CARTs with per-split feature subsampling; tree t draws from seed + t.
/// Regression averages tree outputs; classification averages leaf frequencies.
class RandomForestModel final : public Model {
public:
    RandomForestModel(TaskKind task, std::size_t classes, ForestParams params)
        : Model(task, classes), params_(params) {
        require(params.n_trees >= 1, ErrorKind::config, "random_forest needs n_trees >= 1");
    }

    std::string id() const override { return "random_forest"; }

    void fit(const Matrix& x, const Vector& y) override {
        begin_fit(x, y);
        const auto w = static_cast<std::size_t>(x.cols());
        TreeParams tree_params = params_.tree;
        tree_params.max_features =
            params_.max_features ? *params_.max_features
                                 : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(w))));
        trees_.assign(params_.n_trees, DecisionTree{});
        const auto n = static_cast<std::size_t>(x.rows());
        for (std::size_t t = 0; t < params_.n_trees; ++t) {
            Rng rng(params_.seed + t);
            std::vector<std::size_t> rows;
            if (params_.bootstrap) {
                rows.resize(n);
                for (auto& r : rows) r = rng.index(n);
                std::sort(rows.begin(), rows.end());
            } else {
                rows = detail::iota_rows(x.rows());
            }
            trees_[t].fit(x, y, std::move(rows), is_classification(task_), classes_, tree_params, &rng);
        }
        fitted_ = true;
    }

    PredictionBundle predict(const Matrix& x) const override {
        check_predict_input(x);
        const double count = static_cast<double>(trees_.size());
        if (is_classification(task_)) {
            Matrix p = Matrix::Zero(x.rows(), static_cast<Eigen::Index>(classes_));
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                for (const auto& tree : trees_) {
                    const auto& v = tree.leaf_value(x, r);
                    for (std::size_t c = 0; c < classes_; ++c) p(r, static_cast<Eigen::Index>(c)) += v[c];
                }
                p.row(r) /= count;
            }
            return classification_bundle(std::move(p));
        }
        PredictionBundle out;
        out.values.resize(static_cast<std::size_t>(x.rows()));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            double sum = 0.0;
            for (const auto& tree : trees_) sum += tree.leaf_value(x, r)[0];
            out.values[static_cast<std::size_t>(r)] = sum / count;
        }
        return out;
    }

    json to_json() const override {
        json j = base_json();
        j["n_trees"] = params_.n_trees;
        j["params"] = detail::tree_params_json(params_.tree);
        j["bootstrap"] = params_.bootstrap;
        j["max_features"] = params_.max_features ? json(*params_.max_features) : json(nullptr);
        j["seed"] = params_.seed;
        json trees = json::array();
        for (const auto& t : trees_) trees.push_back(t.to_json());
        j["trees"] = trees;
        return j;
    }

    static std::unique_ptr<RandomForestModel> from_json(const json& j, TaskKind task, std::size_t classes) {
        ForestParams p;
        p.n_trees = j.at("n_trees").get<std::size_t>();
        p.tree = detail::tree_params_from_json(j.at("params"));
        p.bootstrap = j.at("bootstrap").get<bool>();
        if (!j.at("max_features").is_null()) p.max_features = j.at("max_features").get<std::size_t>();
        p.seed = j.at("seed").get<std::uint64_t>();
        auto m = std::make_unique<RandomForestModel>(task, classes, p);
        m->restore_base(j);
        for (const auto& t : j.at("trees")) m->trees_.push_back(DecisionTree::from_json(t));
        return m;
    }

private:
    ForestParams params_;
    std::vector<DecisionTree> trees_;
};

struct GbtParams {
    std::size_t n_stages = 100;
    double learning_rate = 0.1;
    TreeParams tree{3, 2, 1, 0};
};

/// Stagewise least-squares boosting: start at mean(y), then each stage fits a CART
/// to the current residuals and adds learning_rate times its output.
class GbtModel final : public Model {
public:
    GbtModel(TaskKind task, std::size_t classes, GbtParams params) : Model(task, classes), params_(params) {
        require(params.learning_rate > 0.0, ErrorKind::config, "gbt learning_rate must be positive");
        params_.tree.max_features = 0;
    }

    std::string id() const override { return "gbt"; }

    void fit(const Matrix& x, const Vector& y) override {
        begin_fit(x, y);
        require(task_ == TaskKind::regression, ErrorKind::unsupported, "gbt supports regression only");
        double sum = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) sum += y[i];
        init_ = sum / static_cast<double>(y.size());
        Vector current = Vector::Constant(y.size(), init_);
        stages_.clear();
        for (std::size_t s = 0; s < params_.n_stages; ++s) {
            const Vector residual = y - current;
            DecisionTree tree;
            tree.fit(x, residual, detail::iota_rows(x.rows()), false, 0, params_.tree, nullptr);
            for (Eigen::Index r = 0; r < x.rows(); ++r) current[r] += params_.learning_rate * tree.leaf_value(x, r)[0];
            stages_.push_back(std::move(tree));
        }
        fitted_ = true;
    }

    PredictionBundle predict(const Matrix& x) const override {
        check_predict_input(x);
        PredictionBundle out;
        out.values.assign(static_cast<std::size_t>(x.rows()), init_);
        for (const auto& tree : stages_) {
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                out.values[static_cast<std::size_t>(r)] += params_.learning_rate * tree.leaf_value(x, r)[0];
            }
        }
        return out;
    }

    double initial_value() const { return init_; }
    const std::vector<DecisionTree>& stages() const { return stages_; }

    json to_json() const override {
        json j = base_json();
        j["n_stages"] = params_.n_stages;
        j["learning_rate"] = params_.learning_rate;
        j["params"] = detail::tree_params_json(params_.tree);
        j["init"] = init_;
        json trees = json::array();
        for (const auto& t : stages_) trees.push_back(t.to_json());
        j["trees"] = trees;
        return j;
    }

    static std::unique_ptr<GbtModel> from_json(const json& j, TaskKind task, std::size_t classes) {
        GbtParams p{j.at("n_stages").get<std::size_t>(), j.at("learning_rate").get<double>(),
                    detail::tree_params_from_json(j.at("params"))};
        auto m = std::make_unique<GbtModel>(task, classes, p);
        m->restore_base(j);
        m->init_ = j.at("init").get<double>();
        for (const auto& t : j.at("trees")) m->stages_.push_back(DecisionTree::from_json(t));
        return m;
    }

private:
    GbtParams params_;
    double init_ = 0.0;
    std::vector<DecisionTree> stages_;
};

}  // namespace autotab
