#pragma once

#include <memory>
#include <string>
#include <vector>

#include "autotab/models/linear.hpp"
#include "autotab/models/model.hpp"
#include "autotab/models/neighbors.hpp"
#include "autotab/models/tree.hpp"
#include "autotab/params.hpp"

namespace autotab {

inline const std::vector<std::string>& model_ids() {
    static const std::vector<std::string> ids{"dummy", "ridge", "logistic", "poisson_glm",
                                              "knn",   "cart",  "random_forest", "gbt"};
    return ids;
}

inline std::size_t to_count(std::int64_t v, const std::string& name) {
    require(v >= 0, ErrorKind::config, "hyperparameter '" + name + "' must be non-negative");
    return static_cast<std::size_t>(v);
}

/// Builds an unfitted model from its method id and hyperparameters.
inline std::unique_ptr<Model> make_model(const std::string& method, const Params& params, TaskKind task,
                                         std::size_t classes, std::uint64_t seed) {
    if (method == "dummy") return std::make_unique<DummyModel>(task, classes);
    if (method == "ridge") {
        require(task == TaskKind::regression, ErrorKind::unsupported, "ridge supports regression only");
        return std::make_unique<RidgeModel>(task, classes, get_real(params, "alpha", 1.0));
    }
    if (method == "logistic") {
        require(is_classification(task), ErrorKind::unsupported, "logistic supports classification only");
        return std::make_unique<LogisticModel>(task, classes, get_real(params, "alpha", 1e-2));
    }
    if (method == "poisson_glm") return std::make_unique<PoissonGlmModel>(task, classes, get_real(params, "alpha", 1e-4));
    if (method == "knn") return std::make_unique<KnnModel>(task, classes, to_count(get_int(params, "k", 5), "k"));
    if (method == "cart") {
        TreeParams tp{to_count(get_int(params, "max_depth", 5), "max_depth"),
                      to_count(get_int(params, "min_samples_split", 2), "min_samples_split"),
                      to_count(get_int(params, "min_samples_leaf", 1), "min_samples_leaf"), 0};
        return std::make_unique<CartModel>(task, classes, tp);
    }
    if (method == "random_forest") {
        ForestParams fp;
        fp.n_trees = to_count(get_int(params, "n_trees", 50), "n_trees");
        fp.tree = TreeParams{to_count(get_int(params, "max_depth", 10), "max_depth"),
                             to_count(get_int(params, "min_samples_split", 2), "min_samples_split"),
                             to_count(get_int(params, "min_samples_leaf", 1), "min_samples_leaf"), 0};
        fp.seed = seed;
        return std::make_unique<RandomForestModel>(task, classes, fp);
    }
    if (method == "gbt") {
        require(task == TaskKind::regression, ErrorKind::unsupported, "gbt supports regression only");
        GbtParams gp;
        gp.n_stages = to_count(get_int(params, "n_stages", 100), "n_stages");
        gp.learning_rate = get_real(params, "learning_rate", 0.1);
        gp.tree = TreeParams{to_count(get_int(params, "max_depth", 3), "max_depth"),
                             to_count(get_int(params, "min_samples_split", 2), "min_samples_split"),
                             to_count(get_int(params, "min_samples_leaf", 1), "min_samples_leaf"), 0};
        return std::make_unique<GbtModel>(task, classes, gp);
    }
    fail(ErrorKind::config, "unknown model '" + method + "'");
}

inline std::unique_ptr<Model> model_from_json(const json& j) {
    const auto method = j.at("method").get<std::string>();
    const auto task = parse_task(j.at("task").get<std::string>());
    const auto classes = j.at("classes").get<std::size_t>();
    if (method == "dummy") return DummyModel::from_json(j, task, classes);
    if (method == "ridge") return RidgeModel::from_json(j, task, classes);
    if (method == "logistic") return LogisticModel::from_json(j, task, classes);
    if (method == "poisson_glm") return PoissonGlmModel::from_json(j, task, classes);
    if (method == "knn") return KnnModel::from_json(j, task, classes);
    if (method == "cart") return CartModel::from_json(j, task, classes);
    if (method == "random_forest") return RandomForestModel::from_json(j, task, classes);
    if (method == "gbt") return GbtModel::from_json(j, task, classes);
    fail(ErrorKind::format, "unknown serialized model '" + method + "'");
}

}  // namespace autotab
