#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace autotab;
using testing_support::fixed_space;
using testing_support::temp_dir;

namespace {

Dataset gaussian(std::size_t rows, std::uint64_t seed, std::size_t width = 4) {
    GeneratorSpec spec;
    spec.kind = GeneratorKind::gaussian;
    spec.rows = rows;
    spec.width = width;
    spec.seed = seed;
    return generate(spec);
}

Dataset counts(std::size_t rows, std::uint64_t seed) {
    GeneratorSpec spec;
    spec.kind = GeneratorKind::poisson;
    spec.rows = rows;
    spec.width = 4;
    spec.seed = seed;
    return generate(spec);
}

SearchOptions options_with(ValidationMode mode, std::uint64_t seed = 1) {
    SearchOptions options;
    options.validation.mode = mode;
    options.seed = seed;
    return options;
}

}  // namespace

TEST(Evaluate, DummyHoldoutMatchesClosedForm) {
    auto data = gaussian(100, 3);
    ValidationPlan plan{ValidationMode::holdout, 0.25, 5};
    auto views = make_views(data, plan, 42);
    const auto& fold = views.folds.front();
    EXPECT_EQ(fold.valid.rows(), 25u);
    EXPECT_EQ(fold.train.rows(), 75u);
    const auto spec = sample_random(fixed_space(TaskKind::regression, "dummy"), 0, 0);
    auto record = evaluate(spec, 0, views, get_metric("mse"));
    ASSERT_TRUE(record.valid()) << record.message;

    double mean = 0.0;
    for (Eigen::Index i = 0; i < fold.train.y.size(); ++i) mean += fold.train.y[i];
    mean /= static_cast<double>(fold.train.y.size());
    double oracle = 0.0;
    for (Eigen::Index i = 0; i < fold.valid.y.size(); ++i) oracle += (fold.valid.y[i] - mean) * (fold.valid.y[i] - mean);
    oracle /= static_cast<double>(fold.valid.y.size());
    EXPECT_NEAR(*record.loss, oracle, 1e-12);
}

TEST(Evaluate, KnnOnTrainingDataScoresPerfectAccuracy) {
    GeneratorSpec spec;
    spec.kind = GeneratorKind::imbalanced_binary;
    spec.rows = 80;
    spec.width = 3;
    spec.ratio = 3;
    spec.seed = 2;
    auto data = generate(spec);
    auto space = fixed_space(TaskKind::binary_classification, "knn");
    space.override_domain(Stage::model, "knn", "k", Domain::integer(1, 1));
    auto views = make_views(data, {ValidationMode::none, 0.2, 5}, 0);
    auto record = evaluate(sample_random(space, 0, 0), 0, views, get_metric("accuracy"));
    ASSERT_TRUE(record.valid());
    EXPECT_EQ(*record.loss, -1.0);
}

TEST(Evaluate, NegativePredictionUnderPoissonIsInvalid) {
    // A steep linear trend through zero: ridge extrapolates below zero on low x.
    Matrix x(40, 1);
    Vector y(40);
    for (Eigen::Index i = 0; i < 40; ++i) {
        x(i, 0) = static_cast<double>(i);
        y[i] = i < 20 ? 0.0 : static_cast<double>(3 * (i - 20));
    }
    auto data = testing_support::numeric_dataset(x, y);
    auto space = fixed_space(TaskKind::regression, "ridge");
    space.override_domain(Stage::model, "ridge", "alpha", Domain::real(1e-4, 1e-4));
    auto views = make_views(data, {ValidationMode::none, 0.2, 5}, 0);
    auto record = evaluate(sample_random(space, 0, 0), 0, views, get_metric("poisson_deviance"));
    EXPECT_EQ(record.status, TrialStatus::invalid);
    EXPECT_EQ(record.reason, "invalid_prediction");
    EXPECT_FALSE(record.loss.has_value());
    EXPECT_EQ(record.pipeline, nullptr);
}

TEST(Evaluate, FitFailureIsRecordedNotThrown) {
    auto data = gaussian(60, 5);
    auto space = fixed_space(TaskKind::regression, "poisson_glm");
    auto views = make_views(data, {ValidationMode::holdout, 0.2, 5}, 0);
    TrialRecord record;
    EXPECT_NO_THROW(record = evaluate(sample_random(space, 0, 0), 0, views, get_metric("mse")));
    EXPECT_EQ(record.status, TrialStatus::failed);
    EXPECT_EQ(record.reason, "task");
}

TEST(Evaluate, KfoldAveragesFoldsAndRefitsOnAllRows) {
    auto data = gaussian(90, 7);
    auto views = make_views(data, {ValidationMode::kfold, 0.2, 3}, 9);
    ASSERT_EQ(views.folds.size(), 3u);
    auto record = evaluate(sample_random(fixed_space(TaskKind::regression, "dummy"), 0, 0), 0, views, get_metric("mse"));
    ASSERT_EQ(record.fold_losses.size(), 3u);
    const double mean = (record.fold_losses[0] + record.fold_losses[1] + record.fold_losses[2]) / 3.0;
    EXPECT_NEAR(*record.loss, mean, 1e-15);
    const auto p = record.pipeline->predict(data).values;
    EXPECT_NEAR(p[0], data.y.mean(), 1e-12);
}

TEST(Search, StopsAtEvaluationBudget) {
    auto data = gaussian(60, 1);
    auto result = run_search(data, fixed_space(TaskKind::regression, "dummy"), Budget{1e6, 5}, RandomSampler(),
                             get_metric("mse"), options_with(ValidationMode::holdout));
    EXPECT_EQ(result.history.size(), 5u);
    for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(result.history[i].k, i);
}

TEST(Search, TinyTimeBudgetRunsAtMostOneTrial) {
    auto data = gaussian(60, 1);
    auto result = run_search(data, default_space(TaskKind::regression), Budget{1e-9, 50}, RandomSampler(),
                             get_metric("mse"), options_with(ValidationMode::holdout));
    EXPECT_LE(result.history.size(), 1u);
}

TEST(Search, SingletonSpaceSharesOneSpec) {
    auto data = gaussian(60, 2);
    auto space = fixed_space(TaskKind::regression, "knn");
    space.override_domain(Stage::model, "knn", "k", Domain::integer(4, 4));
    auto result = optimize(data, space, Budget{1e6, 4}, AdaptiveSampler(), get_metric("mse"),
                           options_with(ValidationMode::holdout));
    for (const auto& t : result.history) {
        for (auto s : all_stages) EXPECT_EQ(t.spec[s], result.best_trial().spec[s]);
    }
    EXPECT_EQ(result.best_trial().k, 0u);
}

TEST(Search, BestIsMinimumLossWithLowestIndexOnTies) {
    auto data = gaussian(120, 4);
    auto result = optimize(data, default_space(TaskKind::regression), Budget{1e6, 12}, RandomSampler(),
                           get_metric("mse"), options_with(ValidationMode::holdout, 3));
    const auto& best = result.best_trial();
    for (const auto& t : result.history) {
        if (!t.valid()) continue;
        EXPECT_TRUE(*best.loss < *t.loss || (*best.loss == *t.loss && best.k <= t.k));
    }
    const auto ranked = result.ranked();
    EXPECT_EQ(ranked.front(), &best);
    for (std::size_t i = 1; i < ranked.size(); ++i) EXPECT_LE(*ranked[i - 1]->loss, *ranked[i]->loss);
}

TEST(Search, NoValidTrialRaisesWithHistogram) {
    auto data = gaussian(60, 5);
    try {
        optimize(data, fixed_space(TaskKind::regression, "poisson_glm"), Budget{1e6, 3}, RandomSampler(),
                 get_metric("mse"), options_with(ValidationMode::holdout));
        ADD_FAILURE() << "expected optimization error";
    } catch (const OptimizationError& e) {
        EXPECT_EQ(e.failure_histogram().at("failed:task"), 3u);
        EXPECT_EQ(exit_code(e.kind()), 4);
    }
}

TEST(Search, IncumbentCurveIsNonIncreasing) {
    auto data = gaussian(100, 8);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        auto result = run_search(data, default_space(TaskKind::regression), Budget{1e6, 10}, AdaptiveSampler(),
                                 get_metric("mse"), options_with(ValidationMode::holdout, seed));
        const auto curve = incumbent_curve(result.history);
        ASSERT_EQ(curve.size(), result.history.size());
        for (std::size_t i = 1; i < curve.size(); ++i) {
            if (curve[i - 1]) {
                ASSERT_TRUE(curve[i].has_value());
                EXPECT_LE(*curve[i], *curve[i - 1]);
            }
        }
    }
}

TEST(Search, ParallelRunRespectsBudgetAndRanksByLossThenIndex) {
    auto data = gaussian(100, 9);
    auto options = options_with(ValidationMode::holdout, 4);
    options.parallelism = 3;
    auto result = run_search(data, default_space(TaskKind::regression), Budget{1e6, 9}, AdaptiveSampler(),
                             get_metric("mse"), options);
    ASSERT_EQ(result.history.size(), 9u);
    for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(result.history[i].k, i);
    ASSERT_TRUE(result.best.has_value());
    EXPECT_EQ(result.best, best_position(result.history));
}

TEST(Search, ConfigurationErrorsSurfaceBeforeTrials) {
    auto data = gaussian(60, 1);
    auto space = default_space(TaskKind::regression);
    EXPECT_ERROR_KIND(run_search(data, space, Budget{0.0, 5}, RandomSampler(), get_metric("mse"), {}), ErrorKind::config);
    EXPECT_ERROR_KIND(run_search(data, space, Budget{10.0, 0}, RandomSampler(), get_metric("mse"), {}), ErrorKind::config);
    EXPECT_ERROR_KIND(run_search(data, space, Budget{10.0, 5}, RandomSampler(), get_metric("auc"), {}), ErrorKind::config);
    auto kfold = options_with(ValidationMode::kfold);
    kfold.validation.folds = 1;
    EXPECT_ERROR_KIND(run_search(data, space, Budget{10.0, 5}, RandomSampler(), get_metric("mse"), kfold),
                      ErrorKind::config);
}

TEST(Search, DeterministicHistoryForFixedSeed) {
    auto data = counts(150, 3);
    auto run = [&] {
        auto result = run_search(data, default_space(TaskKind::regression, true), Budget{1e6, 10}, AdaptiveSampler(),
                                 get_metric("poisson_deviance"), options_with(ValidationMode::kfold, 11));
        std::string text;
        for (const auto& t : result.history) text += trial_to_json(t).dump() + "\n";
        return text;
    };
    EXPECT_EQ(run(), run());
}

TEST(Persistence, HistoryManifestAndModelRoundTrip) {
    auto data = gaussian(80, 6);
    auto result = optimize(data, default_space(TaskKind::regression), Budget{1e6, 6}, AdaptiveSampler(),
                           get_metric("mse"), options_with(ValidationMode::holdout, 2));
    auto dir = temp_dir("engine");
    const auto manifest = persist_history(result, dir, {{"model_name", "demo"}});
    EXPECT_EQ(manifest.at("best_k").get<std::size_t>(), result.best_trial().k);
    EXPECT_EQ(manifest.at("model_name"), "demo");

    const auto text = testing_support::read_file(dir / "history.jsonl");
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), result.history.size());
    const auto back = read_history(dir / "history.jsonl");
    ASSERT_EQ(back.size(), result.history.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].k, result.history[i].k);
        EXPECT_EQ(back[i].spec, result.history[i].spec);
        EXPECT_EQ(back[i].loss, result.history[i].loss);
        EXPECT_EQ(back[i].status, result.history[i].status);
    }

    save_model(*result.best_trial().pipeline, dir / "model.json");
    auto loaded = load_pipeline(dir / "model.json");
    EXPECT_EQ(loaded.predict(data).values, result.best_trial().pipeline->predict(data).values);
    EXPECT_EQ(loaded.trial(), result.best_trial().k);
}

TEST(Persistence, VersionMismatchIsFormatError) {
    auto dir = temp_dir("engine");
    testing_support::write_file(dir / "model.json", R"({"format": "autotab-model", "version": 99, "predictor": {}})");
    EXPECT_ERROR_KIND(load_pipeline(dir / "model.json"), ErrorKind::format);
    testing_support::write_file(dir / "history.jsonl", R"({"version": 2, "k": 0})"
                                                       "\n");
    EXPECT_ERROR_KIND(read_history(dir / "history.jsonl"), ErrorKind::format);
    testing_support::write_file(dir / "broken.jsonl", "{not json\n");
    EXPECT_ERROR_KIND(read_history(dir / "broken.jsonl"), ErrorKind::format);
}

TEST(Persistence, UnwritableDirectoryIsIoError) {
    auto dir = temp_dir("engine");
    testing_support::write_file(dir / "file", "x");
    SearchResult empty;
    EXPECT_ERROR_KIND(persist_history(empty, dir / "file" / "sub"), ErrorKind::io);
}

TEST(Pipeline, BalancingOnlyTouchesTrainingRows) {
    GeneratorSpec gen;
    gen.kind = GeneratorKind::imbalanced_binary;
    gen.rows = 200;
    gen.width = 3;
    gen.ratio = 9;
    gen.seed = 4;
    auto data = generate(gen);
    auto space = fixed_space(TaskKind::binary_classification, "logistic", "random_over");
    space.override_domain(Stage::balance, "random_over", "ratio", Domain::real(1.0, 1.0));
    auto pipeline = TrainedPipeline::fit(sample_random(space, 0, 0), data);
    EXPECT_EQ(pipeline.balanced_rows(), 360u);
    EXPECT_EQ(pipeline.predict(data).size(), 200u);
}
