#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace autotab;
using testing_support::fixed_space;
using testing_support::WarningCapture;

namespace {

Dataset gaussian(std::size_t rows, std::uint64_t seed, std::size_t width = 4) {
    GeneratorSpec spec;
    spec.kind = GeneratorKind::gaussian;
    spec.rows = rows;
    spec.width = width;
    spec.seed = seed;
    return generate(spec);
}

Dataset imbalanced(std::size_t rows, std::uint64_t seed) {
    GeneratorSpec spec;
    spec.kind = GeneratorKind::imbalanced_binary;
    spec.rows = rows;
    spec.width = 4;
    spec.ratio = 3;
    spec.seed = seed;
    return generate(spec);
}

SearchSpace regression_space() {
    auto space = default_space(TaskKind::regression, false);
    space.allow(Stage::model, {"dummy", "ridge", "knn", "cart"});
    return space;
}

SearchOptions options(std::uint64_t seed, ValidationMode mode = ValidationMode::holdout) {
    SearchOptions o;
    o.seed = seed;
    o.validation.mode = mode;
    return o;
}

PredictionBundle values(std::vector<double> v) { return PredictionBundle{std::move(v), std::nullopt}; }

PredictionBundle probabilities(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix p(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index r = 0;
    for (const auto& row : rows) {
        Eigen::Index c = 0;
        for (double v : row) p(r, c++) = v;
        ++r;
    }
    return classification_bundle(p);
}

EnsembleModel bare(Voting voting, TaskKind task, std::size_t classes, std::size_t h) {
    return EnsembleModel(Strategy::stacking, voting, task, classes, std::vector<EnsembleMember>(h));
}

}  // namespace

TEST(Voting, RegressionRules) {
    const std::vector<PredictionBundle> parts{values({1.0}), values({2.0}), values({6.0})};
    EXPECT_DOUBLE_EQ(bare(Voting::mean, TaskKind::regression, 0, 3).combine(parts).values[0], 3.0);
    EXPECT_DOUBLE_EQ(bare(Voting::median, TaskKind::regression, 0, 3).combine(parts).values[0], 2.0);
    EXPECT_DOUBLE_EQ(bare(Voting::max, TaskKind::regression, 0, 3).combine(parts).values[0], 6.0);
    const auto even = bare(Voting::median, TaskKind::regression, 0, 4)
                          .combine({values({1.0}), values({2.0}), values({6.0}), values({3.0})});
    EXPECT_DOUBLE_EQ(even.values[0], 2.5);
}

TEST(Voting, SoftAveragesProbabilities) {
    const auto out = bare(Voting::soft, TaskKind::binary_classification, 2, 3)
                         .combine({probabilities({{0.6, 0.4}}), probabilities({{0.3, 0.7}}),
                                   probabilities({{0.55, 0.45}})});
    EXPECT_EQ(out.values[0], 1.0);
    EXPECT_NEAR((*out.probabilities)(0, 1), 1.55 / 3.0, 1e-15);
}

TEST(Voting, HardTakesMajority) {
    const auto out = bare(Voting::hard, TaskKind::multiclass_classification, 3, 3)
                         .combine({values({1.0}), values({2.0}), values({1.0})});
    EXPECT_EQ(out.values[0], 1.0);
    EXPECT_NEAR((*out.probabilities)(0, 1), 2.0 / 3.0, 1e-15);
}

TEST(Voting, ChecksPerTask) {
    EXPECT_ERROR_KIND(check_voting(Strategy::stacking, Voting::mean, TaskKind::binary_classification), ErrorKind::config);
    EXPECT_ERROR_KIND(check_voting(Strategy::bagging, Voting::soft, TaskKind::regression), ErrorKind::config);
    EXPECT_ERROR_KIND(check_voting(Strategy::boosting, Voting::sum, TaskKind::binary_classification),
                      ErrorKind::unsupported);
    EXPECT_ERROR_KIND(parse_voting("plurality"), ErrorKind::config);
    EXPECT_EQ(default_voting(Strategy::stacking, TaskKind::regression), Voting::mean);
    EXPECT_EQ(default_voting(Strategy::bagging, TaskKind::binary_classification), Voting::soft);
    EXPECT_EQ(default_voting(Strategy::boosting, TaskKind::regression), Voting::sum);
}

TEST(FeatureSubset, RhoKeepsMaskedColumnsInOrder) {
    FeatureSubsetRule rule{{1, 0, 1}};
    const Matrix rho = rule.rho();
    ASSERT_EQ(rho.rows(), 3);
    ASSERT_EQ(rho.cols(), 2);
    Matrix expected(3, 2);
    expected << 1, 0, 0, 0, 0, 1;
    EXPECT_EQ(rho, expected);

    Matrix x(2, 3);
    x << 1, 2, 3, 4, 5, 6;
    Matrix projected(2, 2);
    projected << 1, 3, 4, 6;
    EXPECT_EQ(x * rho, projected);
    EXPECT_EQ(rule.indices(), (std::vector<std::size_t>{0, 2}));
}

TEST(FeatureSubset, RandomRuleKeepsCeilFraction) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto rule = FeatureSubsetRule::random(7, 0.5, seed);
        EXPECT_EQ(rule.omega(), 4u);
        rule.check();
    }
    const FeatureSubsetRule empty{{0, 0}};
    EXPECT_ERROR_KIND(empty.check(), ErrorKind::config);
    EXPECT_ERROR_KIND(FeatureSubsetRule::random(4, 0.0, 1), ErrorKind::config);
}

TEST(SplitBudget, DividesTimeAndFloorsEvaluations) {
    const auto b = split_budget(Budget{60.0, 8}, 4);
    EXPECT_EQ(b.max_evals, 2u);
    EXPECT_DOUBLE_EQ(b.time_seconds, 15.0);
    EXPECT_EQ(split_budget(Budget{10.0, 9}, 4).max_evals, 2u);
    EXPECT_ERROR_KIND(split_budget(Budget{10.0, 3}, 4), ErrorKind::config);
}

TEST(Stacking, SingleMemberEqualsBestPipelineExactly) {
    const auto data = gaussian(150, 4);
    const auto result = optimize(data, regression_space(), Budget{60.0, 8}, RandomSampler(), get_metric("mse"), options(3));
    const auto best = result.best_trial().pipeline->predict(data);
    for (auto voting : {Voting::mean, Voting::median, Voting::max}) {
        const auto model = build_stacking(result.history, 1, voting, TaskKind::regression, 0);
        EXPECT_EQ(model.predict(data).values, best.values);
    }

    const auto cls = imbalanced(150, 5);
    auto space = default_space(TaskKind::binary_classification, false);
    space.allow(Stage::model, {"logistic", "knn", "cart"});
    const auto searched = optimize(cls, space, Budget{60.0, 6}, RandomSampler(), get_metric("auc"), options(1));
    const auto top = searched.best_trial().pipeline->predict(cls);
    for (auto voting : {Voting::soft, Voting::hard}) {
        const auto model = build_stacking(searched.history, 1, voting, cls.task, cls.num_classes());
        const auto out = model.predict(cls);
        EXPECT_EQ(out.values, top.values);
        if (voting == Voting::soft) {
            EXPECT_EQ(*out.probabilities, *top.probabilities);
        }
    }
}

TEST(Stacking, TakesTopRankedTrials) {
    const auto data = gaussian(120, 6);
    const auto result = optimize(data, regression_space(), Budget{60.0, 6}, RandomSampler(), get_metric("mse"), options(9));
    const auto ranked = result.ranked();
    ASSERT_GE(ranked.size(), 3u);
    const auto model = build_stacking(result.history, 3, Voting::mean, TaskKind::regression, 0);
    ASSERT_EQ(model.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(model.members()[i].stage, i);
        EXPECT_EQ(*model.members()[i].loss, *ranked[i]->loss);
        EXPECT_EQ(model.members()[i].pipeline, ranked[i]->pipeline);
    }
}

TEST(Stacking, ShrinksWithWarningAndFailsWithoutValidTrials) {
    const auto data = gaussian(80, 7);
    const auto result =
        optimize(data, fixed_space(TaskKind::regression, "ridge"), Budget{60.0, 2}, RandomSampler(), get_metric("mse"),
                 options(2));
    WarningCapture capture;
    const auto model = build_stacking(result.history, 5, Voting::mean, TaskKind::regression, 0);
    EXPECT_EQ(model.size(), 2u);
    EXPECT_TRUE(capture.contains("shrinks"));

    auto broken = result.history;
    for (auto& t : broken) {
        t.status = TrialStatus::failed;
        t.reason = "fit";
        t.loss.reset();
    }
    try {
        build_stacking(broken, 2, Voting::mean, TaskKind::regression, 0);
        ADD_FAILURE() << "expected an optimization error";
    } catch (const OptimizationError& e) {
        EXPECT_EQ(e.failure_histogram().at("failed:fit"), 2u);
    }
}

TEST(Bagging, MemberIgnoresMaskedOutColumns) {
    const auto data = gaussian(150, 8, 5);
    const auto built = build_bagging(data, regression_space(), Budget{60.0, 9}, RandomSampler(), get_metric("mse"),
                                     options(4), 3, 0.6, Voting::mean);
    ASSERT_EQ(built.model.size(), 3u);
    ASSERT_EQ(built.searches.size(), 3u);
    for (const auto& s : built.searches) EXPECT_LE(s.history.size(), 3u);

    for (std::size_t h = 0; h < built.model.size(); ++h) {
        const auto& rule = *built.model.members()[h].rule;
        EXPECT_EQ(rule.omega(), 3u);
        auto perturbed = data;
        for (std::size_t w = 0; w < rule.mask.size(); ++w) {
            if (rule.mask[w] == 1) continue;
            for (auto& v : perturbed.columns[w].numbers) v = v * 100.0 + 7.0;
        }
        EXPECT_EQ(built.model.member_prediction(h, perturbed).values, built.model.member_prediction(h, data).values);
    }
}

TEST(Bagging, IsDeterministic) {
    const auto data = gaussian(100, 9);
    auto run = [&] {
        return build_bagging(data, regression_space(), Budget{60.0, 4}, RandomSampler(), get_metric("mse"), options(5), 2,
                             0.5, Voting::median)
            .model.predict(data)
            .values;
    };
    EXPECT_EQ(run(), run());
}

TEST(Boosting, SingleStageEqualsPlainSearch) {
    const auto data = gaussian(120, 10);
    const auto space = regression_space();
    const auto built = build_boosting(data, space, Budget{60.0, 5}, RandomSampler(), get_metric("mse"), options(11), 1);
    const auto plain = optimize(data, space, Budget{60.0, 5}, RandomSampler(), get_metric("mse"), options(11));
    ASSERT_EQ(built.model.size(), 1u);
    EXPECT_EQ(built.searches.front().best_trial().k, plain.best_trial().k);
    EXPECT_EQ(built.model.predict(data).values, plain.best_trial().pipeline->predict(data).values);
}

TEST(Boosting, PredictionIsSumOfStages) {
    const auto data = gaussian(150, 12);
    const auto built = build_boosting(data, regression_space(), Budget{60.0, 9}, RandomSampler(), get_metric("mse"),
                                      options(13), 3);
    ASSERT_EQ(built.model.size(), 3u);
    const auto total = built.model.predict(data);
    std::vector<double> sum(data.rows(), 0.0);
    for (std::size_t h = 0; h < 3; ++h) {
        const auto part = built.model.member_prediction(h, data);
        for (std::size_t r = 0; r < sum.size(); ++r) sum[r] += part.values[r];
    }
    EXPECT_EQ(total.values, sum);
}

TEST(Boosting, LaterStagesFitResiduals) {
    const auto data = gaussian(150, 14);
    const auto space = fixed_space(TaskKind::regression, "ridge");
    const auto built =
        build_boosting(data, space, Budget{60.0, 4}, RandomSampler(), get_metric("mse"), options(15, ValidationMode::none), 2);
    ASSERT_EQ(built.model.size(), 2u);
    const auto first = built.model.member_prediction(0, data);
    Vector residual = data.y;
    for (Eigen::Index r = 0; r < residual.size(); ++r) residual[r] -= first.values[static_cast<std::size_t>(r)];
    const auto& stage = built.searches[1].best_trial();
    const auto refit = TrainedPipeline::fit(stage.spec, data.with_response(residual));
    EXPECT_EQ(refit.predict(data).values, built.model.member_prediction(1, data).values);
}

TEST(Boosting, DummyChainPredictsTheMean) {
    const auto data = gaussian(100, 16);
    const auto built = build_boosting(data, fixed_space(TaskKind::regression, "dummy"), Budget{60.0, 3}, RandomSampler(),
                                      get_metric("mse"), options(17, ValidationMode::none), 3);
    const double mean = data.y.mean();
    for (double v : built.model.predict(data).values) EXPECT_NEAR(v, mean, 1e-12);
}

TEST(Boosting, RejectsClassification) {
    const auto data = imbalanced(60, 1);
    EXPECT_ERROR_KIND(build_boosting(data, default_space(data.task, false), Budget{60.0, 4}, RandomSampler(),
                                     get_metric("auc"), options(1), 2),
                      ErrorKind::unsupported);
}

TEST(Ensemble, HardVoteOfIdenticalMembersMatchesMember) {
    const auto data = imbalanced(120, 18);
    auto space = fixed_space(TaskKind::binary_classification, "logistic");
    const auto result = optimize(data, space, Budget{60.0, 1}, RandomSampler(), get_metric("auc"), options(2));
    const auto& pipeline = result.best_trial().pipeline;
    std::vector<EnsembleMember> members(3, EnsembleMember{pipeline, std::nullopt, 0, std::nullopt});
    const EnsembleModel model(Strategy::stacking, Voting::hard, data.task, 2, members);
    EXPECT_EQ(model.predict(data).values, pipeline->predict(data).values);
}

TEST(Ensemble, SoftAggregateIsRowStochastic) {
    const auto data = imbalanced(150, 19);
    auto space = default_space(TaskKind::binary_classification, false);
    space.allow(Stage::model, {"logistic", "knn", "cart", "random_forest"});
    const auto result = optimize(data, space, Budget{60.0, 6}, RandomSampler(), get_metric("auc"), options(3));
    const auto model = build_stacking(result.history, 4, Voting::soft, data.task, 2);
    const auto out = model.predict(data);
    ASSERT_TRUE(out.probabilities.has_value());
    for (Eigen::Index r = 0; r < out.probabilities->rows(); ++r) {
        EXPECT_NEAR(out.probabilities->row(r).sum(), 1.0, 1e-12);
        EXPECT_GE(out.probabilities->row(r).minCoeff(), 0.0);
    }
}

TEST(Ensemble, JsonRoundTripPreservesPredictions) {
    const auto data = gaussian(100, 20, 5);
    const auto built = build_bagging(data, regression_space(), Budget{60.0, 4}, RandomSampler(), get_metric("mse"),
                                     options(6), 2, 0.6, Voting::max);
    const auto restored = predictor_from_json(json::parse(built.model.to_json().dump()));
    EXPECT_EQ(restored->predict(data).values, built.model.predict(data).values);
    EXPECT_ERROR_KIND(EnsembleModel::from_json(json{{"kind", "pipeline"}}), ErrorKind::format);
    EXPECT_ERROR_KIND(predictor_from_json(json{{"kind", "table"}}), ErrorKind::format);
}
