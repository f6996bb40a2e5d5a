// Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers as
// arguments to run a subset.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "autotab.hpp"

using namespace autotab;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::filesystem::path scratch(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("autotab_acceptance_" + std::to_string(::getpid()) + "_" + tag);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(digits);
    out << v;
    return out.str();
}

std::string sci(double v) {
    char buffer[32];
    std::snprintf(buffer, sizeof buffer, "%.2e", v);
    return buffer;
}

Matrix feature_matrix(const Dataset& data) {
    Matrix x(static_cast<Eigen::Index>(data.rows()), static_cast<Eigen::Index>(data.width()));
    for (std::size_t j = 0; j < data.width(); ++j) {
        for (std::size_t r = 0; r < data.rows(); ++r) {
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = data.columns[j].numbers[r];
        }
    }
    return x;
}

// ---- 1: metric oracles -----------------------------------------------------

Outcome metric_oracles() {
    Rng rng(20240601);
    std::size_t mismatches = 0;
    double worst = 0.0;
    auto compare = [&](double got, double want) {
        const double err = std::abs(got - want) / std::max(1.0, std::abs(want));
        worst = std::max(worst, err);
        if (err > 1e-10) ++mismatches;
    };
    for (int instance = 0; instance < 1000; ++instance) {
        const std::size_t n = 2 + rng.index(49);
        std::vector<double> counts(n), rates(n), y(n), yhat(n), labels(n), scores(n);
        for (std::size_t i = 0; i < n; ++i) {
            counts[i] = static_cast<double>(rng.poisson(rng.uniform(0.1, 4.0)));
            rates[i] = rng.uniform(0.05, 6.0);
            y[i] = rng.normal() * 3.0;
            yhat[i] = y[i] + rng.normal();
            labels[i] = i < 2 ? static_cast<double>(i) : static_cast<double>(rng.index(2));
            scores[i] = static_cast<double>(rng.index(20)) / 20.0;
        }

        double dev = 0.0, sq = 0.0, ab = 0.0, mean = 0.0, tot = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dev += rates[i] - counts[i] + (counts[i] > 0 ? counts[i] * std::log(counts[i] / rates[i]) : 0.0);
            sq += (y[i] - yhat[i]) * (y[i] - yhat[i]);
            ab += std::abs(y[i] - yhat[i]);
            mean += y[i];
        }
        mean /= static_cast<double>(n);
        for (double v : y) tot += (v - mean) * (v - mean);
        double good = 0.0, pairs = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
                if (labels[a] != 0.0 || labels[b] != 1.0) continue;
                pairs += 1.0;
                good += scores[a] < scores[b] ? 1.0 : (scores[a] == scores[b] ? 0.5 : 0.0);
            }
        }
        compare(poisson_deviance(counts, rates), 2.0 * dev / static_cast<double>(n));
        compare(mse(y, yhat), sq / static_cast<double>(n));
        compare(mae(y, yhat), ab / static_cast<double>(n));
        compare(r2_score(y, yhat), 1.0 - sq / tot);
        compare(auc(labels, scores), good / pairs);
    }
    return {mismatches == 0, "5000 comparisons, " + std::to_string(mismatches) + " mismatches, worst relative error " +
                                 sci(worst)};
}

// ---- 2: budget compliance --------------------------------------------------

Outcome budget_compliance() {
    Rng rng(77);
    std::size_t violations = 0, trials = 0;
    for (int run = 0; run < 50; ++run) {
        GeneratorSpec g;
        const auto kind = rng.index(3);
        g.kind = kind == 0 ? GeneratorKind::gaussian : kind == 1 ? GeneratorKind::poisson : GeneratorKind::imbalanced_binary;
        g.rows = 60 + rng.index(240);
        g.width = 2 + rng.index(5);
        g.ratio = 2.0 + rng.uniform() * 6.0;
        g.missing_fraction = rng.index(2) == 0 ? 0.0 : 0.05;
        g.categorical_columns = rng.index(2);
        g.seed = rng.next();
        const auto data = generate(g);
        const bool counts = g.kind == GeneratorKind::poisson;

        const Budget budget{rng.uniform(0.05, 1.0), 1 + rng.index(15)};
        SearchOptions options;
        options.seed = rng.next();
        options.parallelism = 1 + rng.index(2);
        const auto mode = rng.index(3);
        options.validation.mode = mode == 0 ? ValidationMode::holdout : mode == 1 ? ValidationMode::kfold : ValidationMode::none;
        options.validation.folds = 3;
        const auto sampler = make_sampler(rng.index(2) == 0 ? "random" : "adaptive");
        const std::string metric = is_classification(data.task) ? "auc" : counts ? "poisson_deviance" : "mse";

        try {
            const auto result =
                run_search(data, default_space(data.task, counts), budget, *sampler, get_metric(metric), options);
            trials += result.history.size();
            double longest = 0.0;
            for (const auto& t : result.history) longest = std::max(longest, t.fit_seconds);
            bool ok = result.history.size() <= budget.max_evals;
            ok = ok && result.wall_seconds <= budget.time_seconds + longest + 1e-3;
            const auto curve = incumbent_curve(result.history);
            for (std::size_t i = 1; i < curve.size(); ++i) {
                if (curve[i - 1] && (!curve[i] || *curve[i] > *curve[i - 1])) ok = false;
            }
            if (!ok) ++violations;
        } catch (const OptimizationError&) {
            // every trial failed: the budget was still honoured
        }
    }
    return {violations == 0, "50 runs, " + std::to_string(trials) + " trials, " + std::to_string(violations) + " violations"};
}

// ---- 3: determinism --------------------------------------------------------

ExperimentConfig experiment(const std::filesystem::path& dir, const std::string& name, const std::string& train,
                            std::size_t evals, std::uint64_t seed, const std::string& task) {
    ExperimentConfig config;
    config.model_name = name;
    config.data.train = train;
    config.data.response = "y";
    config.data.test_fraction = 0.2;
    config.data.task = task;
    config.max_evals = evals;
    config.timeout = 600;
    config.seed = seed;
    config.parallelism = 1;
    config.output_dir = (dir / "runs").string();
    return config;
}

Outcome determinism() {
    const auto dir = scratch("determinism");
    GeneratorSpec g;
    g.kind = GeneratorKind::poisson;
    g.rows = 400;
    g.width = 5;
    g.categorical_columns = 1;
    g.missing_fraction = 0.03;
    g.seed = 5;
    write_csv(generate(g), (dir / "train.csv").string());
    std::ostringstream sink;
    auto config = experiment(dir, "first", (dir / "train.csv").string(), 12, 99, "regression");
    config.validation = "kfold";
    config.folds = 3;
    const auto a = run_fit(config, sink);
    config.model_name = "second";
    const auto b = run_fit(config, sink);
    const auto first = slurp(a.directory / "history.jsonl");
    const auto second = slurp(b.directory / "history.jsonl");
    std::filesystem::remove_all(dir);
    return {!first.empty() && first == second,
            std::to_string(first.size()) + " bytes, " + (first == second ? "identical" : "different")};
}

// ---- 4: balancing geometry -------------------------------------------------

Outcome balancing_geometry() {
    GeneratorSpec g;
    g.kind = GeneratorKind::imbalanced_binary;
    g.rows = 1000;
    g.width = 3;
    g.ratio = 9;
    g.seed = 17;
    const auto data = generate(g);
    const Matrix x = feature_matrix(data);
    const Vector& y = data.y;
    std::vector<std::string> problems;

    auto balanced = [&](const Resampled& out, const std::string& name) {
        const auto counts = class_counts(out.y);
        const auto gap = counts[0] > counts[1] ? counts[0] - counts[1] : counts[1] - counts[0];
        if (gap > 1) problems.push_back(name + " gap " + std::to_string(gap));
    };
    balanced(random_over(x, y, 1.0, 1), "random_over");
    balanced(random_under(x, y, 1.0, 2), "random_under");
    const auto s = smote(x, y, 1.0, 5, 3);
    balanced(s, "smote");

    std::vector<Eigen::Index> minority;
    for (Eigen::Index r = 0; r < y.size(); ++r) {
        if (y[r] == 1.0) minority.push_back(r);
    }
    std::size_t synthetic = 0, off_segment = 0;
    for (Eigen::Index r = 0; r < s.x.rows(); ++r) {
        if (s.origin[static_cast<std::size_t>(r)] != Resampled::synthetic) continue;
        ++synthetic;
        bool found = false;
        for (std::size_t a = 0; a < minority.size() && !found; ++a) {
            for (std::size_t b = a + 1; b < minority.size() && !found; ++b) {
                const Eigen::RowVectorXd p = x.row(minority[a]);
                const Eigen::RowVectorXd d = x.row(minority[b]) - p;
                const double len = d.squaredNorm();
                if (len == 0.0) continue;
                const double t = (s.x.row(r) - p).dot(d) / len;
                if (t < -1e-12 || t > 1.0 + 1e-12) continue;
                found = (s.x.row(r) - (p + t * d)).cwiseAbs().maxCoeff() <= 1e-9;
            }
        }
        if (!found) ++off_segment;
    }
    if (off_segment > 0) problems.push_back(std::to_string(off_segment) + " smote rows off every segment");

    const auto t = tomek(x, y);
    std::set<std::size_t> kept(t.origin.begin(), t.origin.end());
    auto nearest = [&](Eigen::Index i) {
        Eigen::Index best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < x.rows(); ++j) {
            if (j == i) continue;
            const double d = (x.row(i) - x.row(j)).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        return best;
    };
    std::size_t removed = 0, bad_links = 0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        if (kept.contains(static_cast<std::size_t>(i))) continue;
        ++removed;
        const auto j = nearest(i);
        if (y[i] != 0.0 || y[j] != 1.0 || nearest(j) != i) ++bad_links;
    }
    if (bad_links > 0) problems.push_back(std::to_string(bad_links) + " tomek removals are not links");

    std::string detail = std::to_string(synthetic) + " smote rows checked, " + std::to_string(removed) + " tomek removals";
    for (const auto& p : problems) detail += "; " + p;
    return {problems.empty() && synthetic > 0, detail};
}

// ---- 5: ensemble identities ------------------------------------------------

Outcome ensemble_identities() {
    std::vector<std::string> problems;
    GeneratorSpec g;
    g.rows = 300;
    g.width = 5;
    g.seed = 8;
    const auto data = generate(g);
    auto space = default_space(TaskKind::regression, false);
    SearchOptions options;
    options.seed = 4;
    const RandomSampler sampler;
    const auto metric = get_metric("mse");

    const auto searched = optimize(data, space, Budget{600, 10}, sampler, metric, options);
    const auto stack = build_stacking(searched.history, 1, Voting::mean, TaskKind::regression, 0);
    if (stack.predict(data).values != searched.best_trial().pipeline->predict(data).values) {
        problems.push_back("stacking H=1 differs from the best pipeline");
    }

    const auto boosted = build_boosting(data, space, Budget{600, 9}, sampler, metric, options, 3);
    std::vector<double> sum(data.rows(), 0.0);
    for (std::size_t h = 0; h < boosted.model.size(); ++h) {
        const auto part = boosted.model.member_prediction(h, data);
        for (std::size_t r = 0; r < sum.size(); ++r) sum[r] += part.values[r];
    }
    if (boosted.model.predict(data).values != sum) problems.push_back("boosting is not the stage sum");

    const auto bagged = build_bagging(data, space, Budget{600, 9}, sampler, metric, options, 3, 0.6, Voting::mean);
    for (std::size_t h = 0; h < bagged.model.size(); ++h) {
        const auto& rule = *bagged.model.members()[h].rule;
        auto perturbed = data;
        for (std::size_t w = 0; w < rule.mask.size(); ++w) {
            if (rule.mask[w] == 0) {
                for (auto& v : perturbed.columns[w].numbers) v = -3.0 * v + 11.0;
            }
        }
        if (bagged.model.member_prediction(h, perturbed).values != bagged.model.member_prediction(h, data).values) {
            problems.push_back("bagging member " + std::to_string(h) + " reads a masked column");
        }
    }

    GeneratorSpec c;
    c.kind = GeneratorKind::imbalanced_binary;
    c.rows = 300;
    c.ratio = 3;
    c.seed = 9;
    const auto cls = generate(c);
    const auto cls_search = optimize(cls, default_space(cls.task, false), Budget{600, 10}, sampler, get_metric("auc"), options);
    const auto soft = build_stacking(cls_search.history, 5, Voting::soft, cls.task, 2).predict(cls);
    double drift = 0.0;
    for (Eigen::Index r = 0; r < soft.probabilities->rows(); ++r) {
        drift = std::max(drift, std::abs(soft.probabilities->row(r).sum() - 1.0));
        if (soft.probabilities->row(r).minCoeff() < 0.0) drift = 1.0;
    }
    if (drift > 1e-12) problems.push_back("soft vote rows sum off by " + std::to_string(drift));

    std::string detail = problems.empty() ? "stacking, boosting, soft vote and bagging identities hold" : "";
    for (const auto& p : problems) detail += (detail.empty() ? "" : "; ") + p;
    return {problems.empty(), detail};
}

// ---- 6: GLM benchmark ------------------------------------------------------

Outcome glm_benchmark() {
    const auto dir = scratch("glm");
    std::size_t wins = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        GeneratorSpec g;
        g.kind = GeneratorKind::poisson;
        g.rows = 5000;
        g.width = 8;
        g.seed = seed;
        const auto train = dir / ("poisson_" + std::to_string(seed) + ".csv");
        write_csv(generate(g), train.string());
        auto config = experiment(dir, "poisson_" + std::to_string(seed), train.string(), 32, seed, "regression");
        config.objective = "poisson_deviance";
        std::ostringstream sink;
        const auto fit = run_fit(config, sink);
        const auto glm = run_glm_baseline(config, sink);
        const double a = fit.report.at("test").at("poisson_deviance").get<double>();
        const double b = glm.report.at("test").at("poisson_deviance").get<double>();
        wins += a <= 1.05 * b ? 1 : 0;
        detail += (detail.empty() ? "" : ", ") + fixed(a / b, 4);
    }
    std::filesystem::remove_all(dir);
    return {wins >= 4, std::to_string(wins) + "/5 seeds within 1.05x of the GLM (ratios " + detail + ")"};
}

// ---- 7: imbalanced AUC -----------------------------------------------------

Outcome imbalanced_auc() {
    const auto dir = scratch("auc");
    double with = 0.0, without = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        GeneratorSpec g;
        g.kind = GeneratorKind::imbalanced_binary;
        g.rows = 5000;
        g.width = 6;
        g.ratio = 19;
        g.seed = seed;
        const auto train = dir / ("imbalanced_" + std::to_string(seed) + ".csv");
        write_csv(generate(g), train.string());
        std::ostringstream sink;
        auto config = experiment(dir, "balanced_" + std::to_string(seed), train.string(), 32, seed, "binary_classification");
        config.objective = "auc";
        with += run_fit(config, sink).report.at("test").at("auc").get<double>() / 5.0;
        config.model_name = "plain_" + std::to_string(seed);
        config.space = json{{"allow", {{"balance", {"none"}}}}};
        without += run_fit(config, sink).report.at("test").at("auc").get<double>() / 5.0;
    }
    std::filesystem::remove_all(dir);
    return {with >= without, "mean test AUC " + fixed(with) + " with balancing, " + fixed(without) + " with none"};
}

// ---- 8: Poisson GLM recovery -----------------------------------------------

Outcome glm_recovery() {
    Rng rng(31);
    Vector y(500);
    for (Eigen::Index i = 0; i < y.size(); ++i) y[i] = static_cast<double>(rng.poisson(3.7));
    PoissonGlmModel intercept_only(TaskKind::regression, 0, 0.0);
    intercept_only.fit(Matrix(500, 0), y);
    const double intercept_error = std::abs(intercept_only.intercept() - std::log(y.mean()));

    // Rates 2 * 3^a * 2^-b * e are whole numbers, so the counts carry no noise.
    const std::vector<double> exposures{2.0, 4.0, 8.0};
    Matrix x(36, 2);
    Vector counts(36), offset(36);
    Eigen::Index row = 0;
    for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 3; ++b) {
            for (double e : exposures) {
                x(row, 0) = a;
                x(row, 1) = b;
                offset[row] = std::log(e);
                counts[row] = std::round(2.0 * std::pow(3.0, a) * std::pow(2.0, -b) * e);
                ++row;
            }
        }
    }
    PoissonGlmModel glm(TaskKind::regression, 0, 0.0);
    glm.fit(x, counts, offset);
    const double beta_error = std::max({std::abs(glm.intercept() - std::log(2.0)),
                                        std::abs(glm.coefficients()[0] - std::log(3.0)),
                                        std::abs(glm.coefficients()[1] + std::log(2.0))});
    return {intercept_error <= 1e-8 && beta_error <= 1e-4,
            "intercept error " + sci(intercept_error) + ", coefficient error " + sci(beta_error)};
}

}  // namespace

int main(int argc, char** argv) {
    set_warning_sink([](std::string_view) {});
    const std::vector<std::function<Outcome()>> criteria{metric_oracles,      budget_compliance, determinism,
                                                         balancing_geometry,  ensemble_identities, glm_benchmark,
                                                         imbalanced_auc,      glm_recovery};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int number = static_cast<int>(i) + 1;
        if (!selected.empty() && !selected.contains(number)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome{false, ""};
        try {
            outcome = criteria[i]();
        } catch (const std::exception& e) {
            outcome = {false, std::string("threw: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        all = all && outcome.pass;
        std::cout << "criterion " << number << ": " << (outcome.pass ? "PASS" : "FAIL") << " (" << fixed(seconds, 1)
                  << " s) " << outcome.detail << std::endl;
    }
    return all ? 0 : 1;
}
