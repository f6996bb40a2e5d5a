// Command-line front end: fit, predict, history, glm-baseline, synth.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "autotab.hpp"

namespace {

struct ConfigFlags {
    std::string path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> parallelism;
    std::optional<std::size_t> max_evals;
    std::optional<double> timeout;
    std::optional<std::string> output_dir;
    std::optional<std::string> objective;

    void attach(CLI::App* app) {
        app->add_option("-c,--config", path, "experiment configuration (JSON)")->required();
        app->add_option("--seed", seed, "override the seed");
        app->add_option("--parallelism", parallelism, "concurrent trials");
        app->add_option("--max-evals", max_evals, "evaluation budget G");
        app->add_option("--timeout", timeout, "time budget T in seconds");
        app->add_option("--output-dir", output_dir, "artifact root directory");
        app->add_option("--objective", objective, "objective metric id");
    }

    autotab::ExperimentConfig load() const {
        auto config = autotab::load_config(path);
        if (seed) config.seed = *seed;
        if (parallelism) config.parallelism = *parallelism;
        if (max_evals) config.max_evals = *max_evals;
        if (timeout) config.timeout = *timeout;
        if (output_dir) config.output_dir = *output_dir;
        if (objective) config.objective = *objective;
        return config;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"autotab: budgeted pipeline search for tabular data"};
    app.require_subcommand(1);

    ConfigFlags fit_flags;
    auto* fit = app.add_subcommand("fit", "search pipelines and write artifacts");
    fit_flags.attach(fit);

    std::string model_path, data_path, output_path;
    auto* predict = app.add_subcommand("predict", "predict with a saved model");
    predict->add_option("-m,--model", model_path, "model.json written by fit")->required();
    predict->add_option("-d,--data", data_path, "CSV with the fit-time feature columns")->required();
    predict->add_option("-o,--output", output_path, "predictions CSV")->required();

    std::string history_dir;
    std::size_t top = 10;
    auto* history = app.add_subcommand("history", "show the best trials and the incumbent curve");
    history->add_option("-d,--dir", history_dir, "experiment directory")->required();
    history->add_option("-n,--top", top, "rows to show");

    ConfigFlags baseline_flags;
    auto* baseline = app.add_subcommand("glm-baseline", "fit the reference GLM for the task");
    baseline_flags.attach(baseline);

    autotab::GeneratorSpec synth_spec;
    std::string synth_kind = "gaussian", synth_output;
    auto* synth = app.add_subcommand("synth", "write a synthetic dataset");
    synth->add_option("-k,--kind", synth_kind, "poisson | imbalanced_binary | gaussian");
    synth->add_option("--rows", synth_spec.rows, "row count Z");
    synth->add_option("--width", synth_spec.width, "feature count W");
    synth->add_option("--ratio", synth_spec.ratio, "majority/minority ratio");
    synth->add_option("--intercept", synth_spec.intercept, "linear predictor intercept");
    synth->add_option("--noise", synth_spec.noise, "gaussian residual sd");
    synth->add_option("--separation", synth_spec.separation, "class mean distance");
    synth->add_option("--missing", synth_spec.missing_fraction, "missing cell fraction");
    synth->add_option("--categorical", synth_spec.categorical_columns, "categorical feature count");
    synth->add_flag("--exposure", synth_spec.exposure, "add an exposure column (poisson)");
    synth->add_option("--seed", synth_spec.seed, "generator seed");
    synth->add_option("-o,--output", synth_output, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*fit) return autotab::cmd_fit(fit_flags.load(), std::cout);
        if (*predict) return autotab::cmd_predict(model_path, data_path, output_path, std::cout);
        if (*history) return autotab::cmd_history(history_dir, top, std::cout);
        if (*baseline) return autotab::cmd_glm_baseline(baseline_flags.load(), std::cout);
        if (*synth) {
            synth_spec.kind = autotab::parse_generator_kind(synth_kind);
            return autotab::cmd_synth(synth_spec, synth_output, std::cout);
        }
    } catch (const autotab::Error& e) {
        std::cerr << e.what() << "\n";
        return autotab::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
