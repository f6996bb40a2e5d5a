#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "autotab/random.hpp"
#include "autotab/tabular.hpp"

namespace autotab {

enum class GeneratorKind { poisson, imbalanced_binary, gaussian };

inline std::string to_string(GeneratorKind k) {
    switch (k) {
        case GeneratorKind::poisson: return "poisson";
        case GeneratorKind::imbalanced_binary: return "imbalanced_binary";
        case GeneratorKind::gaussian: return "gaussian";
    }
    return "gaussian";
}

inline GeneratorKind parse_generator_kind(const std::string& s) {
    if (s == "poisson") return GeneratorKind::poisson;
    if (s == "imbalanced_binary") return GeneratorKind::imbalanced_binary;
    if (s == "gaussian") return GeneratorKind::gaussian;
    fail(ErrorKind::config, "unknown generator '" + s + "'");
}

struct GeneratorSpec {
    GeneratorKind kind = GeneratorKind::gaussian;
    std::size_t rows = 1000;
    std::size_t width = 5;
    std::vector<double> coefficients;  // empty: default_coefficients(width)
    double intercept = 0.0;
    double ratio = 9.0;        // imbalanced_binary: majority / minority
    double noise = 1.0;        // gaussian: residual sd
    double separation = 1.5;   // imbalanced_binary: distance between class means
    double missing_fraction = 0.0;
    std::size_t categorical_columns = 0;
    bool exposure = false;  // poisson: add an "exposure" column multiplying the rate
    std::uint64_t seed = 0;

    void check() const {
        require(rows >= 10, ErrorKind::config, "generator needs at least 10 rows");
        require(width >= 1, ErrorKind::config, "generator needs at least one feature");
        require(ratio >= 1.0, ErrorKind::config, "imbalance ratio must be >= 1");
        require(missing_fraction >= 0.0 && missing_fraction <= 0.5, ErrorKind::config,
                "missing fraction must be in [0, 0.5]");
        require(categorical_columns <= width, ErrorKind::config, "more categorical columns than features");
        require(coefficients.empty() || coefficients.size() == width, ErrorKind::config,
                "coefficient count must equal width");
        require(noise >= 0.0, ErrorKind::config, "noise must be non-negative");
    }
};

/// 0.2, -0.4, 0.6, -0.2, 0.4, -0.6, ...
inline std::vector<double> default_coefficients(std::size_t width) {
    std::vector<double> beta(width);
    for (std::size_t j = 0; j < width; ++j) beta[j] = (j % 2 == 0 ? 0.2 : -0.2) * static_cast<double>(1 + j % 3);
    return beta;
}

inline std::vector<double> coefficients_of(const GeneratorSpec& spec) {
    return spec.coefficients.empty() ? default_coefficients(spec.width) : spec.coefficients;
}

namespace detail {

inline std::string bin_label(double v) {
    if (v < -0.674) return "a";
    if (v < 0.0) return "b";
    if (v < 0.674) return "c";
    return "d";
}

}  // namespace detail

/// Seeded synthetic table. Features are standard normal latents; the last
/// `categorical_columns` are reported as quartile bins labelled a..d.
inline Dataset generate(const GeneratorSpec& spec) {
    spec.check();
    const std::size_t z = spec.rows;
    const std::size_t w = spec.width;
    const auto beta = coefficients_of(spec);
    Rng rng(spec.seed);

    Matrix latent(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(w));
    Vector y(static_cast<Eigen::Index>(z));
    std::vector<double> exposure;

    if (spec.kind == GeneratorKind::imbalanced_binary) {
        const auto minority = static_cast<std::size_t>(std::llround(static_cast<double>(z) / (spec.ratio + 1.0)));
        require(minority >= 1 && minority < z, ErrorKind::config, "ratio leaves an empty class");
        std::vector<double> labels(z, 0.0);
        for (std::size_t i = z - minority; i < z; ++i) labels[i] = 1.0;
        rng.shuffle(labels);
        const double shift = spec.separation / std::sqrt(static_cast<double>(w));
        for (std::size_t i = 0; i < z; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                latent(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rng.normal() + labels[i] * shift;
            }
            y[static_cast<Eigen::Index>(i)] = labels[i];
        }
    } else {
        for (std::size_t i = 0; i < z; ++i) {
            double eta = spec.intercept;
            for (std::size_t j = 0; j < w; ++j) {
                const double v = rng.normal();
                latent(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
                eta += beta[j] * v;
            }
            if (spec.kind == GeneratorKind::poisson) {
                double rate = std::exp(eta);
                if (spec.exposure) {
                    exposure.push_back(rng.uniform(0.1, 1.0));
                    rate *= exposure.back();
                }
                y[static_cast<Eigen::Index>(i)] = static_cast<double>(rng.poisson(rate));
            } else {
                y[static_cast<Eigen::Index>(i)] = eta + spec.noise * rng.normal();
            }
        }
    }

    Dataset data;
    const std::size_t first_categorical = w - spec.categorical_columns;
    for (std::size_t j = 0; j < w; ++j) {
        Column column;
        column.schema.name = "x" + std::to_string(j);
        if (j >= first_categorical) {
            column.schema.kind = ColumnKind::categorical;
            column.labels.resize(z);
            for (std::size_t i = 0; i < z; ++i) {
                column.labels[i] = detail::bin_label(latent(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
            }
        } else {
            column.schema.kind = ColumnKind::numeric;
            column.numbers.resize(z);
            for (std::size_t i = 0; i < z; ++i) {
                column.numbers[i] = latent(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        }
        data.columns.push_back(std::move(column));
    }

    // Exact injection: round(fraction * Z * W) distinct feature cells.
    const auto cells = z * w;
    const auto missing = static_cast<std::size_t>(std::llround(spec.missing_fraction * static_cast<double>(cells)));
    if (missing > 0) {
        Rng mask_rng(derive_seed(spec.seed, 1));
        for (auto cell : mask_rng.sample_without_replacement(cells, missing)) {
            auto& column = data.columns[cell % w];
            const std::size_t row = cell / w;
            if (column.schema.kind == ColumnKind::numeric) {
                column.numbers[row] = missing_value;
            } else {
                column.labels[row].reset();
            }
        }
    }

    if (spec.exposure && spec.kind == GeneratorKind::poisson) {
        Column column;
        column.schema.name = "exposure";
        column.schema.kind = ColumnKind::numeric;
        column.numbers = exposure;
        data.columns.push_back(std::move(column));
    }
    for (auto& column : data.columns) column.refresh_schema();

    data.y = std::move(y);
    data.response.name = "y";
    data.response.kind = ColumnKind::numeric;
    if (spec.kind == GeneratorKind::imbalanced_binary) {
        data.task = TaskKind::binary_classification;
        data.class_labels = {"0", "1"};
    } else {
        data.task = TaskKind::regression;
    }
    data.validate();
    return data;
}

inline void to_json(json& j, const GeneratorSpec& s) {
    j = json{{"kind", to_string(s.kind)},
             {"rows", s.rows},
             {"width", s.width},
             {"coefficients", s.coefficients},
             {"intercept", s.intercept},
             {"ratio", s.ratio},
             {"noise", s.noise},
             {"separation", s.separation},
             {"missing_fraction", s.missing_fraction},
             {"categorical_columns", s.categorical_columns},
             {"exposure", s.exposure},
             {"seed", s.seed}};
}

inline void from_json(const json& j, GeneratorSpec& s) {
    s = GeneratorSpec{};
    s.kind = parse_generator_kind(j.value("kind", std::string("gaussian")));
    s.rows = j.value("rows", s.rows);
    s.width = j.value("width", s.width);
    s.coefficients = j.value("coefficients", s.coefficients);
    s.intercept = j.value("intercept", s.intercept);
    s.ratio = j.value("ratio", s.ratio);
    s.noise = j.value("noise", s.noise);
    s.separation = j.value("separation", s.separation);
    s.missing_fraction = j.value("missing_fraction", s.missing_fraction);
    s.categorical_columns = j.value("categorical_columns", s.categorical_columns);
    s.exposure = j.value("exposure", s.exposure);
    s.seed = j.value("seed", s.seed);
}

}  // namespace autotab
