#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "autotab/deadline.hpp"
#include "autotab/error.hpp"
#include "autotab/linalg.hpp"
#include "autotab/tabular.hpp"

namespace autotab {

/// Type-7 (linear interpolation) quantile of an unsorted sample.
inline double quantile(std::vector<double> values, double p) {
    require(!values.empty(), ErrorKind::contract, "quantile of an empty sample");
    std::sort(values.begin(), values.end());
    const double h = (static_cast<double>(values.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

// ---------------------------------------------------------------------------
// Encoding

enum class EncodeMethod { ordinal, onehot };

inline std::string to_string(EncodeMethod m) { return m == EncodeMethod::ordinal ? "ordinal" : "onehot"; }

inline EncodeMethod parse_encode_method(const std::string& s) {
    if (s == "ordinal") return EncodeMethod::ordinal;
    if (s == "onehot") return EncodeMethod::onehot;
    fail(ErrorKind::config, "unknown encoding method '" + s + "'");
}

/// Turns the typed feature table into a numeric matrix. Numeric columns pass through;
/// categorical columns map by first-appearance order. Unseen categories get the
/// reserved code c (ordinal) or an all-zero block (onehot); missing cells stay NaN.
class Encoder {
public:
    explicit Encoder(EncodeMethod method = EncodeMethod::ordinal) : method_(method) {}

    EncodeMethod method() const { return method_; }
    const std::vector<std::string>& output_names() const { return output_names_; }
    std::size_t input_width() const { return columns_.size(); }

    Matrix fit_transform(const Dataset& data) {
        columns_.clear();
        for (const auto& column : data.columns) {
            ColumnState state{column.schema.name, column.schema.kind, {}, {}};
            if (column.schema.kind == ColumnKind::categorical) {
                // Recompute first-appearance order from these rows, not the loaded schema.
                Column copy = column;
                copy.refresh_schema();
                state.categories = copy.schema.categories;
            }
            state.index_categories();
            columns_.push_back(std::move(state));
        }
        build_names();
        fitted_ = true;
        return transform(data);
    }

    Matrix transform(const Dataset& data) const {
        require(fitted_, ErrorKind::contract, "encoder used before fit");
        std::vector<const Column*> sources;
        for (const auto& state : columns_) {
            const auto index = data.column_index(state.name);
            require(index.has_value(), ErrorKind::contract, "missing feature column '" + state.name + "'");
            const Column& column = data.columns[*index];
            require(column.schema.kind == state.kind, ErrorKind::contract,
                    "column '" + state.name + "' changed kind since fit");
            sources.push_back(&column);
        }
        const std::size_t z = data.rows();
        Matrix out(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(output_names_.size()));
        Eigen::Index offset = 0;
        for (std::size_t j = 0; j < columns_.size(); ++j) {
            const ColumnState& state = columns_[j];
            const Column& column = *sources[j];
            if (state.kind == ColumnKind::numeric) {
                for (std::size_t r = 0; r < z; ++r) out(static_cast<Eigen::Index>(r), offset) = column.numbers[r];
                ++offset;
                continue;
            }
            const auto c = static_cast<Eigen::Index>(state.categories.size());
            if (method_ == EncodeMethod::ordinal) {
                for (std::size_t r = 0; r < z; ++r) {
                    const auto& label = column.labels[r];
                    out(static_cast<Eigen::Index>(r), offset) =
                        label ? static_cast<double>(state.code(*label)) : missing_value;
                }
                ++offset;
            } else {
                for (std::size_t r = 0; r < z; ++r) {
                    const auto row = static_cast<Eigen::Index>(r);
                    const auto& label = column.labels[r];
                    if (!label) {
                        out.row(row).segment(offset, c).setConstant(missing_value);
                        continue;
                    }
                    out.row(row).segment(offset, c).setZero();
                    const auto code = state.code(*label);
                    if (code < state.categories.size()) out(row, offset + static_cast<Eigen::Index>(code)) = 1.0;
                }
                offset += c;
            }
        }
        return out;
    }

    json to_json() const {
        json columns = json::array();
        for (const auto& s : columns_) {
            columns.push_back({{"name", s.name}, {"kind", autotab::to_string(s.kind)}, {"categories", s.categories}});
        }
        return {{"method", autotab::to_string(method_)}, {"columns", columns}};
    }

    static Encoder from_json(const json& j) {
        Encoder e(j.at("method").get<std::string>() == "onehot" ? EncodeMethod::onehot : EncodeMethod::ordinal);
        for (const auto& c : j.at("columns")) {
            ColumnState state{c.at("name").get<std::string>(), parse_column_kind(c.at("kind").get<std::string>()),
                              c.at("categories").get<std::vector<std::string>>(), {}};
            state.index_categories();
            e.columns_.push_back(std::move(state));
        }
        e.build_names();
        e.fitted_ = true;
        return e;
    }

private:
    struct ColumnState {
        std::string name;
        ColumnKind kind;
        std::vector<std::string> categories;
        std::unordered_map<std::string, std::size_t> lookup;

        void index_categories() {
            lookup.clear();
            for (std::size_t i = 0; i < categories.size(); ++i) lookup.emplace(categories[i], i);
        }
        std::size_t code(const std::string& label) const {
            const auto it = lookup.find(label);
            return it == lookup.end() ? categories.size() : it->second;
        }
    };

    void build_names() {
        output_names_.clear();
        for (const auto& s : columns_) {
            if (s.kind == ColumnKind::categorical && method_ == EncodeMethod::onehot) {
                for (const auto& category : s.categories) output_names_.push_back(s.name + "=" + category);
            } else {
                output_names_.push_back(s.name);
            }
        }
    }

    EncodeMethod method_;
    std::vector<ColumnState> columns_;
    std::vector<std::string> output_names_;
    bool fitted_ = false;
};

// ---------------------------------------------------------------------------
// Imputation

enum class ImputeMethod { mean, median, mode, constant, knn };

inline std::string to_string(ImputeMethod m) {
    switch (m) {
        case ImputeMethod::mean: return "mean";
        case ImputeMethod::median: return "median";
        case ImputeMethod::mode: return "mode";
        case ImputeMethod::constant: return "constant";
        case ImputeMethod::knn: return "knn";
    }
    return "mean";
}

inline ImputeMethod parse_impute_method(const std::string& s) {
    if (s == "mean") return ImputeMethod::mean;
    if (s == "median") return ImputeMethod::median;
    if (s == "mode") return ImputeMethod::mode;
    if (s == "constant") return ImputeMethod::constant;
    if (s == "knn") return ImputeMethod::knn;
    fail(ErrorKind::config, "unknown imputation method '" + s + "'");
}

class Imputer {
public:
    explicit Imputer(ImputeMethod method = ImputeMethod::mean, double constant = 0.0, std::size_t k = 5)
        : method_(method), constant_(constant), k_(std::max<std::size_t>(k, 1)) {}

    ImputeMethod method() const { return method_; }

    Matrix fit_transform(const Matrix& x) {
        const auto w = x.cols();
        fill_.assign(static_cast<std::size_t>(w), constant_);
        for (Eigen::Index j = 0; j < w; ++j) {
            std::vector<double> observed;
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                if (!is_missing(x(r, j))) observed.push_back(x(r, j));
            }
            if (method_ == ImputeMethod::constant) continue;
            require(!observed.empty(), ErrorKind::imputation,
                    "column " + std::to_string(j) + " has no observed values to impute from");
            auto& fill = fill_[static_cast<std::size_t>(j)];
            switch (method_) {
                case ImputeMethod::median:
                    fill = quantile(observed, 0.5);
                    break;
                case ImputeMethod::mode:
                    fill = mode_of(observed);
                    break;
                default: {
                    double sum = 0.0;
                    for (double v : observed) sum += v;
                    fill = sum / static_cast<double>(observed.size());
                }
            }
        }
        if (method_ == ImputeMethod::knn) {
            std::vector<std::size_t> complete;
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                if (!x.row(r).array().isNaN().any()) complete.push_back(static_cast<std::size_t>(r));
            }
            reference_ = take_rows(x, complete);
        }
        fitted_ = true;
        return transform(x);
    }

    Matrix transform(const Matrix& x) const {
        require(fitted_, ErrorKind::contract, "imputer used before fit");
        require(static_cast<std::size_t>(x.cols()) == fill_.size(), ErrorKind::contract, "imputer column mismatch");
        Matrix out = x;
        for (Eigen::Index r = 0; r < out.rows(); ++r) {
            if (!out.row(r).array().isNaN().any()) continue;
            if (method_ == ImputeMethod::knn && reference_.rows() > 0) {
                fill_from_neighbors(x, r, out);
                continue;
            }
            for (Eigen::Index j = 0; j < out.cols(); ++j) {
                if (is_missing(out(r, j))) out(r, j) = fill_[static_cast<std::size_t>(j)];
            }
        }
        return out;
    }

    json to_json() const {
        json j{{"method", autotab::to_string(method_)}, {"constant", constant_}, {"k", k_}, {"fill", fill_}};
        if (method_ == ImputeMethod::knn) {
            j["reference_rows"] = reference_.rows();
            j["reference"] = std::vector<double>(reference_.data(), reference_.data() + reference_.size());
        }
        return j;
    }

    static Imputer from_json(const json& j) {
        Imputer imp(parse_impute_method(j.at("method").get<std::string>()), j.at("constant").get<double>(),
                    j.at("k").get<std::size_t>());
        j.at("fill").get_to(imp.fill_);
        if (imp.method_ == ImputeMethod::knn) {
            const auto rows = j.at("reference_rows").get<Eigen::Index>();
            const auto values = j.at("reference").get<std::vector<double>>();
            imp.reference_.resize(rows, static_cast<Eigen::Index>(imp.fill_.size()));
            std::copy(values.begin(), values.end(), imp.reference_.data());
        }
        imp.fitted_ = true;
        return imp;
    }

private:
    static double mode_of(std::vector<double> values) {
        std::sort(values.begin(), values.end());
        double best = values.front();
        std::size_t best_count = 0;
        for (std::size_t i = 0; i < values.size();) {
            std::size_t j = i;
            while (j < values.size() && values[j] == values[i]) ++j;
            if (j - i > best_count) {
                best_count = j - i;
                best = values[i];
            }
            i = j;
        }
        return best;
    }

    // Mean over the k nearest complete training rows, distance on the row's observed coordinates.
    void fill_from_neighbors(const Matrix& x, Eigen::Index r, Matrix& out) const {
        check_deadline();
        std::vector<std::pair<double, Eigen::Index>> distances;
        distances.reserve(static_cast<std::size_t>(reference_.rows()));
        for (Eigen::Index i = 0; i < reference_.rows(); ++i) {
            double d = 0.0;
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                if (is_missing(x(r, j))) continue;
                const double diff = x(r, j) - reference_(i, j);
                d += diff * diff;
            }
            distances.emplace_back(d, i);
        }
        const auto k = std::min<std::size_t>(k_, distances.size());
        std::partial_sort(distances.begin(), distances.begin() + static_cast<std::ptrdiff_t>(k), distances.end());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            if (!is_missing(x(r, j))) continue;
            double sum = 0.0;
            for (std::size_t n = 0; n < k; ++n) sum += reference_(distances[n].second, j);
            out(r, j) = sum / static_cast<double>(k);
        }
    }

    ImputeMethod method_;
    double constant_;
    std::size_t k_;
    std::vector<double> fill_;
    Matrix reference_;
    bool fitted_ = false;
};

// ---------------------------------------------------------------------------
// Scaling

enum class ScaleMethod { none, standardize, minmax, robust };

inline std::string to_string(ScaleMethod m) {
    switch (m) {
        case ScaleMethod::none: return "none";
        case ScaleMethod::standardize: return "standardize";
        case ScaleMethod::minmax: return "minmax";
        case ScaleMethod::robust: return "robust";
    }
    return "none";
}

inline ScaleMethod parse_scale_method(const std::string& s) {
    if (s == "none") return ScaleMethod::none;
    if (s == "standardize") return ScaleMethod::standardize;
    if (s == "minmax") return ScaleMethod::minmax;
    if (s == "robust") return ScaleMethod::robust;
    fail(ErrorKind::config, "unknown scaling method '" + s + "'");
}

/// x -> (x - center) / scale per column. Degenerate spreads (below 1e-12) use scale 1.
class Scaler {
public:
    explicit Scaler(ScaleMethod method = ScaleMethod::none) : method_(method) {}

    ScaleMethod method() const { return method_; }

    Matrix fit_transform(const Matrix& x) {
        const auto w = static_cast<std::size_t>(x.cols());
        center_.assign(w, 0.0);
        scale_.assign(w, 1.0);
        for (std::size_t j = 0; j < w && method_ != ScaleMethod::none && x.rows() > 0; ++j) {
            const auto col = x.col(static_cast<Eigen::Index>(j));
            double spread = 1.0;
            switch (method_) {
                case ScaleMethod::standardize: {
                    const double mean = col.mean();
                    double ss = 0.0;
                    for (Eigen::Index r = 0; r < col.size(); ++r) ss += (col[r] - mean) * (col[r] - mean);
                    center_[j] = mean;
                    spread = std::sqrt(ss / static_cast<double>(col.size()));
                    break;
                }
                case ScaleMethod::minmax:
                    center_[j] = col.minCoeff();
                    spread = col.maxCoeff() - col.minCoeff();
                    break;
                case ScaleMethod::robust: {
                    std::vector<double> values(col.begin(), col.end());
                    center_[j] = quantile(values, 0.5);
                    spread = quantile(values, 0.75) - quantile(values, 0.25);
                    break;
                }
                case ScaleMethod::none:
                    break;
            }
            scale_[j] = spread < 1e-12 ? 1.0 : spread;
        }
        fitted_ = true;
        return transform(x);
    }

    Matrix transform(const Matrix& x) const {
        require(fitted_, ErrorKind::contract, "scaler used before fit");
        require(static_cast<std::size_t>(x.cols()) == center_.size(), ErrorKind::contract, "scaler column mismatch");
        if (method_ == ScaleMethod::none) return x;
        Matrix out(x.rows(), x.cols());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
                out(r, j) = (x(r, j) - center_[static_cast<std::size_t>(j)]) / scale_[static_cast<std::size_t>(j)];
            }
        }
        return out;
    }

    const std::vector<double>& centers() const { return center_; }
    const std::vector<double>& scales() const { return scale_; }

    json to_json() const {
        return {{"method", autotab::to_string(method_)}, {"center", center_}, {"scale", scale_}};
    }
    static Scaler from_json(const json& j) {
        Scaler s(parse_scale_method(j.at("method").get<std::string>()));
        j.at("center").get_to(s.center_);
        j.at("scale").get_to(s.scale_);
        s.fitted_ = true;
        return s;
    }

private:
    ScaleMethod method_;
    std::vector<double> center_;
    std::vector<double> scale_;
    bool fitted_ = false;
};

// ---------------------------------------------------------------------------
// Feature selection

enum class SelectMethod { none, variance, topk_corr };

inline std::string to_string(SelectMethod m) {
    switch (m) {
        case SelectMethod::none: return "none";
        case SelectMethod::variance: return "variance";
        case SelectMethod::topk_corr: return "topk_corr";
    }
    return "none";
}

inline SelectMethod parse_select_method(const std::string& s) {
    if (s == "none") return SelectMethod::none;
    if (s == "variance") return SelectMethod::variance;
    if (s == "topk_corr") return SelectMethod::topk_corr;
    fail(ErrorKind::config, "unknown feature selection method '" + s + "'");
}

inline double sample_variance(const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (v.size() < 2) return 0.0;
    const double mean = v.mean();
    double ss = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) ss += (v[i] - mean) * (v[i] - mean);
    return ss / static_cast<double>(v.size() - 1);
}

inline double pearson(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
    const double ma = a.mean();
    const double mb = b.mean();
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

/// Filter-style selection. At least one column always survives: if the rule keeps
/// nothing, the highest-variance column (lowest index on ties) is kept.
class Selector {
public:
    explicit Selector(SelectMethod method = SelectMethod::none, double threshold = 0.0, std::size_t k = 1)
        : method_(method), threshold_(threshold), k_(std::max<std::size_t>(k, 1)) {}

    SelectMethod method() const { return method_; }

    Matrix fit_transform(const Matrix& x, const Vector& y) {
        const auto w = static_cast<std::size_t>(x.cols());
        std::vector<bool> keep(w, method_ == SelectMethod::none);
        std::vector<double> variances(w);
        for (std::size_t j = 0; j < w; ++j) {
            Eigen::VectorXd col = x.col(static_cast<Eigen::Index>(j));
            variances[j] = sample_variance(col);
        }
        if (method_ == SelectMethod::variance) {
            for (std::size_t j = 0; j < w; ++j) keep[j] = variances[j] > threshold_;
        } else if (method_ == SelectMethod::topk_corr) {
            std::vector<std::pair<double, std::size_t>> scored;
            for (std::size_t j = 0; j < w; ++j) {
                Eigen::VectorXd col = x.col(static_cast<Eigen::Index>(j));
                scored.emplace_back(std::abs(pearson(col, y)), j);
            }
            std::stable_sort(scored.begin(), scored.end(),
                             [](const auto& a, const auto& b) { return a.first > b.first; });
            for (std::size_t i = 0; i < std::min(k_, w); ++i) keep[scored[i].second] = true;
        }
        kept_.clear();
        for (std::size_t j = 0; j < w; ++j) {
            if (keep[j]) kept_.push_back(j);
        }
        if (kept_.empty() && w > 0) {
            std::size_t best = 0;
            for (std::size_t j = 1; j < w; ++j) {
                if (variances[j] > variances[best]) best = j;
            }
            kept_.push_back(best);
        }
        input_width_ = w;
        fitted_ = true;
        return transform(x);
    }

    Matrix transform(const Matrix& x) const {
        require(fitted_, ErrorKind::contract, "selector used before fit");
        require(static_cast<std::size_t>(x.cols()) == input_width_, ErrorKind::contract, "selector column mismatch");
        Matrix out(x.rows(), static_cast<Eigen::Index>(kept_.size()));
        for (std::size_t i = 0; i < kept_.size(); ++i) {
            out.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(kept_[i]));
        }
        return out;
    }

    const std::vector<std::size_t>& kept() const { return kept_; }

    std::vector<bool> mask() const {
        std::vector<bool> m(input_width_, false);
        for (auto j : kept_) m[j] = true;
        return m;
    }

    json to_json() const {
        return {{"method", autotab::to_string(method_)}, {"threshold", threshold_}, {"k", k_},
                {"input_width", input_width_}, {"kept", kept_}};
    }
    static Selector from_json(const json& j) {
        Selector s(parse_select_method(j.at("method").get<std::string>()), j.at("threshold").get<double>(),
                   j.at("k").get<std::size_t>());
        j.at("input_width").get_to(s.input_width_);
        j.at("kept").get_to(s.kept_);
        s.fitted_ = true;
        return s;
    }

private:
    SelectMethod method_;
    double threshold_;
    std::size_t k_;
    std::size_t input_width_ = 0;
    std::vector<std::size_t> kept_;
    bool fitted_ = false;
};

}  // namespace autotab
