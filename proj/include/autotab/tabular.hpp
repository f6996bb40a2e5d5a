#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "autotab/csv.hpp"
#include "autotab/error.hpp"
#include "autotab/linalg.hpp"
#include "autotab/random.hpp"

namespace autotab {

using json = nlohmann::json;

enum class ColumnKind { numeric, categorical };
enum class TaskKind { regression, binary_classification, multiclass_classification };

inline bool is_classification(TaskKind task) { return task != TaskKind::regression; }

inline std::string to_string(ColumnKind kind) { return kind == ColumnKind::numeric ? "numeric" : "categorical"; }

inline std::string to_string(TaskKind task) {
    switch (task) {
        case TaskKind::regression: return "regression";
        case TaskKind::binary_classification: return "binary_classification";
        case TaskKind::multiclass_classification: return "multiclass_classification";
    }
    return "regression";
}

inline ColumnKind parse_column_kind(const std::string& text) {
    if (text == "numeric") return ColumnKind::numeric;
    if (text == "categorical") return ColumnKind::categorical;
    fail(ErrorKind::config, "unknown column kind '" + text + "'");
}

inline TaskKind parse_task(const std::string& text) {
    if (text == "regression") return TaskKind::regression;
    if (text == "binary_classification" || text == "binary") return TaskKind::binary_classification;
    if (text == "multiclass_classification" || text == "multiclass") return TaskKind::multiclass_classification;
    fail(ErrorKind::config, "unknown task '" + text + "'");
}

struct ColumnSchema {
    std::string name;
    ColumnKind kind = ColumnKind::numeric;
    std::size_t missing_count = 0;
    std::vector<std::string> categories;  // first-appearance order; categorical only

    bool operator==(const ColumnSchema&) const = default;
};

/// One feature column. Numeric cells live in `numbers` with NaN marking a missing
/// cell; categorical cells live in `labels` with nullopt marking a missing cell.
struct Column {
    ColumnSchema schema;
    std::vector<double> numbers;
    std::vector<std::optional<std::string>> labels;

    std::size_t size() const {
        return schema.kind == ColumnKind::numeric ? numbers.size() : labels.size();
    }
    bool missing(std::size_t row) const {
        return schema.kind == ColumnKind::numeric ? is_missing(numbers[row]) : !labels[row].has_value();
    }

    Column take(std::span<const std::size_t> rows) const {
        Column out;
        out.schema = schema;
        out.schema.missing_count = 0;
        out.schema.categories.clear();
        if (schema.kind == ColumnKind::numeric) {
            out.numbers.reserve(rows.size());
            for (auto r : rows) out.numbers.push_back(numbers[r]);
        } else {
            out.labels.reserve(rows.size());
            for (auto r : rows) out.labels.push_back(labels[r]);
        }
        out.refresh_schema();
        return out;
    }

    void refresh_schema() {
        schema.missing_count = 0;
        schema.categories.clear();
        if (schema.kind == ColumnKind::numeric) {
            for (double v : numbers) schema.missing_count += is_missing(v) ? 1 : 0;
            return;
        }
        std::set<std::string_view> seen;
        for (const auto& label : labels) {
            if (!label) {
                ++schema.missing_count;
            } else if (seen.insert(*label).second) {
                schema.categories.push_back(*label);
            }
        }
    }
};

/// Immutable-after-load feature table plus response. Classification responses are
/// stored as codes 0..O-1; `class_labels[code]` recovers the original label.
struct Dataset {
    std::vector<Column> columns;
    Vector y;
    ColumnSchema response;
    TaskKind task = TaskKind::regression;
    std::vector<std::string> class_labels;

    std::size_t rows() const {
        if (!columns.empty()) return columns.front().size();
        return static_cast<std::size_t>(y.size());
    }
    std::size_t width() const { return columns.size(); }
    bool has_response() const { return y.size() > 0 || rows() == 0; }
    std::size_t num_classes() const { return class_labels.size(); }

    std::optional<std::size_t> column_index(std::string_view name) const {
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (columns[i].schema.name == name) return i;
        }
        return std::nullopt;
    }

    std::vector<std::string> feature_names() const {
        std::vector<std::string> names;
        for (const auto& c : columns) names.push_back(c.schema.name);
        return names;
    }

    Dataset take(std::span<const std::size_t> rows) const {
        Dataset out;
        out.response = response;
        out.task = task;
        out.class_labels = class_labels;
        out.columns.reserve(columns.size());
        for (const auto& c : columns) out.columns.push_back(c.take(rows));
        if (y.size() > 0) out.y = take_rows(y, rows);
        return out;
    }

    Dataset select_columns(std::span<const std::size_t> indices) const {
        Dataset out;
        out.response = response;
        out.task = task;
        out.class_labels = class_labels;
        out.y = y;
        for (auto i : indices) {
            require(i < columns.size(), ErrorKind::contract, "column index out of range");
            out.columns.push_back(columns[i]);
        }
        return out;
    }

    Dataset with_response(Vector values) const {
        require(static_cast<std::size_t>(values.size()) == rows(), ErrorKind::contract,
                "response length does not match row count");
        Dataset out = *this;
        out.y = std::move(values);
        return out;
    }

    void validate() const {
        const std::size_t z = rows();
        for (const auto& c : columns) {
            require(c.size() == z, ErrorKind::data, "column '" + c.schema.name + "' has wrong length");
            require((c.schema.kind == ColumnKind::categorical) == !c.schema.categories.empty() ||
                        (c.schema.kind == ColumnKind::categorical && c.schema.missing_count == z),
                    ErrorKind::data, "column '" + c.schema.name + "' schema is inconsistent");
        }
        if (y.size() > 0) {
            require(static_cast<std::size_t>(y.size()) == z, ErrorKind::data, "response length mismatch");
            if (is_classification(task)) {
                require(class_labels.size() >= 2, ErrorKind::data, "classification needs at least 2 classes");
                for (Eigen::Index i = 0; i < y.size(); ++i) {
                    const double v = y[i];
                    require(v >= 0 && v < static_cast<double>(class_labels.size()) && v == std::floor(v),
                            ErrorKind::data, "class code out of range");
                }
            }
        }
    }
};

/// Default missing-value tokens.
inline std::set<std::string> default_missing_tokens() { return {"", "NA", "NaN", "null"}; }

inline TaskKind infer_task(std::span<const double> y) {
    require(!y.empty(), ErrorKind::data, "response is empty");
    std::set<double> levels;
    bool integer_valued = true;
    for (double v : y) {
        levels.insert(v);
        integer_valued = integer_valued && v == std::floor(v);
        if (levels.size() > 21) break;
    }
    require(levels.size() >= 2, ErrorKind::data, "response is constant");
    if (integer_valued && levels.size() == 2) return TaskKind::binary_classification;
    if (integer_valued && levels.size() <= 20) return TaskKind::multiclass_classification;
    return TaskKind::regression;
}

struct LoadOptions {
    std::set<std::string> missing_tokens = default_missing_tokens();
    std::map<std::string, ColumnKind> forced_kinds;
    std::optional<TaskKind> task;
    /// Fit-time label map; when set, classification labels are coded through it.
    std::vector<std::string> class_labels;
};

namespace detail {

inline void encode_response(Dataset& data, const std::vector<std::string>& cells, const LoadOptions& options) {
    const std::size_t z = cells.size();
    std::vector<double> numbers(z);
    bool numeric = true;
    for (std::size_t i = 0; i < z; ++i) {
        require(!options.missing_tokens.contains(cells[i]), ErrorKind::data,
                "response '" + data.response.name + "' is missing on row " + std::to_string(i + 1));
        const auto parsed = csv::parse_number(cells[i]);
        if (!parsed) {
            numeric = false;
        } else {
            numbers[i] = *parsed;
        }
    }
    data.response.kind = numeric ? ColumnKind::numeric : ColumnKind::categorical;
    data.y.resize(static_cast<Eigen::Index>(z));

    TaskKind task;
    if (options.task) {
        task = *options.task;
    } else if (numeric) {
        task = infer_task(numbers);
    } else {
        std::set<std::string> levels(cells.begin(), cells.end());
        require(levels.size() >= 2, ErrorKind::data, "response is constant");
        task = levels.size() == 2 ? TaskKind::binary_classification : TaskKind::multiclass_classification;
    }
    data.task = task;

    if (task == TaskKind::regression) {
        require(numeric, ErrorKind::data, "regression response '" + data.response.name + "' is not numeric");
        for (std::size_t i = 0; i < z; ++i) data.y[static_cast<Eigen::Index>(i)] = numbers[i];
        return;
    }

    // Label text: canonical number formatting for numeric responses so "1" and "1.0" agree.
    std::vector<std::string> labels(z);
    for (std::size_t i = 0; i < z; ++i) labels[i] = numeric ? csv::format_number(numbers[i]) : cells[i];

    if (options.class_labels.empty()) {
        if (numeric) {
            std::set<double> levels(numbers.begin(), numbers.end());
            for (double level : levels) data.class_labels.push_back(csv::format_number(level));
        } else {
            std::set<std::string> levels(labels.begin(), labels.end());
            data.class_labels.assign(levels.begin(), levels.end());
        }
        require(data.class_labels.size() >= 2, ErrorKind::data, "response is constant");
    } else {
        data.class_labels = options.class_labels;
    }
    std::unordered_map<std::string, double> code;
    for (std::size_t c = 0; c < data.class_labels.size(); ++c) code[data.class_labels[c]] = static_cast<double>(c);
    for (std::size_t i = 0; i < z; ++i) {
        const auto it = code.find(labels[i]);
        require(it != code.end(), ErrorKind::data, "unknown class label '" + labels[i] + "'");
        data.y[static_cast<Eigen::Index>(i)] = it->second;
    }
}

}  // namespace detail

/// Builds a dataset from parsed CSV records (first record is the header).
/// An empty `response_column` loads features only.
inline Dataset from_records(const std::vector<csv::Record>& records, const std::string& response_column,
                            const LoadOptions& options = {}) {
    require(!records.empty(), ErrorKind::schema, "missing header row");
    const auto& header = records.front();
    require(!header.empty() && !(header.size() == 1 && header[0].empty()), ErrorKind::schema, "missing header row");
    {
        std::set<std::string> unique(header.begin(), header.end());
        require(unique.size() == header.size(), ErrorKind::schema, "duplicate column names in header");
    }
    const std::size_t z = records.size() - 1;
    for (std::size_t r = 1; r < records.size(); ++r) {
        require(records[r].size() == header.size(), ErrorKind::schema,
                "row " + std::to_string(r) + " has " + std::to_string(records[r].size()) + " fields, expected " +
                    std::to_string(header.size()));
    }

    std::optional<std::size_t> response_index;
    if (!response_column.empty()) {
        const auto it = std::find(header.begin(), header.end(), response_column);
        require(it != header.end(), ErrorKind::config, "response column '" + response_column + "' not found");
        response_index = static_cast<std::size_t>(it - header.begin());
    }

    Dataset data;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (response_index && j == *response_index) continue;
        Column column;
        column.schema.name = header[j];

        std::vector<std::optional<double>> parsed(z);
        bool all_numeric = true;
        for (std::size_t r = 0; r < z; ++r) {
            const std::string& cell = records[r + 1][j];
            if (options.missing_tokens.contains(cell)) continue;
            parsed[r] = csv::parse_number(cell);
            all_numeric = all_numeric && parsed[r].has_value();
        }
        ColumnKind kind = all_numeric ? ColumnKind::numeric : ColumnKind::categorical;
        if (const auto forced = options.forced_kinds.find(header[j]); forced != options.forced_kinds.end()) {
            kind = forced->second;
            require(kind == ColumnKind::categorical || all_numeric, ErrorKind::data,
                    "column '" + header[j] + "' forced numeric but holds non-numeric cells");
        }
        column.schema.kind = kind;
        if (kind == ColumnKind::numeric) {
            column.numbers.resize(z, missing_value);
            for (std::size_t r = 0; r < z; ++r) {
                if (parsed[r]) column.numbers[r] = *parsed[r];
            }
        } else {
            column.labels.resize(z);
            for (std::size_t r = 0; r < z; ++r) {
                const std::string& cell = records[r + 1][j];
                if (!options.missing_tokens.contains(cell)) column.labels[r] = cell;
            }
        }
        column.refresh_schema();
        data.columns.push_back(std::move(column));
    }

    if (response_index) {
        data.response.name = response_column;
        std::vector<std::string> cells(z);
        for (std::size_t r = 0; r < z; ++r) cells[r] = records[r + 1][*response_index];
        detail::encode_response(data, cells, options);
    }
    data.validate();
    return data;
}

inline Dataset load_csv(const std::string& path, const std::string& response_column, const LoadOptions& options = {}) {
    return from_records(csv::read_file(path), response_column, options);
}

/// Writes features then response. Missing cells use "" when it is a missing
/// token, otherwise the first token in `missing_tokens`.
inline void write_csv(const Dataset& data, const std::string& path,
                      const std::set<std::string>& missing_tokens = default_missing_tokens()) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write '" + path + "'");
    const std::string missing_token =
        missing_tokens.contains("") || missing_tokens.empty() ? std::string() : *missing_tokens.begin();
    csv::Record header = data.feature_names();
    const bool with_response = data.y.size() > 0;
    if (with_response) header.push_back(data.response.name);
    csv::write_record(out, header);
    for (std::size_t r = 0; r < data.rows(); ++r) {
        csv::Record record;
        record.reserve(header.size());
        for (const auto& column : data.columns) {
            if (column.missing(r)) {
                record.push_back(missing_token);
            } else if (column.schema.kind == ColumnKind::numeric) {
                record.push_back(csv::format_number(column.numbers[r]));
            } else {
                record.push_back(*column.labels[r]);
            }
        }
        if (with_response) {
            const double v = data.y[static_cast<Eigen::Index>(r)];
            record.push_back(is_classification(data.task) ? data.class_labels.at(static_cast<std::size_t>(v))
                                                           : csv::format_number(v));
        }
        csv::write_record(out, record);
    }
    if (!out) fail(ErrorKind::io, "failed writing '" + path + "'");
}

struct Split {
    std::vector<std::size_t> train_indices;
    std::vector<std::size_t> valid_indices;
    std::vector<std::size_t> test_indices;
    std::uint64_t seed = 0;

    bool operator==(const Split&) const = default;
};

inline void to_json(json& j, const Split& s) {
    j = json{{"train", s.train_indices}, {"valid", s.valid_indices}, {"test", s.test_indices}, {"seed", s.seed}};
}
inline void from_json(const json& j, Split& s) {
    j.at("train").get_to(s.train_indices);
    j.at("valid").get_to(s.valid_indices);
    j.at("test").get_to(s.test_indices);
    j.at("seed").get_to(s.seed);
}

/// Shuffles 0..rows-1 with `seed`; the first round(rows*test_fraction) go to test,
/// the next round(rows*valid_fraction) to valid, the rest to train. Each list is sorted.
inline Split split(std::size_t rows, double test_fraction, double valid_fraction, std::uint64_t seed) {
    require(test_fraction >= 0.0 && test_fraction < 1.0, ErrorKind::config, "test_fraction must lie in [0,1)");
    require(valid_fraction >= 0.0 && valid_fraction < 1.0, ErrorKind::config, "valid_fraction must lie in [0,1)");
    require(test_fraction + valid_fraction < 1.0, ErrorKind::config, "test_fraction + valid_fraction must be < 1");
    const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(rows) * test_fraction));
    const auto n_valid = static_cast<std::size_t>(std::llround(static_cast<double>(rows) * valid_fraction));
    require(n_test + n_valid < rows, ErrorKind::config, "split leaves no training rows");

    const auto order = permutation(rows, seed);
    Split out;
    out.seed = seed;
    out.test_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.valid_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test),
                             order.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid));
    out.train_indices.assign(order.begin() + static_cast<std::ptrdiff_t>(n_test + n_valid), order.end());
    std::sort(out.test_indices.begin(), out.test_indices.end());
    std::sort(out.valid_indices.begin(), out.valid_indices.end());
    std::sort(out.train_indices.begin(), out.train_indices.end());
    return out;
}

inline Split split(const Dataset& data, double test_fraction, double valid_fraction, std::uint64_t seed) {
    return split(data.rows(), test_fraction, valid_fraction, seed);
}

struct FoldPlan {
    std::size_t k = 0;
    std::vector<std::size_t> assignments;
    std::uint64_t seed = 0;

    std::vector<std::size_t> fold_rows(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignments.size(); ++i) {
            if (assignments[i] == fold) out.push_back(i);
        }
        return out;
    }
    std::vector<std::size_t> complement_rows(std::size_t fold) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < assignments.size(); ++i) {
            if (assignments[i] != fold) out.push_back(i);
        }
        return out;
    }

    bool operator==(const FoldPlan&) const = default;
};

inline void to_json(json& j, const FoldPlan& f) {
    j = json{{"k", f.k}, {"assignments", f.assignments}, {"seed", f.seed}};
}
inline void from_json(const json& j, FoldPlan& f) {
    j.at("k").get_to(f.k);
    j.at("assignments").get_to(f.assignments);
    j.at("seed").get_to(f.seed);
}

/// Round-robin fold ids over a seeded permutation, so fold sizes differ by at most one.
inline FoldPlan make_folds(std::size_t rows, std::size_t k, std::uint64_t seed) {
    require(k >= 2, ErrorKind::config, "fold count must be at least 2");
    require(k <= rows, ErrorKind::config, "more folds than rows");
    const auto order = permutation(rows, seed);
    FoldPlan plan{k, std::vector<std::size_t>(rows), seed};
    for (std::size_t i = 0; i < rows; ++i) plan.assignments[order[i]] = i % k;
    return plan;
}

/// Replaces each targeted cell x with ln(x + 1).
inline Dataset log1p_transform(const Dataset& data, const std::vector<std::string>& columns, bool include_response) {
    Dataset out = data;
    for (const auto& name : columns) {
        const auto index = out.column_index(name);
        require(index.has_value(), ErrorKind::config, "log1p column '" + name + "' not found");
        Column& column = out.columns[*index];
        require(column.schema.kind == ColumnKind::numeric, ErrorKind::domain,
                "log1p column '" + name + "' is not numeric");
        for (std::size_t r = 0; r < column.numbers.size(); ++r) {
            double& v = column.numbers[r];
            if (is_missing(v)) continue;
            require(v > -1.0, ErrorKind::domain,
                    "log1p undefined for value " + csv::format_number(v) + " at row " + std::to_string(r + 1) +
                        ", column '" + name + "'");
            v = std::log1p(v);
        }
    }
    if (include_response) {
        require(data.task == TaskKind::regression, ErrorKind::config, "log1p of a class response is undefined");
        for (Eigen::Index r = 0; r < out.y.size(); ++r) {
            require(out.y[r] > -1.0, ErrorKind::domain,
                    "log1p undefined for value " + csv::format_number(out.y[r]) + " at row " + std::to_string(r + 1) +
                        ", column '" + data.response.name + "'");
            out.y[r] = std::log1p(out.y[r]);
        }
    }
    return out;
}

inline void to_json(json& j, const ColumnSchema& s) {
    j = json{{"name", s.name}, {"kind", to_string(s.kind)}, {"missing_count", s.missing_count},
             {"categories", s.categories}};
}
inline void from_json(const json& j, ColumnSchema& s) {
    j.at("name").get_to(s.name);
    s.kind = parse_column_kind(j.at("kind").get<std::string>());
    j.at("missing_count").get_to(s.missing_count);
    j.at("categories").get_to(s.categories);
}

}  // namespace autotab
