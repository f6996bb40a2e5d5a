#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "autotab.hpp"

namespace testing_support {

inline autotab::Dataset numeric_dataset(const autotab::Matrix& x, const autotab::Vector& y,
                                        autotab::TaskKind task = autotab::TaskKind::regression) {
    autotab::Dataset data;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        autotab::Column column;
        column.schema.name = "x" + std::to_string(j);
        column.numbers.assign(x.col(j).data(), x.col(j).data() + x.rows());
        column.refresh_schema();
        data.columns.push_back(std::move(column));
    }
    data.y = y;
    data.response.name = "y";
    data.task = task;
    if (autotab::is_classification(task)) {
        const auto classes = static_cast<std::size_t>(y.maxCoeff()) + 1;
        for (std::size_t c = 0; c < std::max<std::size_t>(classes, 2); ++c) data.class_labels.push_back(std::to_string(c));
    }
    return data;
}

/// Fresh empty directory under the system temp path.
inline std::filesystem::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("autotab_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Single-method-per-stage space for regression tests.
inline autotab::SearchSpace fixed_space(autotab::TaskKind task, const std::string& model,
                                        const std::string& balance = "none") {
    auto space = autotab::default_space(task, true);
    space.allow(autotab::Stage::encode, {"ordinal"});
    space.allow(autotab::Stage::impute, {"mean"});
    space.allow(autotab::Stage::balance, {balance});
    space.allow(autotab::Stage::scale, {"none"});
    space.allow(autotab::Stage::select, {"none"});
    space.allow(autotab::Stage::model, {model});
    return space;
}

}  // namespace testing_support

#define EXPECT_ERROR_KIND(statement, expected_kind)                              \
    do {                                                                         \
        try {                                                                    \
            statement;                                                           \
            ADD_FAILURE() << "expected " << autotab::to_string(expected_kind)    \
                          << " error";                                           \
        } catch (const autotab::Error& e) {                                      \
            EXPECT_EQ(e.kind(), expected_kind) << e.what();                      \
        }                                                                        \
    } while (false)

namespace testing_support {

/// Collects warnings for the lifetime of the object.
class WarningCapture {
public:
    WarningCapture() {
        autotab::set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
    }
    ~WarningCapture() {
        autotab::set_warning_sink([](std::string_view m) {
            std::fprintf(stderr, "warning: %.*s\n", static_cast<int>(m.size()), m.data());
        });
    }
    WarningCapture(const WarningCapture&) = delete;
    WarningCapture& operator=(const WarningCapture&) = delete;

    bool contains(const std::string& fragment) const {
        for (const auto& m : messages) {
            if (m.find(fragment) != std::string::npos) return true;
        }
        return false;
    }

    std::vector<std::string> messages;
};

}  // namespace testing_support
