#pragma once

#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>

namespace autotab {

enum class ErrorKind {
    config,
    schema,
    data,
    domain,
    task,
    imputation,
    balancing,
    fit,
    contract,
    registration,
    io,
    format,
    invalid_prediction,
    undefined_metric,
    optimization,
    ensemble,
    unsupported,
    timeout,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config: return "config";
        case ErrorKind::schema: return "schema";
        case ErrorKind::data: return "data";
        case ErrorKind::domain: return "domain";
        case ErrorKind::task: return "task";
        case ErrorKind::imputation: return "imputation";
        case ErrorKind::balancing: return "balancing";
        case ErrorKind::fit: return "fit";
        case ErrorKind::contract: return "contract";
        case ErrorKind::registration: return "registration";
        case ErrorKind::io: return "io";
        case ErrorKind::format: return "format";
        case ErrorKind::invalid_prediction: return "invalid_prediction";
        case ErrorKind::undefined_metric: return "undefined_metric";
        case ErrorKind::optimization: return "optimization";
        case ErrorKind::ensemble: return "ensemble";
        case ErrorKind::unsupported: return "unsupported";
        case ErrorKind::timeout: return "timeout";
    }
    return "unknown";
}

/// Every failure raised by the library carries a kind so callers (the engine's
/// trial bookkeeping, the CLI's exit codes) can classify it without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised when a search finishes without a single valid trial.
class OptimizationError : public Error {
public:
    OptimizationError(const std::string& message, std::map<std::string, std::size_t> histogram)
        : Error(ErrorKind::optimization, message + describe(histogram)), histogram_(std::move(histogram)) {}

    const std::map<std::string, std::size_t>& failure_histogram() const noexcept { return histogram_; }

private:
    static std::string describe(const std::map<std::string, std::size_t>& histogram) {
        std::string out = " (failures:";
        for (const auto& [reason, count] : histogram) {
            out += " " + reason + "=" + std::to_string(count);
        }
        return out + ")";
    }

    std::map<std::string, std::size_t> histogram_;
};

/// CLI exit status: 2 config, 3 data, 4 optimization failure, 1 anything else.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::config:
        case ErrorKind::registration:
        case ErrorKind::unsupported:
            return 2;
        case ErrorKind::schema:
        case ErrorKind::data:
        case ErrorKind::domain:
        case ErrorKind::task:
        case ErrorKind::format:
            return 3;
        case ErrorKind::optimization:
        case ErrorKind::ensemble:
            return 4;
        default:
            return 1;
    }
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        throw Error(kind, message);
    }
}

// Warnings go through a replaceable sink; tests silence or capture it.
using WarningSink = std::function<void(std::string_view)>;

namespace detail {
inline WarningSink& warning_sink() {
    static WarningSink sink = [](std::string_view message) {
        std::fprintf(stderr, "warning: %.*s\n", static_cast<int>(message.size()), message.data());
    };
    return sink;
}
inline std::mutex& warning_mutex() {
    static std::mutex mutex;
    return mutex;
}
}  // namespace detail

inline void set_warning_sink(WarningSink sink) {
    std::lock_guard lock(detail::warning_mutex());
    detail::warning_sink() = std::move(sink);
}

inline void warn(std::string_view message) {
    std::lock_guard lock(detail::warning_mutex());
    if (detail::warning_sink()) {
        detail::warning_sink()(message);
    }
}

}  // namespace autotab
