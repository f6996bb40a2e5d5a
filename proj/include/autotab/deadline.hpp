#pragma once

#include <chrono>
#include <optional>

#include "autotab/error.hpp"

namespace autotab {

using Clock = std::chrono::steady_clock;

namespace detail {
inline std::optional<Clock::time_point>& thread_deadline() {
    thread_local std::optional<Clock::time_point> deadline;
    return deadline;
}
}  // namespace detail

/// Installs a cooperative per-trial deadline on the current thread. Long-running
/// loops (tree growth, IRLS, kNN scans) poll it through check_deadline().
class ScopedDeadline {
public:
    explicit ScopedDeadline(std::optional<Clock::time_point> deadline)
        : previous_(detail::thread_deadline()) {
        detail::thread_deadline() = deadline;
    }
    ~ScopedDeadline() { detail::thread_deadline() = previous_; }

    ScopedDeadline(const ScopedDeadline&) = delete;
    ScopedDeadline& operator=(const ScopedDeadline&) = delete;

private:
    std::optional<Clock::time_point> previous_;
};

inline void check_deadline() {
    const auto& deadline = detail::thread_deadline();
    if (deadline && Clock::now() > *deadline) {
        throw Error(ErrorKind::timeout, "trial exceeded its time limit");
    }
}

inline double seconds_between(Clock::time_point start, Clock::time_point end) {
    return std::chrono::duration<double>(end - start).count();
}

}  // namespace autotab
