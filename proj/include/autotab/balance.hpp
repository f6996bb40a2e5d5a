#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "autotab/deadline.hpp"
#include "autotab/error.hpp"
#include "autotab/linalg.hpp"
#include "autotab/random.hpp"

namespace autotab {

/// Majority class against the pooled remainder (one-vs-rest for multiclass).
struct ImbalanceProfile {
    std::size_t majority_class = 0;
    std::size_t majority_count = 0;
    std::size_t minority_count = 0;
    double ratio = 1.0;  // +inf when the minority pool is empty
};

inline std::vector<std::size_t> class_counts(const Vector& y) {
    std::vector<std::size_t> counts;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const auto c = static_cast<std::size_t>(y[i]);
        if (c >= counts.size()) counts.resize(c + 1, 0);
        ++counts[c];
    }
    return counts;
}

inline ImbalanceProfile profile(const Vector& y) {
    const auto counts = class_counts(y);
    ImbalanceProfile p;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        if (counts[c] > p.majority_count) {
            p.majority_count = counts[c];
            p.majority_class = c;
        }
    }
    p.minority_count = static_cast<std::size_t>(y.size()) - p.majority_count;
    p.ratio = p.minority_count == 0 ? std::numeric_limits<double>::infinity()
                                    : static_cast<double>(p.majority_count) / static_cast<double>(p.minority_count);
    return p;
}

/// Output of a sampler. `origin[i]` is the input row that row i copies, or
/// `synthetic` for an interpolated row.
struct Resampled {
    static constexpr std::size_t synthetic = std::numeric_limits<std::size_t>::max();

    Matrix x;
    Vector y;
    std::vector<std::size_t> origin;
};

namespace detail {

inline Resampled identity_sample(const Matrix& x, const Vector& y) {
    Resampled out{x, y, std::vector<std::size_t>(static_cast<std::size_t>(y.size()))};
    for (std::size_t i = 0; i < out.origin.size(); ++i) out.origin[i] = i;
    return out;
}

inline Resampled keep_rows(const Matrix& x, const Vector& y, std::vector<std::size_t> rows) {
    std::sort(rows.begin(), rows.end());
    return {take_rows(x, rows), take_rows(y, rows), rows};
}

inline Resampled append_rows(const Matrix& x, const Vector& y, const Matrix& extra_x, const Vector& extra_y,
                             const std::vector<std::size_t>& extra_origin) {
    Resampled out;
    out.x.resize(x.rows() + extra_x.rows(), x.cols());
    out.x.topRows(x.rows()) = x;
    out.x.bottomRows(extra_x.rows()) = extra_x;
    out.y.resize(y.size() + extra_y.size());
    out.y.head(y.size()) = y;
    out.y.tail(extra_y.size()) = extra_y;
    out.origin.resize(static_cast<std::size_t>(y.size()));
    for (std::size_t i = 0; i < out.origin.size(); ++i) out.origin[i] = i;
    out.origin.insert(out.origin.end(), extra_origin.begin(), extra_origin.end());
    return out;
}

inline std::vector<std::size_t> rows_where(const Vector& y, bool majority, std::size_t majority_class) {
    std::vector<std::size_t> rows;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if ((static_cast<std::size_t>(y[i]) == majority_class) == majority) rows.push_back(static_cast<std::size_t>(i));
    }
    return rows;
}

/// The k nearest of `candidates` to row `query` (itself excluded), nearest first,
/// distance ties broken by lower row index.
inline std::vector<std::size_t> nearest(const Matrix& x, std::size_t query, const std::vector<std::size_t>& candidates,
                                        std::size_t k) {
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(candidates.size());
    for (auto c : candidates) {
        if (c == query) continue;
        scored.emplace_back(squared_distance(x, static_cast<Eigen::Index>(query), x, static_cast<Eigen::Index>(c)), c);
    }
    k = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = scored[i].second;
    return out;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    return rows;
}

}  // namespace detail

/// Duplicates minority rows uniformly with replacement until ceil(majority/R) exist.
inline Resampled random_over(const Matrix& x, const Vector& y, double ratio, std::uint64_t seed) {
    require(ratio >= 1.0, ErrorKind::config, "balancing ratio must be >= 1");
    const auto p = profile(y);
    require(p.minority_count > 0, ErrorKind::balancing, "no minority rows to over-sample");
    if (p.ratio <= ratio) return detail::identity_sample(x, y);
    const auto target = static_cast<std::size_t>(std::ceil(static_cast<double>(p.majority_count) / ratio));
    const auto minority = detail::rows_where(y, false, p.majority_class);
    Rng rng(seed);
    const std::size_t extra = target - p.minority_count;
    std::vector<std::size_t> picks(extra);
    for (auto& pick : picks) pick = minority[rng.index(minority.size())];
    return detail::append_rows(x, y, take_rows(x, picks), take_rows(y, picks), picks);
}

/// Keeps floor(R * minority) majority rows, drawn uniformly without replacement.
inline Resampled random_under(const Matrix& x, const Vector& y, double ratio, std::uint64_t seed) {
    require(ratio >= 1.0, ErrorKind::config, "balancing ratio must be >= 1");
    const auto p = profile(y);
    require(ratio * static_cast<double>(p.minority_count) >= 1.0, ErrorKind::balancing,
            "under-sampling would leave no majority rows");
    if (p.ratio <= ratio) return detail::identity_sample(x, y);
    const auto keep = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(p.minority_count)));
    const auto majority = detail::rows_where(y, true, p.majority_class);
    Rng rng(seed);
    std::vector<std::size_t> rows = detail::rows_where(y, false, p.majority_class);
    for (auto i : rng.sample_without_replacement(majority.size(), keep)) rows.push_back(majority[i]);
    return detail::keep_rows(x, y, std::move(rows));
}

/// Synthetic minority rows x_i + u (x_nn - x_i), u ~ U[0,1), x_nn one of the k nearest
/// same-class minority rows, until ceil(majority/R) minority rows exist.
inline Resampled smote(const Matrix& x, const Vector& y, double ratio, std::size_t k, std::uint64_t seed) {
    require(ratio >= 1.0, ErrorKind::config, "balancing ratio must be >= 1");
    require(k >= 1, ErrorKind::config, "smote needs k >= 1");
    const auto p = profile(y);
    if (p.minority_count < 2) {
        warn("smote needs at least two minority rows; falling back to random over-sampling");
        return random_over(x, y, ratio, seed);
    }
    if (p.ratio <= ratio) return detail::identity_sample(x, y);

    const auto target = static_cast<std::size_t>(std::ceil(static_cast<double>(p.majority_count) / ratio));
    const auto minority = detail::rows_where(y, false, p.majority_class);

    std::vector<std::vector<std::size_t>> neighbors(minority.size());
    for (std::size_t i = 0; i < minority.size(); ++i) {
        check_deadline();
        std::vector<std::size_t> same_class;
        for (auto row : minority) {
            if (y[static_cast<Eigen::Index>(row)] == y[static_cast<Eigen::Index>(minority[i])]) same_class.push_back(row);
        }
        neighbors[i] = detail::nearest(x, minority[i], same_class, k);
    }

    Rng rng(seed);
    const std::size_t extra = target - p.minority_count;
    Matrix extra_x(static_cast<Eigen::Index>(extra), x.cols());
    Vector extra_y(static_cast<Eigen::Index>(extra));
    for (std::size_t s = 0; s < extra; ++s) {
        const std::size_t i = rng.index(minority.size());
        const auto base = static_cast<Eigen::Index>(minority[i]);
        const auto row = static_cast<Eigen::Index>(s);
        extra_y[row] = y[base];
        if (neighbors[i].empty()) {
            extra_x.row(row) = x.row(base);
            continue;
        }
        const auto other = static_cast<Eigen::Index>(neighbors[i][rng.index(neighbors[i].size())]);
        const double u = rng.uniform();
        extra_x.row(row) = x.row(base) + u * (x.row(other) - x.row(base));
    }
    return detail::append_rows(x, y, extra_x, extra_y, std::vector<std::size_t>(extra, Resampled::synthetic));
}

/// Removes the majority member of every Tomek link (mutual 1-NN pair of opposite
/// classes). One pass.
inline Resampled tomek(const Matrix& x, const Vector& y) {
    const auto p = profile(y);
    const auto n = static_cast<std::size_t>(y.size());
    const auto everyone = detail::all_rows(n);
    std::vector<std::size_t> nn(n, Resampled::synthetic);
    for (std::size_t i = 0; i < n; ++i) {
        check_deadline();
        const auto found = detail::nearest(x, i, everyone, 1);
        if (!found.empty()) nn[i] = found.front();
    }
    auto is_majority = [&](std::size_t row) {
        return static_cast<std::size_t>(y[static_cast<Eigen::Index>(row)]) == p.majority_class;
    };
    std::vector<std::size_t> rows;
    for (std::size_t a = 0; a < n; ++a) {
        const bool linked = is_majority(a) && nn[a] != Resampled::synthetic && !is_majority(nn[a]) && nn[nn[a]] == a;
        if (!linked) rows.push_back(a);
    }
    return detail::keep_rows(x, y, std::move(rows));
}

/// Edited nearest neighbours: drops a majority row when most of its k nearest
/// neighbours are minority. A tied vote keeps the row. Single pass, no cascading.
inline Resampled enn(const Matrix& x, const Vector& y, std::size_t k) {
    require(k >= 1, ErrorKind::config, "enn needs k >= 1");
    const auto p = profile(y);
    const auto n = static_cast<std::size_t>(y.size());
    if (n < 2) return detail::identity_sample(x, y);
    k = std::min(k, n - 1);
    const auto everyone = detail::all_rows(n);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::size_t>(y[static_cast<Eigen::Index>(i)]) != p.majority_class) {
            rows.push_back(i);
            continue;
        }
        check_deadline();
        std::size_t agree = 0;
        for (auto j : detail::nearest(x, i, everyone, k)) {
            agree += static_cast<std::size_t>(y[static_cast<Eigen::Index>(j)]) == p.majority_class ? 1 : 0;
        }
        if (agree >= k - agree) rows.push_back(i);
    }
    return detail::keep_rows(x, y, std::move(rows));
}

/// Condensed nearest neighbours: start from all minority rows plus one random
/// majority row, then add majority rows the condensed set misclassifies under 1-NN
/// until a full pass adds nothing.
inline Resampled cnn(const Matrix& x, const Vector& y, std::uint64_t seed) {
    const auto p = profile(y);
    const auto n = static_cast<std::size_t>(y.size());
    const auto majority = detail::rows_where(y, true, p.majority_class);
    if (majority.empty() || p.minority_count == 0) return detail::identity_sample(x, y);

    Rng rng(seed);
    std::vector<bool> in_set(n, false);
    std::vector<std::size_t> condensed = detail::rows_where(y, false, p.majority_class);
    for (auto r : condensed) in_set[r] = true;
    const std::size_t seed_row = majority[rng.index(majority.size())];
    condensed.push_back(seed_row);
    in_set[seed_row] = true;

    std::vector<std::size_t> order = detail::all_rows(n);
    rng.shuffle(order);
    bool added = true;
    while (added) {
        added = false;
        for (auto r : order) {
            if (in_set[r] || static_cast<std::size_t>(y[static_cast<Eigen::Index>(r)]) != p.majority_class) continue;
            check_deadline();
            const auto nn = detail::nearest(x, r, condensed, 1).front();
            if (static_cast<std::size_t>(y[static_cast<Eigen::Index>(nn)]) != p.majority_class) {
                condensed.push_back(r);
                in_set[r] = true;
                added = true;
            }
        }
    }
    return detail::keep_rows(x, y, std::move(condensed));
}

enum class BalanceMethod { none, random_over, random_under, smote, tomek, enn, cnn };

inline std::string to_string(BalanceMethod m) {
    switch (m) {
        case BalanceMethod::none: return "none";
        case BalanceMethod::random_over: return "random_over";
        case BalanceMethod::random_under: return "random_under";
        case BalanceMethod::smote: return "smote";
        case BalanceMethod::tomek: return "tomek";
        case BalanceMethod::enn: return "enn";
        case BalanceMethod::cnn: return "cnn";
    }
    return "none";
}

inline BalanceMethod parse_balance_method(const std::string& s) {
    for (auto m : {BalanceMethod::none, BalanceMethod::random_over, BalanceMethod::random_under, BalanceMethod::smote,
                   BalanceMethod::tomek, BalanceMethod::enn, BalanceMethod::cnn}) {
        if (to_string(m) == s) return m;
    }
    fail(ErrorKind::config, "unknown balancing method '" + s + "'");
}

struct BalancerSpec {
    BalanceMethod method = BalanceMethod::none;
    double ratio = 1.0;  // target ratio R for the ratio-targeting samplers
    std::size_t k = 5;
    std::uint64_t seed = 0;
};

/// Pipeline-level balancing: data whose imbalance ratio is at or below
/// `detection_threshold` pass through untouched; the cleaning rules (tomek, enn,
/// cnn) do not target a ratio.
inline Resampled apply_balancer(const BalancerSpec& spec, const Matrix& x, const Vector& y,
                                double detection_threshold) {
    require(spec.ratio >= 1.0, ErrorKind::config, "balancing ratio must be >= 1");
    if (spec.method == BalanceMethod::none || profile(y).ratio <= detection_threshold) {
        return detail::identity_sample(x, y);
    }
    switch (spec.method) {
        case BalanceMethod::random_over: return random_over(x, y, spec.ratio, spec.seed);
        case BalanceMethod::random_under: return random_under(x, y, spec.ratio, spec.seed);
        case BalanceMethod::smote: return smote(x, y, spec.ratio, spec.k, spec.seed);
        case BalanceMethod::tomek: return tomek(x, y);
        case BalanceMethod::enn: return enn(x, y, spec.k);
        case BalanceMethod::cnn: return cnn(x, y, spec.seed);
        case BalanceMethod::none: break;
    }
    return detail::identity_sample(x, y);
}

}  // namespace autotab
