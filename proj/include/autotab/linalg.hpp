#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace autotab {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double missing_value = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double value) { return std::isnan(value); }

inline std::span<const double> as_span(const Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

inline std::span<const double> as_span(const std::vector<double>& v) { return {v.data(), v.size()}; }

inline Vector to_vector(std::span<const double> values) {
    Vector out(static_cast<Eigen::Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) out[static_cast<Eigen::Index>(i)] = values[i];
    return out;
}

inline Matrix take_rows(const Matrix& x, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

inline Vector take_rows(const Vector& y, std::span<const std::size_t> rows) {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(rows[i])];
    }
    return out;
}

inline double squared_distance(const Matrix& a, Eigen::Index row_a, const Matrix& b, Eigen::Index row_b) {
    double sum = 0.0;
    const double* pa = a.data() + row_a * a.cols();
    const double* pb = b.data() + row_b * b.cols();
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        const double d = pa[j] - pb[j];
        sum += d * d;
    }
    return sum;
}

}  // namespace autotab
