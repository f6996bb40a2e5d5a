#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "autotab/deadline.hpp"
#include "autotab/models/model.hpp"

namespace autotab {

namespace detail {
inline std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
inline Vector from_std(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }
}  // namespace detail

/// Ridge regression, theta = (Xc'Xc + alpha I)^-1 Xc'yc on centred data; the
/// intercept is not penalised.
class RidgeModel final : public Model {
public:
    RidgeModel(TaskKind task, std::size_t classes, double alpha) : Model(task, classes), alpha_(alpha) {
        require(alpha >= 0.0, ErrorKind::config, "ridge alpha must be >= 0");
    }

    std::string id() const override { return "ridge"; }

    void fit(const Matrix& x, const Vector& y) override {
        begin_fit(x, y);
        require(task_ == TaskKind::regression, ErrorKind::unsupported, "ridge supports regression only");
        const Eigen::RowVectorXd x_mean = x.colwise().mean();
        const double y_mean = y.mean();
        const Eigen::MatrixXd xc = x.rowwise() - x_mean;
        const Vector yc = y.array() - y_mean;
        Eigen::MatrixXd gram = xc.transpose() * xc;
        gram.diagonal().array() += alpha_;
        const Vector rhs = xc.transpose() * yc;
        if (alpha_ == 0.0) {
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram);
            require(qr.rank() == gram.cols(), ErrorKind::fit,
                    "ridge system is singular with alpha=0; use alpha > 0");
            coef_ = qr.solve(rhs);
        } else {
            coef_ = gram.ldlt().solve(rhs);
        }
        intercept_ = y_mean - x_mean.dot(coef_);
        require(coef_.allFinite() && std::isfinite(intercept_), ErrorKind::fit, "ridge solution is not finite");
        fitted_ = true;
    }

    PredictionBundle predict(const Matrix& x) const override {
        check_predict_input(x);
        const Vector yhat = (x * coef_).array() + intercept_;
        return {detail::to_std(yhat), std::nullopt};
    }

    const Vector& coefficients() const { return coef_; }
    double intercept() const { return intercept_; }

    json to_json() const override {
        json j = base_json();
        j["alpha"] = alpha_;
        j["coef"] = detail::to_std(coef_);
        j["intercept"] = intercept_;
        return j;
    }

    static std::unique_ptr<RidgeModel> from_json(const json& j, TaskKind task, std::size_t classes) {
        auto m = std::make_unique<RidgeModel>(task, classes, j.at("alpha").get<double>());
        m->restore_base(j);
        m->coef_ = detail::from_std(j.at("coef").get<std::vector<double>>());
        m->intercept_ = j.at("intercept").get<double>();
        return m;
    }

private:
    double alpha_;
    Vector coef_;
    double intercept_ = 0.0;
};

inline double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// L2-regularised logistic regression fitted by gradient descent with Armijo
/// backtracking (gradient-norm tolerance 1e-6, at most 500 iterations). Inputs are
/// standardised internally. Multiclass uses one-vs-rest with normalised scores.
class LogisticModel final : public Model {
public:
    static constexpr double gradient_tolerance = 1e-6;
    static constexpr int max_iterations = 500;

    LogisticModel(TaskKind task, std::size_t classes, double alpha) : Model(task, classes), alpha_(alpha) {
        require(alpha >= 0.0, ErrorKind::config, "logistic alpha must be >= 0");
    }

    std::string id() const override { return "logistic"; }

    void fit(const Matrix& x, const Vector& y) override {
        begin_fit(x, y);
        require(is_classification(task_), ErrorKind::unsupported, "logistic supports classification only");
        const auto w = x.cols();
        mean_ = x.colwise().mean();
        scale_.resize(w);
        for (Eigen::Index j = 0; j < w; ++j) {
            const double sd = std::sqrt((x.col(j).array() - mean_[j]).square().mean());
            scale_[j] = sd < 1e-12 ? 1.0 : sd;
        }
        const Eigen::MatrixXd z = (x.rowwise() - mean_).array().rowwise() / scale_.transpose().array();

        const std::size_t problems = classes_ == 2 ? 1 : classes_;
        weights_ = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(problems), w);
        bias_ = Vector::Zero(static_cast<Eigen::Index>(problems));
        for (std::size_t p = 0; p < problems; ++p) {
            const double positive = classes_ == 2 ? 1.0 : static_cast<double>(p);
            const Vector target = (y.array() == positive).cast<double>();
            Vector coef = Vector::Zero(w);
            double bias = 0.0;
            descend(z, target, coef, bias);
            weights_.row(static_cast<Eigen::Index>(p)) = coef.transpose();
            bias_[static_cast<Eigen::Index>(p)] = bias;
        }
        fitted_ = true;
    }

    PredictionBundle predict(const Matrix& x) const override {
        check_predict_input(x);
        const Eigen::MatrixXd z = (x.rowwise() - mean_).array().rowwise() / scale_.transpose().array();
        const Eigen::MatrixXd scores = (z * weights_.transpose()).rowwise() + bias_.transpose();
        Matrix p(x.rows(), static_cast<Eigen::Index>(classes_));
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            if (classes_ == 2) {
                const double s = sigmoid(scores(r, 0));
                p(r, 0) = 1.0 - s;
                p(r, 1) = s;
                continue;
            }
            double total = 0.0;
            for (Eigen::Index c = 0; c < p.cols(); ++c) {
                p(r, c) = sigmoid(scores(r, c));
                total += p(r, c);
            }
            if (total <= 0.0) {
                p.row(r).setConstant(1.0 / static_cast<double>(classes_));
            } else {
                p.row(r) /= total;
            }
        }
        return classification_bundle(std::move(p));
    }

    json to_json() const override {
        json j = base_json();
        j["alpha"] = alpha_;
        j["mean"] = std::vector<double>(mean_.data(), mean_.data() + mean_.size());
        j["scale"] = detail::to_std(scale_);
        j["bias"] = detail::to_std(bias_);
        json rows = json::array();
        for (Eigen::Index p = 0; p < weights_.rows(); ++p) {
            rows.push_back(detail::to_std(Vector(weights_.row(p).transpose())));
        }
        j["weights"] = rows;
        return j;
    }

    static std::unique_ptr<LogisticModel> from_json(const json& j, TaskKind task, std::size_t classes) {
        auto m = std::make_unique<LogisticModel>(task, classes, j.at("alpha").get<double>());
        m->restore_base(j);
        m->mean_ = detail::from_std(j.at("mean").get<std::vector<double>>()).transpose();
        m->scale_ = detail::from_std(j.at("scale").get<std::vector<double>>());
        m->bias_ = detail::from_std(j.at("bias").get<std::vector<double>>());
        const auto& rows = j.at("weights");
        m->weights_.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m->width_));
        for (std::size_t p = 0; p < rows.size(); ++p) {
            m->weights_.row(static_cast<Eigen::Index>(p)) = detail::from_std(rows[p].get<std::vector<double>>()).transpose();
        }
        return m;
    }

private:
    // Mean log-loss plus (alpha/2)|coef|^2.
    double objective(const Eigen::MatrixXd& z, const Vector& target, const Vector& coef, double bias) const {
        const Vector eta = (z * coef).array() + bias;
        double loss = 0.0;
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            const double e = eta[i];
            const double softplus = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
            loss += softplus - target[i] * e;
        }
        return loss / static_cast<double>(eta.size()) + 0.5 * alpha_ * coef.squaredNorm();
    }

    void descend(const Eigen::MatrixXd& z, const Vector& target, Vector& coef, double& bias) const {
        const double n = static_cast<double>(z.rows());
        double step = 1.0;
        double current = objective(z, target, coef, bias);
        for (int iteration = 0; iteration < max_iterations; ++iteration) {
            check_deadline();
            const Vector eta = (z * coef).array() + bias;
            Vector residual(eta.size());
            for (Eigen::Index i = 0; i < eta.size(); ++i) residual[i] = sigmoid(eta[i]) - target[i];
            const Vector grad_coef = z.transpose() * residual / n + alpha_ * coef;
            const double grad_bias = residual.sum() / n;
            const double grad_norm_sq = grad_coef.squaredNorm() + grad_bias * grad_bias;
            if (std::sqrt(grad_norm_sq) < gradient_tolerance) break;

            step = std::min(step * 2.0, 1e3);
            while (true) {
                const Vector trial_coef = coef - step * grad_coef;
                const double trial_bias = bias - step * grad_bias;
                const double trial = objective(z, target, trial_coef, trial_bias);
                if (trial <= current - 0.5 * step * grad_norm_sq) {
                    coef = trial_coef;
                    bias = trial_bias;
                    current = trial;
                    break;
                }
                step *= 0.5;
                if (step < 1e-12) return;
            }
        }
    }

    double alpha_;
    Eigen::RowVectorXd mean_;
    Vector scale_;
    Eigen::MatrixXd weights_;
    Vector bias_;
};

/// Poisson GLM with log link fitted by IRLS: at most 100 iterations, stopping when
/// the relative deviance change drops below 1e-8, with up to 10 step halvings
/// whenever the deviance rises. An optional offset enters the linear predictor
/// (log exposure). The L2 penalty (alpha * n / 2)|beta|^2 skips the intercept.
class PoissonGlmModel final : public Model {
public:
    static constexpr int max_iterations = 100;
    static constexpr double deviance_tolerance = 1e-8;
    static constexpr int max_halvings = 10;

    PoissonGlmModel(TaskKind task, std::size_t classes, double alpha) : Model(task, classes), alpha_(alpha) {
        require(alpha >= 0.0, ErrorKind::config, "poisson_glm alpha must be >= 0");
    }

    std::string id() const override { return "poisson_glm"; }

    void fit(const Matrix& x, const Vector& y) override { fit(x, y, Vector()); }

    void fit(const Matrix& x, const Vector& y, const Vector& offset) {
        begin_fit(x, y);
        require(task_ == TaskKind::regression, ErrorKind::unsupported, "poisson_glm supports regression only");
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            require(y[i] >= 0.0 && y[i] == std::floor(y[i]), ErrorKind::task,
                    "poisson_glm needs non-negative integer responses");
        }
        require(offset.size() == 0 || offset.size() == y.size(), ErrorKind::contract, "offset length mismatch");
        const Eigen::Index n = x.rows();
        const Eigen::Index p = x.cols() + 1;
        Eigen::MatrixXd design(n, p);
        design.col(0).setOnes();
        design.rightCols(x.cols()) = x;
        const Vector off = offset.size() == 0 ? Vector::Zero(n) : offset;

        Eigen::MatrixXd penalty = Eigen::MatrixXd::Zero(p, p);
        for (Eigen::Index j = 1; j < p; ++j) penalty(j, j) = alpha_ * static_cast<double>(n);

        Vector mu = y.array() + 0.1;
        Vector eta = mu.array().log();
        Vector beta = Vector::Zero(p);
        double deviance = std::numeric_limits<double>::infinity();
        bool first = true;
        for (int iteration = 0; iteration < max_iterations; ++iteration) {
            check_deadline();
            const Vector working = (eta - off).array() + (y - mu).array() / mu.array();
            const Eigen::MatrixXd weighted = design.array().colwise() * mu.array();
            const Eigen::MatrixXd normal = design.transpose() * weighted + penalty;
            const Vector rhs = weighted.transpose() * working;
            Vector candidate = normal.ldlt().solve(rhs);
            require(candidate.allFinite(), ErrorKind::fit, "poisson_glm IRLS produced non-finite coefficients");

            double candidate_deviance = penalized_deviance(design, y, off, candidate, n);
            if (!first) {
                for (int h = 0; h < max_halvings && !(candidate_deviance <= deviance); ++h) {
                    candidate = 0.5 * (candidate + beta);
                    candidate_deviance = penalized_deviance(design, y, off, candidate, n);
                }
            }
            // Halving could not recover a decrease: keep the previous iterate.
            if (!first && !(candidate_deviance <= deviance)) break;
            const double change = std::abs(candidate_deviance - deviance);
            beta = candidate;
            deviance = candidate_deviance;
            eta = design * beta + off;
            mu = eta.array().min(700.0).max(-700.0).exp();
            if (!first && change / (std::abs(deviance) + 0.1) < deviance_tolerance) break;
            first = false;
        }
        intercept_ = beta[0];
        coef_ = beta.tail(x.cols());
        fitted_ = true;
    }

    PredictionBundle predict(const Matrix& x) const override { return predict(x, Vector()); }

    PredictionBundle predict(const Matrix& x, const Vector& offset) const {
        check_predict_input(x);
        require(offset.size() == 0 || offset.size() == x.rows(), ErrorKind::contract, "offset length mismatch");
        Vector eta = (x * coef_).array() + intercept_;
        if (offset.size() > 0) eta += offset;
        const Vector mu = eta.array().min(700.0).max(-700.0).exp();
        return {detail::to_std(mu), std::nullopt};
    }

    const Vector& coefficients() const { return coef_; }
    double intercept() const { return intercept_; }

    json to_json() const override {
        json j = base_json();
        j["alpha"] = alpha_;
        j["coef"] = detail::to_std(coef_);
        j["intercept"] = intercept_;
        return j;
    }

    static std::unique_ptr<PoissonGlmModel> from_json(const json& j, TaskKind task, std::size_t classes) {
        auto m = std::make_unique<PoissonGlmModel>(task, classes, j.at("alpha").get<double>());
        m->restore_base(j);
        m->coef_ = detail::from_std(j.at("coef").get<std::vector<double>>());
        m->intercept_ = j.at("intercept").get<double>();
        return m;
    }

private:
    double penalized_deviance(const Eigen::MatrixXd& design, const Vector& y, const Vector& off, const Vector& beta,
                              Eigen::Index n) const {
        const Vector eta = design * beta + off;
        double dev = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double mu = std::exp(std::clamp(eta[i], -700.0, 700.0));
            dev += 2.0 * ((y[i] > 0 ? y[i] * std::log(y[i] / mu) : 0.0) - (y[i] - mu));
        }
        return dev + alpha_ * static_cast<double>(n) * beta.tail(beta.size() - 1).squaredNorm();
    }

    double alpha_;
    Vector coef_;
    double intercept_ = 0.0;
};

}  // namespace autotab
