#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "autotab/error.hpp"
#include "autotab/params.hpp"
#include "autotab/random.hpp"
#include "autotab/tabular.hpp"

namespace autotab {

enum class Stage { encode = 0, impute, balance, scale, select, model };

inline constexpr std::array<Stage, 6> all_stages{Stage::encode, Stage::impute, Stage::balance,
                                                 Stage::scale,  Stage::select, Stage::model};

inline std::string to_string(Stage s) {
    static const char* names[] = {"encode", "impute", "balance", "scale", "select", "model"};
    return names[static_cast<int>(s)];
}

inline Stage parse_stage(const std::string& s) {
    for (auto stage : all_stages) {
        if (to_string(stage) == s) return stage;
    }
    fail(ErrorKind::config, "unknown pipeline stage '" + s + "'");
}

/// Hyperparameter domain: a categorical set, an integer range or a real range
/// (optionally log-scaled).
struct Domain {
    enum class Kind { categorical, integer, real };

    Kind kind = Kind::real;
    std::vector<std::string> values;
    double lo = 0.0;
    double hi = 0.0;
    bool log = false;

    static Domain categorical(std::vector<std::string> values) {
        Domain d;
        d.kind = Kind::categorical;
        d.values = std::move(values);
        d.check();
        return d;
    }
    static Domain integer(std::int64_t lo, std::int64_t hi) {
        Domain d;
        d.kind = Kind::integer;
        d.lo = static_cast<double>(lo);
        d.hi = static_cast<double>(hi);
        d.check();
        return d;
    }
    static Domain real(double lo, double hi, bool log = false) {
        Domain d;
        d.kind = Kind::real;
        d.lo = lo;
        d.hi = hi;
        d.log = log;
        d.check();
        return d;
    }

    void check() const {
        if (kind == Kind::categorical) {
            require(!values.empty(), ErrorKind::config, "categorical domain is empty");
            return;
        }
        require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, ErrorKind::config, "domain needs lo <= hi");
        require(!log || lo > 0.0, ErrorKind::config, "log-scaled domain needs lo > 0");
        if (kind == Kind::integer) {
            require(lo == std::floor(lo) && hi == std::floor(hi), ErrorKind::config, "integer domain bounds");
        }
    }

    bool contains(const ParamValue& v) const {
        switch (kind) {
            case Kind::categorical: {
                const auto* s = std::get_if<std::string>(&v);
                return s && std::find(values.begin(), values.end(), *s) != values.end();
            }
            case Kind::integer: {
                const auto* i = std::get_if<std::int64_t>(&v);
                return i && static_cast<double>(*i) >= lo && static_cast<double>(*i) <= hi;
            }
            case Kind::real: {
                const auto* d = std::get_if<double>(&v);
                return d && *d >= lo && *d <= hi;
            }
        }
        return false;
    }

    ParamValue sample(Rng& rng) const {
        switch (kind) {
            case Kind::categorical: return values[rng.index(values.size())];
            case Kind::integer:
                return static_cast<std::int64_t>(
                    rng.integer(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
            case Kind::real:
                if (lo == hi) return lo;
                if (log) return std::clamp(std::exp(rng.uniform(std::log(lo), std::log(hi))), lo, hi);
                return rng.uniform(lo, hi);
        }
        return lo;
    }

    /// Moves a numeric value by `fraction` of the domain width (log space for log
    /// domains), clamped to the bounds; integers are rounded.
    ParamValue shift(const ParamValue& v, double fraction) const {
        if (kind == Kind::categorical) return v;
        const double current =
            std::holds_alternative<std::int64_t>(v) ? static_cast<double>(std::get<std::int64_t>(v)) : std::get<double>(v);
        double next;
        if (log) {
            const double a = std::log(lo), b = std::log(hi);
            next = std::exp(std::clamp(std::log(current) + fraction * (b - a), a, b));
        } else {
            next = current + fraction * (hi - lo);
        }
        next = std::clamp(next, lo, hi);
        if (kind == Kind::integer) return static_cast<std::int64_t>(std::llround(next));
        return next;
    }

    json to_json() const {
        if (kind == Kind::categorical) return {{"type", "categorical"}, {"values", values}};
        if (kind == Kind::integer) {
            return {{"type", "int"}, {"lo", static_cast<std::int64_t>(lo)}, {"hi", static_cast<std::int64_t>(hi)}};
        }
        return {{"type", "real"}, {"lo", lo}, {"hi", hi}, {"log", log}};
    }

    static Domain from_json(const json& j) {
        const auto type = j.at("type").get<std::string>();
        if (type == "categorical") return categorical(j.at("values").get<std::vector<std::string>>());
        if (type == "int") return integer(j.at("lo").get<std::int64_t>(), j.at("hi").get<std::int64_t>());
        if (type == "real") return real(j.at("lo").get<double>(), j.at("hi").get<double>(), j.value("log", false));
        fail(ErrorKind::config, "unknown domain type '" + type + "'");
    }
};

struct MethodDomains {
    std::string method;
    std::map<std::string, Domain> params;
};

struct StageChoice {
    std::string method;
    Params params;

    bool operator==(const StageChoice&) const = default;
};

/// One sampled pipeline: a (method, hyperparameters) choice per stage plus the
/// seed that drives its stochastic components.
struct PipelineSpec {
    std::array<StageChoice, 6> stages;
    std::uint64_t seed = 0;

    StageChoice& operator[](Stage s) { return stages[static_cast<std::size_t>(s)]; }
    const StageChoice& operator[](Stage s) const { return stages[static_cast<std::size_t>(s)]; }

    bool operator==(const PipelineSpec&) const = default;

    std::string summary() const {
        std::string out;
        for (auto s : all_stages) {
            if (!out.empty()) out += " > ";
            out += (*this)[s].method;
        }
        return out;
    }

    json to_json() const {
        json j = json::object();
        for (auto s : all_stages) {
            j[to_string(s)] = {{"method", (*this)[s].method}, {"params", params_to_json((*this)[s].params)}};
        }
        j["seed"] = seed;
        return j;
    }

    static PipelineSpec from_json(const json& j) {
        PipelineSpec spec;
        for (auto s : all_stages) {
            const auto& stage = j.at(to_string(s));
            spec[s].method = stage.at("method").get<std::string>();
            spec[s].params = params_from_json(stage.at("params"));
        }
        spec.seed = j.at("seed").get<std::uint64_t>();
        return spec;
    }
};

/// The conditional space: per-stage method menus, each method with its own
/// hyperparameter domains.
class SearchSpace {
public:
    SearchSpace() = default;
    explicit SearchSpace(TaskKind task) : task_(task) {}

    TaskKind task() const { return task_; }

    std::vector<MethodDomains>& menu(Stage s) { return menus_[static_cast<std::size_t>(s)]; }
    const std::vector<MethodDomains>& menu(Stage s) const { return menus_[static_cast<std::size_t>(s)]; }

    const MethodDomains* find(Stage s, const std::string& method) const {
        for (const auto& m : menu(s)) {
            if (m.method == method) return &m;
        }
        return nullptr;
    }

    /// Restricts a stage menu to the listed methods (in the listed order).
    void allow(Stage s, const std::vector<std::string>& methods) {
        std::vector<MethodDomains> kept;
        for (const auto& name : methods) {
            const auto* m = find(s, name);
            require(m != nullptr, ErrorKind::config,
                    "method '" + name + "' is not available for stage " + to_string(s) + " on this task");
            kept.push_back(*m);
        }
        require(!kept.empty(), ErrorKind::config, "stage " + to_string(s) + " menu is empty");
        menu(s) = std::move(kept);
    }

    void override_domain(Stage s, const std::string& method, const std::string& param, Domain domain) {
        for (auto& m : menu(s)) {
            if (m.method != method) continue;
            require(m.params.contains(param), ErrorKind::config,
                    "method '" + method + "' has no hyperparameter '" + param + "'");
            m.params[param] = std::move(domain);
            return;
        }
        fail(ErrorKind::config, "method '" + method + "' is not in stage " + to_string(s));
    }

    void validate() const {
        for (auto s : all_stages) {
            require(!menu(s).empty(), ErrorKind::config, "stage " + to_string(s) + " menu is empty");
        }
    }

    bool validates(const PipelineSpec& spec) const {
        for (auto s : all_stages) {
            const auto* m = find(s, spec[s].method);
            if (m == nullptr) return false;
            if (spec[s].params.size() != m->params.size()) return false;
            for (const auto& [name, domain] : m->params) {
                const auto it = spec[s].params.find(name);
                if (it == spec[s].params.end() || !domain.contains(it->second)) return false;
            }
        }
        return true;
    }

    /// Applies {"allow": {stage: [methods]}, "domains": {stage: {method: {param: domain}}}}.
    void apply_overrides(const json& j) {
        if (j.is_null()) return;
        if (j.contains("allow")) {
            for (const auto& [stage, methods] : j.at("allow").items()) {
                allow(parse_stage(stage), methods.get<std::vector<std::string>>());
            }
        }
        if (j.contains("domains")) {
            for (const auto& [stage, methods] : j.at("domains").items()) {
                for (const auto& [method, params] : methods.items()) {
                    for (const auto& [param, domain] : params.items()) {
                        override_domain(parse_stage(stage), method, param, Domain::from_json(domain));
                    }
                }
            }
        }
        validate();
    }

    json to_json() const {
        json j = json::object();
        for (auto s : all_stages) {
            json stage = json::object();
            for (const auto& m : menu(s)) {
                json params = json::object();
                for (const auto& [name, domain] : m.params) params[name] = domain.to_json();
                stage[m.method] = params;
            }
            j[to_string(s)] = stage;
        }
        return j;
    }

private:
    TaskKind task_ = TaskKind::regression;
    std::array<std::vector<MethodDomains>, 6> menus_;
};

/// Full default menus for a task. poisson_glm is offered only for count responses;
/// balancing only for classification.
inline SearchSpace default_space(TaskKind task, bool count_response = false) {
    SearchSpace space(task);
    const bool classify = is_classification(task);
    space.menu(Stage::encode) = {{"ordinal", {}}, {"onehot", {}}};
    space.menu(Stage::impute) = {{"mean", {}},
                                 {"median", {}},
                                 {"mode", {}},
                                 {"constant", {{"value", Domain::real(-1.0, 1.0)}}},
                                 {"knn", {{"k", Domain::integer(1, 10)}}}};
    if (classify) {
        const auto ratio = Domain::real(1.0, 2.0);
        space.menu(Stage::balance) = {{"none", {}},
                                      {"random_over", {{"ratio", ratio}}},
                                      {"random_under", {{"ratio", ratio}}},
                                      {"smote", {{"k", Domain::integer(1, 10)}, {"ratio", ratio}}},
                                      {"tomek", {}},
                                      {"enn", {{"k", Domain::integer(1, 10)}}},
                                      {"cnn", {}}};
    } else {
        space.menu(Stage::balance) = {{"none", {}}};
    }
    space.menu(Stage::scale) = {{"none", {}}, {"standardize", {}}, {"minmax", {}}, {"robust", {}}};
    space.menu(Stage::select) = {{"none", {}},
                                 {"variance", {{"threshold", Domain::real(0.0, 0.05)}}},
                                 {"topk_corr", {{"k", Domain::integer(1, 50)}}}};

    auto& models = space.menu(Stage::model);
    models.push_back({"dummy", {}});
    if (classify) {
        models.push_back({"logistic", {{"alpha", Domain::real(1e-4, 1e1, true)}}});
    } else {
        models.push_back({"ridge", {{"alpha", Domain::real(1e-4, 1e2, true)}}});
        if (count_response) models.push_back({"poisson_glm", {{"alpha", Domain::real(1e-6, 1e-2, true)}}});
    }
    models.push_back({"knn", {{"k", Domain::integer(1, 50)}}});
    models.push_back({"cart",
                      {{"max_depth", Domain::integer(1, 20)},
                       {"min_samples_split", Domain::integer(2, 20)},
                       {"min_samples_leaf", Domain::integer(1, 20)}}});
    models.push_back({"random_forest",
                      {{"n_trees", Domain::integer(10, 100)},
                       {"max_depth", Domain::integer(2, 20)},
                       {"min_samples_leaf", Domain::integer(1, 20)}}});
    if (!classify) {
        models.push_back({"gbt",
                          {{"n_stages", Domain::integer(10, 200)},
                           {"learning_rate", Domain::real(0.01, 0.5, true)},
                           {"max_depth", Domain::integer(1, 6)},
                           {"min_samples_leaf", Domain::integer(1, 20)}}});
    }
    return space;
}

/// What a sampler may see of a finished trial.
struct Observation {
    std::size_t k = 0;
    PipelineSpec spec;
    std::optional<double> loss;  // engine loss of a valid trial
};

namespace detail {

inline StageChoice sample_stage(const SearchSpace& space, Stage s, std::uint64_t seed, std::size_t k) {
    const auto& menu = space.menu(s);
    require(!menu.empty(), ErrorKind::config, "stage " + to_string(s) + " menu is empty");
    Rng rng(derive_seed(seed, k, static_cast<std::uint64_t>(s)));
    const auto& method = menu[rng.index(menu.size())];
    StageChoice choice{method.method, {}};
    for (const auto& [name, domain] : method.params) choice.params[name] = domain.sample(rng);
    return choice;
}

}  // namespace detail

/// Uniform method per stage, uniform hyperparameters; each stage draws from its
/// own stream so restricting one menu leaves the other stages' draws unchanged.
inline PipelineSpec sample_random(const SearchSpace& space, std::uint64_t seed, std::size_t k) {
    PipelineSpec spec;
    for (auto s : all_stages) spec[s] = detail::sample_stage(space, s, seed, k);
    spec.seed = derive_seed(seed, k);
    return spec;
}

struct AdaptiveOptions {
    std::optional<double> epsilon;  // overrides max(0.1, 1 - k/20)
    double mutation_probability = 0.3;
    double step_fraction = 0.1;
    double elite_fraction = 0.25;
    std::optional<Stage> resample_stage;
};

/// Evolutionary sampler: explore at random with probability epsilon, otherwise
/// mutate a parent drawn from the best quarter of the valid history.
inline PipelineSpec sample_adaptive(const SearchSpace& space, std::span<const Observation> history,
                                    std::uint64_t seed, std::size_t k, const AdaptiveOptions& options = {}) {
    std::vector<const Observation*> valid;
    for (const auto& o : history) {
        if (o.loss && std::isfinite(*o.loss) && space.validates(o.spec)) valid.push_back(&o);
    }
    const double epsilon = options.epsilon.value_or(std::max(0.1, 1.0 - static_cast<double>(k) / 20.0));
    Rng rng(derive_seed(seed, k, 100));
    if (valid.empty() || rng.uniform() < epsilon) return sample_random(space, seed, k);

    std::sort(valid.begin(), valid.end(), [](const Observation* a, const Observation* b) {
        if (*a->loss != *b->loss) return *a->loss < *b->loss;
        return a->k < b->k;
    });
    const auto elite = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(options.elite_fraction * static_cast<double>(valid.size()))));
    PipelineSpec child = valid[rng.index(elite)]->spec;
    child.seed = derive_seed(seed, k);

    const Stage chosen = options.resample_stage ? *options.resample_stage : all_stages[rng.index(all_stages.size())];
    for (auto s : all_stages) {
        if (s == chosen) {
            child[s] = detail::sample_stage(space, s, seed, k);
            continue;
        }
        const auto* method = space.find(s, child[s].method);
        for (auto& [name, value] : child[s].params) {
            const auto& domain = method->params.at(name);
            if (domain.kind == Domain::Kind::categorical) continue;
            if (rng.uniform() < options.mutation_probability) {
                value = domain.shift(value, rng.uniform(-options.step_fraction, options.step_fraction));
            }
        }
    }
    return child;
}

class Sampler {
public:
    virtual ~Sampler() = default;
    virtual std::string id() const = 0;
    virtual PipelineSpec sample(const SearchSpace& space, std::span<const Observation> history, std::uint64_t seed,
                                std::size_t k) const = 0;
};

class RandomSampler final : public Sampler {
public:
    std::string id() const override { return "random"; }
    PipelineSpec sample(const SearchSpace& space, std::span<const Observation>, std::uint64_t seed,
                        std::size_t k) const override {
        return sample_random(space, seed, k);
    }
};

class AdaptiveSampler final : public Sampler {
public:
    explicit AdaptiveSampler(AdaptiveOptions options = {}) : options_(options) {}
    std::string id() const override { return "adaptive"; }
    PipelineSpec sample(const SearchSpace& space, std::span<const Observation> history, std::uint64_t seed,
                        std::size_t k) const override {
        return sample_adaptive(space, history, seed, k, options_);
    }

private:
    AdaptiveOptions options_;
};

inline std::unique_ptr<Sampler> make_sampler(const std::string& name) {
    if (name == "random") return std::make_unique<RandomSampler>();
    if (name == "adaptive") return std::make_unique<AdaptiveSampler>();
    fail(ErrorKind::config, "unknown search_algo '" + name + "' (expected random or adaptive)");
}

}  // namespace autotab
