#include "retrofit/hpo.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace retrofit {

using nlohmann::json;

void SearchSpace::validate() const {
    if (n_layers.empty() || layer_sizes.empty() || learning_rates.empty() || batch_sizes.empty())
        throw ConfigError("every search-space dimension needs at least one value");
    for (int n : n_layers)
        if (n < 1) throw ConfigError("layer counts must be positive");
}

bool SearchSpace::contains(const MLPConfig& c) const {
    auto in = [](const auto& set, auto v) { return std::find(set.begin(), set.end(), v) != set.end(); };
    if (!in(n_layers, static_cast<int>(c.layer_sizes.size()))) return false;
    for (int s : c.layer_sizes)
        if (!in(layer_sizes, s)) return false;
    return in(learning_rates, c.learning_rate) && in(batch_sizes, c.batch_size);
}

std::string to_string(TrialStatus status) {
    switch (status) {
        case TrialStatus::Running: return "running";
        case TrialStatus::Pruned: return "pruned";
        case TrialStatus::Complete: return "complete";
    }
    return "running";
}

std::optional<double> Trial::value_at(int step) const {
    for (const auto& [s, v] : intermediate)
        if (s == step) return v;
    return std::nullopt;
}

namespace {

// Index of each searched value within its set, or -1 when the trial lacks the parameter.
struct Encoded {
    int n_layers = -1;
    std::vector<int> layers;
    int lr = -1;
    int batch = -1;
};

template <typename T>
int index_in(const std::vector<T>& set, T v) {
    auto it = std::find(set.begin(), set.end(), v);
    return it == set.end() ? -1 : static_cast<int>(it - set.begin());
}

Encoded encode(const MLPConfig& c, const SearchSpace& space) {
    Encoded e;
    e.n_layers = index_in(space.n_layers, static_cast<int>(c.layer_sizes.size()));
    for (int s : c.layer_sizes) e.layers.push_back(index_in(space.layer_sizes, s));
    e.lr = index_in(space.learning_rates, c.learning_rate);
    e.batch = index_in(space.batch_sizes, c.batch_size);
    return e;
}

class CategoricalTpe {
public:
    CategoricalTpe(std::size_t k, const std::vector<int>& good, const std::vector<int>& bad)
        : l_(k, 1.0), g_(k, 1.0) {
        for (int v : good)
            if (v >= 0) l_[static_cast<std::size_t>(v)] += 1.0;
        for (int v : bad)
            if (v >= 0) g_[static_cast<std::size_t>(v)] += 1.0;
        normalise(l_);
        normalise(g_);
    }

    int sample(std::mt19937_64& rng, int n_candidates) const {
        std::discrete_distribution<int> draw(l_.begin(), l_.end());
        int best = -1;
        double best_score = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < n_candidates; ++i) {
            const int c = draw(rng);
            const double score = std::log(l_[static_cast<std::size_t>(c)]) - std::log(g_[static_cast<std::size_t>(c)]);
            if (score > best_score) {
                best_score = score;
                best = c;
            }
        }
        return best;
    }

private:
    static void normalise(std::vector<double>& w) {
        double s = 0;
        for (double v : w) s += v;
        for (double& v : w) v /= s;
    }

    std::vector<double> l_, g_;
};

int uniform_index(std::mt19937_64& rng, std::size_t k) {
    std::uniform_int_distribution<int> d(0, static_cast<int>(k) - 1);
    return d(rng);
}

}  // namespace

MLPConfig suggest(const std::vector<Trial>& history, const SearchSpace& space, std::uint64_t rng_seed,
                  const MLPConfig& base, const TpeOptions& options) {
    space.validate();
    std::mt19937_64 rng(rng_seed);
    MLPConfig out = base;

    std::vector<const Trial*> complete, pruned;
    for (const auto& t : history) {
        if (t.status == TrialStatus::Complete && t.value) complete.push_back(&t);
        else if (t.status == TrialStatus::Pruned) pruned.push_back(&t);
    }
    const bool startup = static_cast<int>(complete.size() + pruned.size()) < options.n_startup || complete.empty();

    if (startup) {
        const int n = space.n_layers[static_cast<std::size_t>(uniform_index(rng, space.n_layers.size()))];
        out.learning_rate = space.learning_rates[static_cast<std::size_t>(uniform_index(rng, space.learning_rates.size()))];
        out.batch_size = space.batch_sizes[static_cast<std::size_t>(uniform_index(rng, space.batch_sizes.size()))];
        out.layer_sizes.clear();
        for (int i = 0; i < n; ++i)
            out.layer_sizes.push_back(space.layer_sizes[static_cast<std::size_t>(uniform_index(rng, space.layer_sizes.size()))]);
        return out;
    }

    std::stable_sort(complete.begin(), complete.end(), [](const Trial* a, const Trial* b) {
        if (*a->value != *b->value) return *a->value < *b->value;
        return a->id < b->id;
    });
    const auto n_good = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(options.gamma * static_cast<double>(complete.size()))));
    std::vector<Encoded> good, bad;
    for (std::size_t i = 0; i < complete.size(); ++i)
        (i < n_good ? good : bad).push_back(encode(complete[i]->config, space));
    for (const auto* t : pruned) bad.push_back(encode(t->config, space));

    auto collect = [](const std::vector<Encoded>& set, auto field) {
        std::vector<int> vals;
        for (const auto& e : set) vals.push_back(field(e));
        return vals;
    };

    const int n_idx = CategoricalTpe(space.n_layers.size(), collect(good, [](const Encoded& e) { return e.n_layers; }),
                                     collect(bad, [](const Encoded& e) { return e.n_layers; }))
                          .sample(rng, options.n_candidates);
    const int lr_idx = CategoricalTpe(space.learning_rates.size(), collect(good, [](const Encoded& e) { return e.lr; }),
                                      collect(bad, [](const Encoded& e) { return e.lr; }))
                           .sample(rng, options.n_candidates);
    const int b_idx = CategoricalTpe(space.batch_sizes.size(), collect(good, [](const Encoded& e) { return e.batch; }),
                                     collect(bad, [](const Encoded& e) { return e.batch; }))
                          .sample(rng, options.n_candidates);
    out.learning_rate = space.learning_rates[static_cast<std::size_t>(lr_idx)];
    out.batch_size = space.batch_sizes[static_cast<std::size_t>(b_idx)];
    out.layer_sizes.clear();
    const int n = space.n_layers[static_cast<std::size_t>(n_idx)];
    for (int k = 0; k < n; ++k) {
        // Layer k is only observed in trials with more than k layers.
        auto layer_k = [k](const Encoded& e) {
            return k < static_cast<int>(e.layers.size()) ? e.layers[static_cast<std::size_t>(k)] : -1;
        };
        const int s_idx = CategoricalTpe(space.layer_sizes.size(), collect(good, layer_k), collect(bad, layer_k))
                              .sample(rng, options.n_candidates);
        out.layer_sizes.push_back(space.layer_sizes[static_cast<std::size_t>(s_idx)]);
    }
    return out;
}

bool should_prune(const Trial& trial, int step, const std::vector<Trial>& history, const PrunerOptions& options) {
    const auto current = trial.value_at(step);
    if (!current) return false;
    std::vector<double> values;
    for (const auto& t : history) {
        if (t.status != TrialStatus::Complete || t.id == trial.id) continue;
        if (auto v = t.value_at(step)) values.push_back(*v);
    }
    if (static_cast<int>(values.size()) < options.min_trials || values.empty()) return false;
    std::sort(values.begin(), values.end());
    const std::size_t m = values.size();
    const double median = m % 2 ? values[m / 2] : 0.5 * (values[m / 2 - 1] + values[m / 2]);
    return *current > median;
}

OptimizeResult optimize(const Matrix& x_train, const Matrix& y_train, const Matrix& x_val, const Matrix& y_val,
                        const SearchSpace& space, const OptimizeOptions& options) {
    space.validate();
    if (options.n_trials <= 0) throw ConfigError("n_trials must be positive");
    OptimizeResult result;
    for (int t = 0; t < options.n_trials; ++t) {
        Trial trial;
        trial.id = t;
        trial.config = suggest(result.trials, space, derive_seed(options.seed, static_cast<std::uint64_t>(t)),
                               options.base, options.tpe);
        trial.config.seed = derive_seed(options.seed, 1'000'000ULL + static_cast<std::uint64_t>(t));
        const auto& history = result.trials;
        try {
            auto fit = train(x_train, y_train, trial.config, x_val, y_val, [&](int epoch, double val) {
                trial.intermediate.emplace_back(epoch, val);
                if (should_prune(trial, epoch, history, options.pruner)) {
                    trial.pruned_step = epoch;
                    return true;
                }
                return false;
            });
            if (trial.pruned_step) {
                trial.status = TrialStatus::Pruned;
            } else {
                trial.status = TrialStatus::Complete;
                trial.value = *std::min_element(fit.report.val_loss.begin(), fit.report.val_loss.end());
            }
        } catch (const TrainingError& e) {
            trial.status = TrialStatus::Pruned;
            trial.pruned_step = trial.intermediate.empty() ? 1 : trial.intermediate.back().first;
            trial.note = e.what();
        }
        result.trials.push_back(std::move(trial));
    }
    for (const auto& t : result.trials) {
        if (t.status != TrialStatus::Complete) continue;
        if (result.best_trial < 0 || *t.value < *result.trials[static_cast<std::size_t>(result.best_trial)].value)
            result.best_trial = t.id;
    }
    if (result.best_trial < 0)
        throw TrainingError("all trials were pruned; raise the pruner warm-up (min_trials) or the trial count");
    result.best = result.trials[static_cast<std::size_t>(result.best_trial)].config;
    return result;
}

void to_json(json& j, const MLPConfig& c) {
    j = {{"layer_sizes", c.layer_sizes}, {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
         {"max_epochs", c.max_epochs},   {"patience", c.patience},           {"min_delta", c.min_delta},
         {"seed", c.seed}};
}

void from_json(const json& j, MLPConfig& c) {
    c = MLPConfig{};
    c.layer_sizes = j.value("layer_sizes", c.layer_sizes);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.min_delta = j.value("min_delta", c.min_delta);
    c.seed = j.value("seed", c.seed);
}

void to_json(json& j, const Trial& t) {
    json inter = json::array();
    for (const auto& [s, v] : t.intermediate) inter.push_back({s, v});
    j = {{"id", t.id}, {"status", to_string(t.status)}, {"config", t.config}, {"intermediate", inter}};
    j["value"] = t.value ? json(*t.value) : json(nullptr);
    if (t.pruned_step) j["pruned_step"] = *t.pruned_step;
    if (!t.note.empty()) j["note"] = t.note;
}

void write_trial_log(const std::filesystem::path& path, const std::vector<Trial>& trials) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write trial log '" + path.string() + "'");
    for (const auto& t : trials) out << json(t).dump() << '\n';
}

}  // namespace retrofit
