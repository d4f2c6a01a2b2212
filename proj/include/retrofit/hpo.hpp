#pragma once

#include "retrofit/mlp.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace retrofit {

struct SearchSpace {
    std::vector<int> n_layers = {2, 3, 4, 5, 6};
    std::vector<int> layer_sizes = {32, 64, 128, 256, 512};  // drawn independently per layer
    std::vector<double> learning_rates = {1e-4, 1e-3, 1e-2};
    std::vector<int> batch_sizes = {16, 32, 64, 128};

    void validate() const;
    bool contains(const MLPConfig& config) const;
};

enum class TrialStatus { Running, Pruned, Complete };
std::string to_string(TrialStatus status);

struct Trial {
    int id = 0;
    MLPConfig config;
    std::vector<std::pair<int, double>> intermediate;  // (epoch, validation loss)
    TrialStatus status = TrialStatus::Running;
    std::optional<double> value;      // best validation loss, complete trials only
    std::optional<int> pruned_step;   // pruned trials only
    std::string note;

    std::optional<double> value_at(int step) const;
};

struct TpeOptions {
    int n_startup = 10;
    double gamma = 0.25;
    int n_candidates = 24;
};

/// Univariate TPE over the categorical search space. The first `n_startup` suggestions
/// are uniform; later ones maximise l(x) / g(x) over candidates drawn from l(x), where
/// l is the add-one smoothed frequency among the best gamma-fraction of completed trials
/// and g the same over the rest (pruned trials count as "bad").
/// Training fields other than the searched ones are copied from `base`.
MLPConfig suggest(const std::vector<Trial>& history, const SearchSpace& space, std::uint64_t rng_seed,
                  const MLPConfig& base = {}, const TpeOptions& options = {});

struct PrunerOptions {
    int min_trials = 5;
};

/// True iff at least `min_trials` completed trials reported a value at `step` and the
/// trial's current value is strictly greater than their median.
bool should_prune(const Trial& trial, int step, const std::vector<Trial>& history,
                  const PrunerOptions& options = {});

struct OptimizeOptions {
    int n_trials = 50;
    std::uint64_t seed = 0;
    MLPConfig base;  // max_epochs / patience / min_delta used by every trial
    TpeOptions tpe;
    PrunerOptions pruner;
};

struct OptimizeResult {
    MLPConfig best;
    int best_trial = -1;
    std::vector<Trial> trials;
};

/// Runs the search; best = completed trial with minimal value, ties to the lowest id.
/// Throws TrainingError when every trial was pruned.
OptimizeResult optimize(const Matrix& x_train, const Matrix& y_train, const Matrix& x_val, const Matrix& y_val,
                        const SearchSpace& space, const OptimizeOptions& options);

void to_json(nlohmann::json& j, const MLPConfig& config);
void from_json(const nlohmann::json& j, MLPConfig& config);
void to_json(nlohmann::json& j, const Trial& trial);

/// One JSON object per line, trial order.
void write_trial_log(const std::filesystem::path& path, const std::vector<Trial>& trials);

}  // namespace retrofit
