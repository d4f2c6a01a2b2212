#pragma once

#include "retrofit/mlp.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace retrofit {

/// Scale on which attributions are computed.
enum class OutputScale { Probability, Score };

inline constexpr std::size_t kMaxExactFeatures = 16;

struct Attribution {
    int label = 0;
    double base_value = 0;  // E[f] over the background
    double fx = 0;          // f(x)
    std::vector<double> phi;
    std::vector<double> standard_error;  // sampled mode only
    std::vector<std::string> feature_names;
    std::vector<double> feature_values;  // model-input (normalised) values of x
    bool exact = true;
};

/// Interventional value of coalition `subset` (bit i set = feature i taken from x):
/// mean over background rows b of f(x on S, b elsewhere) at output `label`.
double value_function(const MLPModel& model, std::span<const double> x, std::uint64_t subset,
                      const Matrix& background, int label, OutputScale scale = OutputScale::Probability);

/// Exact Shapley values by enumerating all 2^|F| coalitions (|F| <= 16).
Attribution shapley_exact(const MLPModel& model, std::span<const double> x, const Matrix& background, int label,
                          OutputScale scale = OutputScale::Probability);

/// Exact attributions for every output label, sharing one coalition sweep.
std::vector<Attribution> shapley_exact_all(const MLPModel& model, std::span<const double> x,
                                           const Matrix& background,
                                           OutputScale scale = OutputScale::Probability);

/// Permutation-sampling estimator. Each permutation pairs with one background row drawn
/// uniformly; the efficiency residual is spread over features in proportion to |phi_i|.
/// Requires n_permutations >= 50.
Attribution shapley_sampled(const MLPModel& model, std::span<const double> x, const Matrix& background, int label,
                            int n_permutations, std::uint64_t seed,
                            OutputScale scale = OutputScale::Probability);

/// Global ranking data for one label.
struct LabelSummary {
    int label = 0;
    std::vector<double> mean_abs_phi;     // feature order of the attributions
    std::vector<std::size_t> ordering;    // mean |phi| descending, ties by name ascending
    // scatter[f] holds (phi, normalised feature value) per sample.
    std::vector<std::vector<std::pair<double, double>>> scatter;
};

struct SummaryStats {
    std::vector<std::string> feature_names;
    std::vector<LabelSummary> labels;  // one per label present, ascending label index
};

SummaryStats summarize(const std::vector<Attribution>& attributions);

struct WaterfallStep {
    std::string feature;
    double feature_value = 0;
    double phi = 0;
    double cumulative = 0;
    bool positive = true;
};

struct Waterfall {
    double base_value = 0;
    std::vector<WaterfallStep> steps;  // |phi| ascending (bottom-up); zero contributions omitted
    double final_value = 0;
};

Waterfall waterfall(const Attribution& attribution);

void to_json(nlohmann::json& j, const Attribution& a);
void to_json(nlohmann::json& j, const SummaryStats& s);
void to_json(nlohmann::json& j, const Waterfall& w);

std::string summary_csv(const SummaryStats& s);
std::string waterfall_svg(const Waterfall& w, const std::string& title);

}  // namespace retrofit
