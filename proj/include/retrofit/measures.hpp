#pragma once

#include "retrofit/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace retrofit {

enum class UnmatchedPolicy { Error, WarnAndIgnore };

/// Raw improvement descriptions grouped by retrofit category.
struct MeasureMap {
    std::array<std::vector<std::string>, kNumLabels> measures;
    UnmatchedPolicy unmatched = UnmatchedPolicy::Error;
    // Source label column -> category, for datasets that already carry one column per category.
    std::map<std::string, RetrofitCategory> label_columns;

    /// Throws ConfigError when a normalised string appears in two categories.
    void validate() const;

    /// Recorded UK EPC improvement descriptions and the Latvian label columns.
    static MeasureMap defaults();
};

/// Lower-case with runs of whitespace collapsed to one space and ends trimmed.
std::string normalize_measure(std::string_view s);

struct MappingResult {
    RetrofitLabels labels;
    std::vector<std::string> unmatched;  // only filled under WarnAndIgnore
};

/// Label c is set iff any raw string belongs to category c. Unknown strings throw
/// ConfigError under the Error policy.
MappingResult map_measures(const std::vector<std::string>& raw, const MeasureMap& map);

void to_json(nlohmann::json& j, const MeasureMap& m);
void from_json(const nlohmann::json& j, MeasureMap& m);
MeasureMap load_measure_map(const std::filesystem::path& path);

}  // namespace retrofit
