#pragma once

#include "retrofit/schema.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace retrofit {

/// One column's non-null values, numeric or as category strings (booleans as "true"/"false").
struct ColumnData {
    ColumnKind kind = ColumnKind::Numerical;
    std::vector<double> numbers;
    std::vector<std::string> categories;

    bool discrete() const { return kind != ColumnKind::Numerical; }
    std::size_t size() const { return discrete() ? categories.size() : numbers.size(); }
};

ColumnData column_data(const std::vector<BuildingRecord>& records, const DatasetSchema& schema,
                       std::string_view column);

/// 1 - sup_x |ECDF_real(x) - ECDF_synth(x)|.
double ks_complement(std::span<const double> real, std::span<const double> synth);

/// 1 - 0.5 * sum_c |p_real(c) - p_synth(c)| over the union of categories.
double tv_complement(const std::vector<std::string>& real, const std::vector<std::string>& synth);

double pearson(std::span<const double> a, std::span<const double> b);

/// 1 - |rho_real - rho_synth| / 2, or nullopt when a column has zero variance.
std::optional<double> correlation_similarity(std::span<const double> real_a, std::span<const double> real_b,
                                             std::span<const double> synth_a, std::span<const double> synth_b);

inline constexpr int kContingencyBins = 10;

/// Equal-frequency bin edges computed on the real column (at most `bins` - 1 unique edges).
std::vector<double> quantile_edges(std::span<const double> real, int bins = kContingencyBins);

/// 1 - 0.5 * sum over joint cells |p_real - p_synth|. Numerical columns are binned with
/// quantile edges from the real column. Columns of a pair must have equal lengths.
double contingency_similarity(const ColumnData& real_a, const ColumnData& real_b, const ColumnData& synth_a,
                              const ColumnData& synth_b);

struct ColumnScore {
    std::string column;
    std::string metric;  // "KSComplement" or "TVComplement"
    double score = 0;
    bool label = false;
};

struct PairScore {
    std::string column_a, column_b;
    std::string metric;  // "CorrelationSimilarity" or "ContingencySimilarity"
    std::optional<double> score;  // nullopt when skipped
    std::string note;
};

struct QualityReport {
    std::vector<ColumnScore> column_scores;
    std::vector<PairScore> pair_scores;
    double column_shapes = 0;
    double pair_trends = 0;
    double overall = 0;
    double column_shapes_without_labels = 0;
};

/// Arithmetic mean of the two sub-scores.
double overall_score(double column_shapes, double pair_trends);

struct QualityOptions {
    bool exclude_labels = false;  // drop label columns from shapes and pairs
};

/// Shape score per feature/label column and trend score per unordered pair.
/// Both record sets must follow `schema`; throws DataError on width mismatches.
QualityReport quality_report(const DatasetSchema& schema, const std::vector<BuildingRecord>& real,
                             const std::vector<BuildingRecord>& synth, const QualityOptions& options = {});

struct DiagnosticCheck {
    std::string column;
    std::string check;  // present | kind | categories | range
    bool passed = false;
    std::string detail;
};

struct DiagnosticReport {
    std::vector<DiagnosticCheck> checks;
    double score = 0;  // fraction of passed checks
};

DiagnosticReport diagnostic_report(const DatasetSchema& real_schema, const std::vector<BuildingRecord>& real,
                                   const DatasetSchema& synth_schema, const std::vector<BuildingRecord>& synth);

void to_json(nlohmann::json& j, const QualityReport& r);
void to_json(nlohmann::json& j, const DiagnosticReport& r);
std::string column_scores_csv(const QualityReport& r);

}  // namespace retrofit
