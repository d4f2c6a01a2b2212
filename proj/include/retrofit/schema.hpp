#pragma once

#include "retrofit/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace retrofit {

enum class ColumnKind { Numerical, Categorical, Boolean };
enum class ColumnRole { Feature, Label, Ignored };

std::string to_string(ColumnKind kind);
std::string to_string(ColumnRole role);

struct ColumnSpec {
    std::string name;
    ColumnKind kind = ColumnKind::Numerical;
    std::optional<std::string> unit;
    ColumnRole role = ColumnRole::Feature;
    // Categorical column holding energy classes (A+ ... G); encoded with the fixed class order.
    bool energy_class = false;
};

/// Ordered column list plus the harmonisation rules applied while loading.
///
/// Invariants: names are unique and exactly four columns carry the label role.
/// The label columns' schema order is the label index order
/// (fabric, controls, DHW, heating system).
struct DatasetSchema {
    std::string id;
    int version = 1;
    std::vector<ColumnSpec> columns;
    // Column that receives the user's target energy class at inference time.
    std::optional<std::string> target_class_column;
    // Per-column raw-string rewrites applied before type parsing ("Ground" -> "0").
    std::map<std::string, std::map<std::string, std::string>> value_map;
    std::vector<std::string> null_tokens = {"", "NA", "N/A", "NULL", "null", "NaN", "nan"};

    void validate() const;

    std::optional<std::size_t> index_of(std::string_view name) const;
    std::size_t require_index(std::string_view name) const;
    const ColumnSpec& column(std::string_view name) const;

    std::vector<std::size_t> feature_indices() const;
    std::vector<std::size_t> label_indices() const;
    std::vector<std::string> feature_names() const;
    std::vector<std::string> label_names() const;

    /// Returns a copy with `name` removed from the feature set (role -> ignored), version bumped.
    DatasetSchema without_feature(std::string_view name) const;

    /// SHA-256 over the canonical JSON form.
    std::string fingerprint() const;
};

void to_json(nlohmann::json& j, const DatasetSchema& schema);
void from_json(const nlohmann::json& j, DatasetSchema& schema);

DatasetSchema load_schema(const std::filesystem::path& path);
void save_schema(const DatasetSchema& schema, const std::filesystem::path& path);

/// A single typed cell; monostate is a null.
using Cell = std::variant<std::monostate, double, std::string, bool>;

inline bool is_null(const Cell& c) { return std::holds_alternative<std::monostate>(c); }
std::string cell_to_string(const Cell& c);

struct BuildingRecord {
    std::vector<Cell> values;  // aligned with DatasetSchema::columns

    bool operator==(const BuildingRecord&) const = default;
};

/// Labels of a record, in schema label order. Throws DataError on nulls.
RetrofitLabels record_labels(const BuildingRecord& record, const DatasetSchema& schema);

struct RejectedRow {
    std::size_t row = 0;  // 0-based data row index (header excluded)
    std::string column;
    std::string value;
    std::string reason;
};

struct LoadResult {
    std::vector<BuildingRecord> records;
    std::vector<std::size_t> source_rows;  // data row index of each kept record
    std::vector<RejectedRow> rejected;
    std::vector<std::string> warnings;
};

/// Parses one raw field against a column kind. Returns nullopt when unparseable.
std::optional<Cell> parse_cell(std::string_view raw, const ColumnSpec& spec,
                               const DatasetSchema& schema);

/// Loads a CSV file (comma separated, double-quote escaping, header row).
/// Header names must match the schema's column names in any order; missing or extra
/// columns throw SchemaError. Rows with unparseable cells are reported in `rejected`.
LoadResult load_dataset(const std::filesystem::path& path, const DatasetSchema& schema);
LoadResult parse_dataset(std::string_view csv_text, const DatasetSchema& schema);

/// Writes records in schema column order.
void write_dataset(const std::filesystem::path& path, const DatasetSchema& schema,
                   const std::vector<BuildingRecord>& records);
std::string format_dataset(const DatasetSchema& schema, const std::vector<BuildingRecord>& records);

struct DropReport {
    std::map<std::string, std::size_t> drops_per_column;  // only columns with at least one null
    std::size_t dropped_records = 0;
    std::size_t kept_records = 0;
};

struct DropResult {
    std::vector<BuildingRecord> kept;
    std::vector<std::size_t> kept_indices;
    DropReport report;
};

/// Removes records with a null in any required column. Empty `required_columns` means all
/// feature and label columns. A record null in several columns counts once per column.
DropResult drop_nulls(const std::vector<BuildingRecord>& records, const DatasetSchema& schema,
                      const std::vector<std::string>& required_columns = {});

inline constexpr double kDefaultZScoreThreshold = 4.0;

/// Indices of records whose |x - mean| / population_std exceeds `threshold`.
/// Advisory only: nothing is removed. Returns empty for fewer than two values or zero variance.
std::vector<std::size_t> zscore_flags(const std::vector<BuildingRecord>& records,
                                      const DatasetSchema& schema, std::string_view column,
                                      double threshold = kDefaultZScoreThreshold);

struct SplitSpec {
    std::uint64_t seed = 0;
    double test_fraction = 0.25;
    double val_fraction_of_rest = 0.25;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
};

/// Deterministic train/validation/test partition of `n` items.
/// |test| = round(test_fraction * n); |val| = round(val_fraction * (n - |test|)).
SplitIndices split(std::size_t n, const SplitSpec& spec);

template <typename T>
std::vector<T> take(const std::vector<T>& items, const std::vector<std::size_t>& indices) {
    std::vector<T> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(items.at(i));
    return out;
}

void to_json(nlohmann::json& j, const DropReport& report);
void to_json(nlohmann::json& j, const RejectedRow& row);

}  // namespace retrofit
