#pragma once

#include "retrofit/common.hpp"
#include "retrofit/schema.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace retrofit {

/// Fixed ordinal codes for energy classes: A+:0, A:1, ... F:6, G:7.
const std::vector<std::string>& energy_class_order();
std::optional<int> energy_class_code(std::string_view cls);

struct OrdinalEncoder {
    std::string column;
    std::vector<std::string> categories;  // position == code
    bool energy_class = false;

    /// Throws UnseenCategoryError.
    int encode(std::string_view value) const;
    bool contains(std::string_view value) const;
};

struct MinMaxScaler {
    std::string column;
    double min = 0;
    double max = 0;

    /// Constant columns map to 0. Values outside [min, max] are clamped and `clamped` set.
    double transform(double x, bool* clamped = nullptr) const;
};

/// Per-band upper consumption limits (kWh/m^2) of each energy class.
struct EnergyClassTable {
    struct Band {
        double low = 0;
        double high = std::numeric_limits<double>::infinity();  // inclusive
    };
    std::vector<Band> bands;
    std::vector<std::string> classes;          // best to worst
    std::map<std::string, std::vector<double>> limits;  // class -> per-band limit
    std::vector<std::string> surrogate_classes;  // limits not present in the source table

    /// Band chosen for a heated area: first band whose upper edge is >= area.
    /// Areas below the first band's lower edge fall in the first band.
    std::size_t band_for(double heated_area) const;
    double limit(std::string_view cls, double heated_area) const;

    void validate() const;

    /// Latvian residential table; F uses 1.25x the E limit in each band.
    static EnergyClassTable latvia();
};

inline constexpr double kOpenClassSurrogateFactor = 1.25;

/// E_initial - E_final for the band selected by `heated_area`; positive means improvement.
double energy_performance_delta(const EnergyClassTable& table, std::string_view initial_class,
                                std::string_view final_class, double heated_area);

inline constexpr const char* kDeltaFeatureName = "Energy performance delta";

struct DeltaFeatureSpec {
    std::string initial_column;
    std::string final_column;
    std::string area_column;
    EnergyClassTable table;
};

struct FeatureTransform {
    std::string name;
    ColumnKind kind = ColumnKind::Numerical;
    std::optional<OrdinalEncoder> encoder;  // categorical
    std::optional<MinMaxScaler> scaler;     // numerical (incl. the delta feature)
};

/// Fitted encoders and scalers, in model input order. The delta feature, when enabled,
/// is appended after the schema's feature columns.
struct FeaturePipeline {
    std::vector<FeatureTransform> transforms;
    std::optional<DeltaFeatureSpec> delta;

    std::vector<std::string> feature_names() const;
    std::size_t input_dim() const { return transforms.size(); }
    const FeatureTransform& transform(std::string_view name) const;
};

struct TransformResult {
    Matrix x;
    std::vector<std::string> warnings;
};

/// Fits encoders (first-appearance order, or the fixed energy-class order) and min-max
/// scalers on training records.
FeaturePipeline fit_transforms(const std::vector<BuildingRecord>& train, const DatasetSchema& schema,
                               std::optional<DeltaFeatureSpec> delta = std::nullopt);

/// Encodes records into the model input matrix. Unseen categories throw
/// UnseenCategoryError; out-of-range numerics are clamped to [0, 1] with a warning.
TransformResult apply_transforms(const std::vector<BuildingRecord>& records, const DatasetSchema& schema,
                                 const FeaturePipeline& pipeline);

/// Delta feature value for one record; the record must carry the three source columns.
double record_delta(const BuildingRecord& record, const DatasetSchema& schema, const DeltaFeatureSpec& spec);

/// Label matrix (rows x 4) in schema label order.
Matrix label_matrix(const std::vector<BuildingRecord>& records, const DatasetSchema& schema);

void to_json(nlohmann::json& j, const EnergyClassTable& table);
void from_json(const nlohmann::json& j, EnergyClassTable& table);
void to_json(nlohmann::json& j, const FeaturePipeline& pipeline);
void from_json(const nlohmann::json& j, FeaturePipeline& pipeline);

EnergyClassTable load_class_table(const std::filesystem::path& path);

}  // namespace retrofit
