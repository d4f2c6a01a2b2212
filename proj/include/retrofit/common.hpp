#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace retrofit {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SchemaError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

/// Raised when a categorical value was never seen while fitting an encoder.
class UnseenCategoryError : public Error {
public:
    UnseenCategoryError(std::string column, std::string value)
        : Error("unseen category '" + value + "' in column '" + column + "'"),
          column_(std::move(column)), value_(std::move(value)) {}

    const std::string& column() const noexcept { return column_; }
    const std::string& value() const noexcept { return value_; }

private:
    std::string column_;
    std::string value_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    using Error::Error;
};

class ArtifactError : public Error {
public:
    using Error::Error;
};

class ChecksumError : public ArtifactError {
public:
    using ArtifactError::ArtifactError;
};

class VersionError : public ArtifactError {
public:
    using ArtifactError::ArtifactError;
};

/// The four retrofit categories, in label-index order.
enum class RetrofitCategory : int {
    BuildingFabric = 0,
    HeatingLightingControls = 1,
    DhwUpgrades = 2,
    HeatingSystemInstallation = 3,
};

inline constexpr int kNumLabels = 4;

inline constexpr std::array<std::string_view, kNumLabels> kCategoryKeys = {
    "building_fabric", "heating_lighting_controls", "dhw_upgrades", "heating_system_installation"};

inline constexpr std::array<std::string_view, kNumLabels> kCategoryTitles = {
    "Building Fabric Interventions", "Heating and Lighting Controls", "DHW Upgrades",
    "Heating System Installation"};

inline constexpr std::array<std::string_view, kNumLabels> kCategoryDescriptions = {
    "Upgrades to the building envelope such as insulation of walls, roof and floors, and "
    "upgrades of doors and windows.",
    "Enhancements or replacements of ventilation, lighting and heating control systems to "
    "optimise energy use.",
    "Improvements to domestic hot water production, storage and distribution systems.",
    "Upgrades or replacements of heating systems using renewable sources or more efficient "
    "technologies."};

/// One boolean per retrofit category.
struct RetrofitLabels {
    std::array<bool, kNumLabels> values{};

    bool operator==(const RetrofitLabels&) const = default;
    bool& operator[](RetrofitCategory c) { return values[static_cast<int>(c)]; }
    bool operator[](RetrofitCategory c) const { return values[static_cast<int>(c)]; }
};

/// Parses a category key (e.g. "dhw_upgrades"); throws ConfigError when unknown.
RetrofitCategory category_from_key(std::string_view key);

/// Mixes a base seed with a stream index into a new 64-bit seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace retrofit
