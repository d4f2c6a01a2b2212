#pragma once

#include "retrofit/artifact.hpp"
#include "retrofit/metrics.hpp"
#include "retrofit/schema.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace retrofit {

/// Raised when a persisted split no longer matches its dataset or has been edited.
class IsolationError : public Error {
public:
    using Error::Error;
};

/// SHA-256 of the dataset's canonical CSV form.
std::string dataset_digest(const DatasetSchema& schema, const std::vector<BuildingRecord>& records);

/// Persisted train/validation/test partition of a real dataset.
struct SplitRecord {
    SplitSpec spec;
    std::size_t rows = 0;
    std::string dataset_digest;
    SplitIndices indices;
    std::string digest;  // over everything above

    std::string compute_digest() const;
};

SplitRecord make_split_record(const DatasetSchema& schema, const std::vector<BuildingRecord>& records,
                              const SplitSpec& spec);

/// Throws IsolationError when the record was edited, when it does not match the dataset,
/// or when its index sets overlap or fall outside the dataset.
void verify_split(const SplitRecord& split, const DatasetSchema& schema, const std::vector<BuildingRecord>& records);

void save_split(const SplitRecord& split, const std::filesystem::path& path);
SplitRecord load_split(const std::filesystem::path& path);

struct DataPartition {
    std::vector<BuildingRecord> train;
    std::vector<BuildingRecord> val;
    std::vector<BuildingRecord> test;  // always real rows from the split's test indices
    std::size_t synthetic_train = 0;
    std::size_t synthetic_val = 0;
};

/// Verifies the split, then builds the partitions. Synthetic rows are shuffled with the
/// split seed and divided between train and validation with the split's validation fraction;
/// they never enter the test partition.
DataPartition partition(const DatasetSchema& schema, const std::vector<BuildingRecord>& real, const SplitRecord& split,
                        const std::vector<BuildingRecord>& synthetic = {});

inline constexpr std::size_t kDefaultBackgroundRows = 32;

struct TrainOptions {
    MLPConfig mlp;
    std::optional<DeltaFeatureSpec> delta;
    double threshold = 0.5;
    std::size_t background_rows = kDefaultBackgroundRows;
    std::optional<HpoSummary> hpo;
    std::optional<std::string> manifest_digest;
};

struct TrainOutcome {
    ModelArtifact artifact;
    TrainReport report;
    MetricsReport test_metrics;
    Matrix test_probabilities;
    Matrix test_truth;
};

/// Fits transforms on the training partition, trains the MLP with early stopping on the
/// validation partition and evaluates on the real test rows.
TrainOutcome train_model(const DatasetSchema& schema, const std::vector<BuildingRecord>& real,
                         const SplitRecord& split, const std::vector<BuildingRecord>& synthetic,
                         const TrainOptions& options);

/// Metrics of an artifact on the test rows of `split`.
MetricsReport evaluate_model(const ModelArtifact& artifact, const std::vector<BuildingRecord>& real,
                             const SplitRecord& split);

void to_json(nlohmann::json& j, const SplitRecord& s);
void from_json(const nlohmann::json& j, SplitRecord& s);

}  // namespace retrofit
