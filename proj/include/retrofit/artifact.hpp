#pragma once

#include "retrofit/features.hpp"
#include "retrofit/mlp.hpp"
#include "retrofit/schema.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace retrofit {

struct HpoSummary {
    int trials = 0;
    int completed = 0;
    int pruned = 0;
    double best_value = 0;  // validation loss of the winner
    MLPConfig winner;
};

/// Where the training rows came from.
struct Provenance {
    std::string training_data = "real";  // "real" or "augmented"
    std::size_t real_rows = 0;
    std::size_t synthetic_rows = 0;
    std::string split_digest;                     // digest of the persisted test-index file
    std::optional<std::string> manifest_digest;   // SHA-256 of the generation manifest
    std::string note;
};

inline constexpr int kArtifactFormatVersion = 1;

/// Everything inference and explanation need; no other file is read at serve time.
struct ModelArtifact {
    DatasetSchema schema;
    FeaturePipeline pipeline;
    MLPModel model;
    MLPConfig training_config;
    std::optional<HpoSummary> hpo;
    Provenance provenance;
    double threshold = 0.5;
    Matrix background;  // model-input rows used as the explanation baseline
    std::string id;     // checksum prefix, assigned by save/load

    Matrix predict(const std::vector<BuildingRecord>& records) const;
};

/// Single JSON document: {format, format_version, checksum, payload}. The checksum is the
/// SHA-256 of the serialised payload; parameter blocks are base64 little-endian doubles.
std::string serialize_artifact(const ModelArtifact& artifact);
/// Throws VersionError for unknown format versions, ChecksumError for corrupt or
/// truncated documents, ArtifactError for schema fingerprint mismatches.
ModelArtifact deserialize_artifact(std::string_view text);

/// Writes the artifact and returns its id.
std::string save_model(const ModelArtifact& artifact, const std::filesystem::path& path);
ModelArtifact load_model(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const HpoSummary& s);
void from_json(const nlohmann::json& j, HpoSummary& s);
void to_json(nlohmann::json& j, const Provenance& p);
void from_json(const nlohmann::json& j, Provenance& p);

}  // namespace retrofit
