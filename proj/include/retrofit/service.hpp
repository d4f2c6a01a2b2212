#pragma once

#include "retrofit/artifact.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace retrofit {

/// A request field that is missing or cannot be used.
class FieldError : public Error {
public:
    FieldError(std::string field, const std::string& message) : Error(message), field_(std::move(field)) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Input field the service expects in RecommendRequest.features.
struct InputField {
    std::string name;
    ColumnKind kind = ColumnKind::Numerical;
    std::optional<std::string> unit;
    std::vector<std::string> options;  // known categories for categorical fields
    bool energy_class = false;
};

/// Request fields: schema features plus energy-delta source columns, minus the column filled
/// from target_energy_class.
std::vector<InputField> input_fields(const ModelArtifact& artifact);

/// Builds a record from {"features": {...}, "target_energy_class": "..."}.
/// Throws FieldError naming the offending field.
BuildingRecord record_from_request(const ModelArtifact& artifact, const nlohmann::json& request);

struct Recommendation {
    std::vector<double> probabilities;
    std::vector<bool> recommended;
    double threshold = 0.5;
    std::string model_id;
    std::vector<double> input;  // model-input row
};

Recommendation recommend(const ModelArtifact& artifact, const BuildingRecord& record);

struct HttpResult {
    int status = 200;
    nlohmann::json body;
};

struct ServiceOptions {
    int sampled_permutations = 2000;  // used above the exact-enumeration feature limit
    std::uint64_t seed = 0;
};

/// Request handlers over an immutable artifact snapshot; load() swaps snapshots atomically.
class RecommendationService {
public:
    explicit RecommendationService(ServiceOptions options = {}) : options_(options) {}

    void load(std::shared_ptr<const ModelArtifact> artifact);
    std::shared_ptr<const ModelArtifact> snapshot() const;

    HttpResult recommend(std::string_view body) const;
    HttpResult explain(std::string_view body) const;
    HttpResult model_info() const;

private:
    ServiceOptions options_;
    mutable std::mutex mutex_;
    std::shared_ptr<const ModelArtifact> artifact_;
};

inline constexpr const char* kListenEnv = "RETROFIT_LISTEN";
inline constexpr const char* kDefaultListen = "127.0.0.1:8080";

struct ListenAddress {
    std::string host;
    int port = 8080;
};

/// Parses "host:port"; an empty value yields the default address.
ListenAddress parse_listen_address(std::string_view text);
/// RETROFIT_LISTEN, or the default.
ListenAddress listen_address_from_env();

/// Serves POST /recommend, POST /explain and GET /model/info until the process stops.
void serve(const RecommendationService& service, const ListenAddress& address);

}  // namespace retrofit
