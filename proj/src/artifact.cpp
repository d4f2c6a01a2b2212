#include "retrofit/artifact.hpp"

#include "retrofit/codec.hpp"
#include "retrofit/hpo.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace retrofit {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "retrofit-model";
constexpr std::size_t kIdLength = 12;

json matrix_block(const Matrix& m) {
    return {{"rows", m.rows()}, {"cols", m.cols()},
            {"data", encode_doubles({m.data(), static_cast<std::size_t>(m.size())})}};
}

Matrix matrix_from_block(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = decode_doubles(j.at("data").get<std::string>());
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size())
        throw ArtifactError("matrix block has inconsistent dimensions");
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

json model_block(const MLPModel& model) {
    json layers = json::array();
    for (const auto& l : model.layers) layers.push_back({{"weights", matrix_block(l.weights)}, {"bias", matrix_block(l.bias)}});
    return layers;
}

MLPModel model_from_block(const json& j) {
    MLPModel m;
    for (const auto& lj : j) {
        DenseLayer l;
        l.weights = matrix_from_block(lj.at("weights"));
        const Matrix b = matrix_from_block(lj.at("bias"));
        if (b.rows() != 1 || b.cols() != l.weights.cols()) throw ArtifactError("bias block does not match its layer");
        l.bias = b.row(0);
        if (!m.layers.empty() && m.layers.back().weights.cols() != l.weights.rows())
            throw ArtifactError("layer shapes do not chain");
        m.layers.push_back(std::move(l));
    }
    if (m.layers.empty()) throw ArtifactError("artifact has no layers");
    return m;
}

json payload_of(const ModelArtifact& a) {
    json p = {{"schema", a.schema},
              {"schema_fingerprint", a.schema.fingerprint()},
              {"pipeline", a.pipeline},
              {"model", model_block(a.model)},
              {"training_config", a.training_config},
              {"provenance", a.provenance},
              {"threshold", a.threshold},
              {"background", matrix_block(a.background)}};
    p["hpo"] = a.hpo ? json(*a.hpo) : json(nullptr);
    return p;
}

}  // namespace

Matrix ModelArtifact::predict(const std::vector<BuildingRecord>& records) const {
    return model.predict(apply_transforms(records, schema, pipeline).x);
}

std::string serialize_artifact(const ModelArtifact& artifact) {
    if (artifact.model.input_dim() != static_cast<int>(artifact.pipeline.input_dim()))
        throw ArtifactError("model input width does not match the feature pipeline");
    if (artifact.model.output_dim() != kNumLabels) throw ArtifactError("model must have four outputs");
    const auto payload = payload_of(artifact).dump();
    std::ostringstream out;
    out << "{\"format\":\"" << kFormatName << "\",\"format_version\":" << kArtifactFormatVersion
        << ",\"checksum\":\"" << sha256_hex(payload) << "\",\"payload\":" << payload << "}\n";
    return out.str();
}

ModelArtifact deserialize_artifact(std::string_view text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception&) {
        throw ChecksumError("model artifact is truncated or corrupt");
    }
    if (!doc.is_object() || doc.value("format", std::string()) != kFormatName)
        throw ArtifactError("not a model artifact");
    const int version = doc.value("format_version", 0);
    if (version > kArtifactFormatVersion)
        throw VersionError("model artifact format version " + std::to_string(version) +
                           " is newer than the supported version " + std::to_string(kArtifactFormatVersion));
    if (version < 1) throw VersionError("model artifact has an invalid format version");
    if (!doc.contains("payload") || !doc.contains("checksum")) throw ChecksumError("model artifact lacks a checksum");

    const auto& payload = doc["payload"];
    const auto checksum = doc["checksum"].get<std::string>();
    if (sha256_hex(payload.dump()) != checksum) throw ChecksumError("model artifact checksum mismatch");

    ModelArtifact a;
    try {
        a.schema = payload.at("schema").get<DatasetSchema>();
        if (a.schema.fingerprint() != payload.at("schema_fingerprint").get<std::string>())
            throw ArtifactError("schema fingerprint mismatch");
        a.pipeline = payload.at("pipeline").get<FeaturePipeline>();
        a.model = model_from_block(payload.at("model"));
        a.training_config = payload.at("training_config").get<MLPConfig>();
        a.provenance = payload.at("provenance").get<Provenance>();
        a.threshold = payload.at("threshold").get<double>();
        a.background = matrix_from_block(payload.at("background"));
        if (!payload.at("hpo").is_null()) a.hpo = payload["hpo"].get<HpoSummary>();
    } catch (const json::exception& e) {
        throw ArtifactError(std::string("malformed model artifact: ") + e.what());
    }
    if (a.model.input_dim() != static_cast<int>(a.pipeline.input_dim()))
        throw ArtifactError("model input width does not match the feature pipeline");
    if (a.background.rows() > 0 && a.background.cols() != a.model.input_dim())
        throw ArtifactError("background width does not match the model");
    a.id = checksum.substr(0, kIdLength);
    return a;
}

std::string save_model(const ModelArtifact& artifact, const std::filesystem::path& path) {
    const auto text = serialize_artifact(artifact);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ArtifactError("cannot write model artifact '" + path.string() + "'");
    out << text;
    if (!out) throw ArtifactError("failed writing model artifact '" + path.string() + "'");
    const auto pos = text.find("\"checksum\":\"") + 12;
    return text.substr(pos, kIdLength);
}

ModelArtifact load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArtifactError("cannot open model artifact '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_artifact(buf.str());
}

void to_json(json& j, const HpoSummary& s) {
    j = {{"trials", s.trials}, {"completed", s.completed}, {"pruned", s.pruned},
         {"best_value", s.best_value}, {"winner", s.winner}};
}

void from_json(const json& j, HpoSummary& s) {
    s.trials = j.at("trials").get<int>();
    s.completed = j.value("completed", 0);
    s.pruned = j.value("pruned", 0);
    s.best_value = j.at("best_value").get<double>();
    s.winner = j.at("winner").get<MLPConfig>();
}

void to_json(json& j, const Provenance& p) {
    j = {{"training_data", p.training_data}, {"real_rows", p.real_rows}, {"synthetic_rows", p.synthetic_rows},
         {"split_digest", p.split_digest}, {"note", p.note}};
    j["manifest_digest"] = p.manifest_digest ? json(*p.manifest_digest) : json(nullptr);
}

void from_json(const json& j, Provenance& p) {
    p.training_data = j.at("training_data").get<std::string>();
    p.real_rows = j.value("real_rows", std::size_t{0});
    p.synthetic_rows = j.value("synthetic_rows", std::size_t{0});
    p.split_digest = j.value("split_digest", std::string());
    p.note = j.value("note", std::string());
    if (j.contains("manifest_digest") && !j["manifest_digest"].is_null())
        p.manifest_digest = j["manifest_digest"].get<std::string>();
}

}  // namespace retrofit
