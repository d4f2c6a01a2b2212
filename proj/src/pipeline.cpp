#include "retrofit/pipeline.hpp"

#include "retrofit/codec.hpp"
#include "retrofit/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

namespace retrofit {

using nlohmann::json;

namespace {

json split_body(const SplitRecord& s) {
    return {{"seed", s.spec.seed},
            {"test_fraction", s.spec.test_fraction},
            {"val_fraction_of_rest", s.spec.val_fraction_of_rest},
            {"rows", s.rows},
            {"dataset_digest", s.dataset_digest},
            {"train", s.indices.train},
            {"val", s.indices.val},
            {"test", s.indices.test}};
}

Matrix stack_rows(const Matrix& x, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    return out;
}

}  // namespace

std::string dataset_digest(const DatasetSchema& schema, const std::vector<BuildingRecord>& records) {
    return sha256_hex(format_dataset(schema, records));
}

std::string SplitRecord::compute_digest() const { return sha256_hex(split_body(*this).dump()); }

SplitRecord make_split_record(const DatasetSchema& schema, const std::vector<BuildingRecord>& records,
                              const SplitSpec& spec) {
    SplitRecord s;
    s.spec = spec;
    s.rows = records.size();
    s.dataset_digest = dataset_digest(schema, records);
    s.indices = split(records.size(), spec);
    s.digest = s.compute_digest();
    return s;
}

void verify_split(const SplitRecord& s, const DatasetSchema& schema, const std::vector<BuildingRecord>& records) {
    if (s.compute_digest() != s.digest) throw IsolationError("test-index file digest mismatch: the split was modified");
    if (s.rows != records.size())
        throw IsolationError("split covers " + std::to_string(s.rows) + " rows but the dataset has " +
                             std::to_string(records.size()));
    if (dataset_digest(schema, records) != s.dataset_digest)
        throw IsolationError("dataset digest differs from the one recorded with the split");
    std::set<std::size_t> seen;
    for (const auto* part : {&s.indices.train, &s.indices.val, &s.indices.test}) {
        for (auto i : *part) {
            if (i >= s.rows) throw IsolationError("split index out of range");
            if (!seen.insert(i).second) throw IsolationError("split partitions overlap at row " + std::to_string(i));
        }
    }
    if (seen.size() != s.rows) throw IsolationError("split does not cover every row");
}

void save_split(const SplitRecord& s, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write split file '" + path.string() + "'");
    out << json(s).dump(1) << '\n';
}

SplitRecord load_split(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IsolationError("cannot open split file '" + path.string() + "'");
    try {
        return json::parse(in).get<SplitRecord>();
    } catch (const json::exception& e) {
        throw IsolationError("malformed split file '" + path.string() + "': " + e.what());
    }
}

DataPartition partition(const DatasetSchema& schema, const std::vector<BuildingRecord>& real, const SplitRecord& s,
                        const std::vector<BuildingRecord>& synthetic) {
    verify_split(s, schema, real);
    DataPartition p;
    p.train = take(real, s.indices.train);
    p.val = take(real, s.indices.val);
    p.test = take(real, s.indices.test);
    if (!synthetic.empty()) {
        std::vector<std::size_t> order(synthetic.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(derive_seed(s.spec.seed, 0x5e7));
        std::shuffle(order.begin(), order.end(), rng);
        const auto n_val = static_cast<std::size_t>(
            std::lround(s.spec.val_fraction_of_rest * static_cast<double>(synthetic.size())));
        for (std::size_t i = 0; i < order.size(); ++i) {
            const auto& row = synthetic[order[i]];
            if (row.values.size() != schema.columns.size())
                throw DataError("synthetic record width does not match the schema");
            if (i < n_val) {
                p.val.push_back(row);
                ++p.synthetic_val;
            } else {
                p.train.push_back(row);
                ++p.synthetic_train;
            }
        }
    }
    return p;
}

TrainOutcome train_model(const DatasetSchema& schema, const std::vector<BuildingRecord>& real, const SplitRecord& s,
                         const std::vector<BuildingRecord>& synthetic, const TrainOptions& options) {
    auto parts = partition(schema, real, s, synthetic);
    auto pipeline = fit_transforms(parts.train, schema, options.delta);
    const Matrix x_train = apply_transforms(parts.train, schema, pipeline).x;
    const Matrix x_val = apply_transforms(parts.val, schema, pipeline).x;
    const Matrix y_train = label_matrix(parts.train, schema);
    const Matrix y_val = label_matrix(parts.val, schema);
    auto result = train(x_train, y_train, options.mlp, x_val, y_val);

    TrainOutcome out;
    auto& a = out.artifact;
    a.schema = schema;
    a.pipeline = std::move(pipeline);
    a.model = std::move(result.model);
    a.training_config = options.mlp;
    a.hpo = options.hpo;
    a.threshold = options.threshold;
    a.provenance.training_data = synthetic.empty() ? "real" : "augmented";
    a.provenance.real_rows = s.indices.train.size() + s.indices.val.size();
    a.provenance.synthetic_rows = synthetic.size();
    a.provenance.split_digest = s.digest;
    a.provenance.manifest_digest = options.manifest_digest;
    a.provenance.note = synthetic.empty()
                            ? "trained on real rows only"
                            : "train and validation partitions extended with synthetic rows; test rows are real";

    std::vector<std::size_t> rows(static_cast<std::size_t>(x_train.rows()));
    std::iota(rows.begin(), rows.end(), 0);
    std::mt19937_64 rng(derive_seed(options.mlp.seed, 0xb6));
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(std::min(rows.size(), options.background_rows));
    std::sort(rows.begin(), rows.end());
    a.background = stack_rows(x_train, rows);

    out.report = std::move(result.report);
    out.test_truth = label_matrix(parts.test, schema);
    out.test_probabilities = a.model.predict(apply_transforms(parts.test, schema, a.pipeline).x);
    out.test_metrics = evaluate(binarize(out.test_probabilities, a.threshold), out.test_truth);
    return out;
}

MetricsReport evaluate_model(const ModelArtifact& artifact, const std::vector<BuildingRecord>& real,
                             const SplitRecord& s) {
    verify_split(s, artifact.schema, real);
    const auto test = take(real, s.indices.test);
    return evaluate(binarize(artifact.predict(test), artifact.threshold), label_matrix(test, artifact.schema));
}

void to_json(json& j, const SplitRecord& s) {
    j = split_body(s);
    j["digest"] = s.digest;
}

void from_json(const json& j, SplitRecord& s) {
    s.spec.seed = j.at("seed").get<std::uint64_t>();
    s.spec.test_fraction = j.at("test_fraction").get<double>();
    s.spec.val_fraction_of_rest = j.at("val_fraction_of_rest").get<double>();
    s.rows = j.at("rows").get<std::size_t>();
    s.dataset_digest = j.at("dataset_digest").get<std::string>();
    s.indices.train = j.at("train").get<std::vector<std::size_t>>();
    s.indices.val = j.at("val").get<std::vector<std::size_t>>();
    s.indices.test = j.at("test").get<std::vector<std::size_t>>();
    s.digest = j.at("digest").get<std::string>();
}

}  // namespace retrofit
