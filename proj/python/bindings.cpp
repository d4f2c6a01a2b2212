#include "retrofit/features.hpp"
#include "retrofit/measures.hpp"
#include "retrofit/metrics.hpp"
#include "retrofit/pipeline.hpp"
#include "retrofit/quality.hpp"
#include "retrofit/service.hpp"

#include <nlohmann/json.hpp>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <memory>

namespace py = pybind11;
using namespace retrofit;
using nlohmann::json;

namespace {

// JSON crosses the boundary as text; the Python package decodes it.
using Response = std::pair<int, std::string>;

Response to_response(const HttpResult& r) { return {r.status, r.body.dump()}; }

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    return Eigen::Map<const Matrix>(a.data(), a.shape(0), a.shape(1));
}

std::string train_from_files(const std::string& schema_path, const std::string& data_path, const std::string& model_out,
                  std::uint64_t split_seed, const std::string& mlp_json, const std::string& delta_path) {
    const auto schema = load_schema(schema_path);
    const auto loaded = load_dataset(data_path, schema);
    if (!loaded.rejected.empty()) throw DataError(data_path + ": rejected rows; run the ingest command first");
    const auto split = make_split_record(schema, loaded.records, {split_seed, 0.25, 0.25});
    TrainOptions opts;
    if (!mlp_json.empty()) {
        const auto j = json::parse(mlp_json);
        opts.mlp.layer_sizes = j.value("layer_sizes", opts.mlp.layer_sizes);
        opts.mlp.learning_rate = j.value("learning_rate", opts.mlp.learning_rate);
        opts.mlp.batch_size = j.value("batch_size", opts.mlp.batch_size);
        opts.mlp.max_epochs = j.value("max_epochs", opts.mlp.max_epochs);
        opts.mlp.patience = j.value("patience", opts.mlp.patience);
        opts.mlp.seed = j.value("seed", opts.mlp.seed);
    }
    if (!delta_path.empty()) {
        std::ifstream in(delta_path);
        const auto j = json::parse(in);
        opts.delta = DeltaFeatureSpec{j.at("initial_column"), j.at("final_column"), j.at("area_column"),
                                      EnergyClassTable::latvia()};
    }
    const auto outcome = train_model(schema, loaded.records, split, {}, opts);
    const auto id = save_model(outcome.artifact, model_out);
    return json{{"model_id", id}, {"best_epoch", outcome.report.best_epoch}, {"metrics", outcome.test_metrics}}.dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    py::register_exception<Error>(m, "RetrofitError", PyExc_ValueError);

    m.def("energy_classes", &energy_class_order);
    m.def(
        "energy_delta",
        [](const std::string& initial, const std::string& final_class, double area) {
            return energy_performance_delta(EnergyClassTable::latvia(), initial, final_class, area);
        },
        py::arg("initial_class"), py::arg("final_class"), py::arg("heated_area"));
    m.def(
        "evaluate",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& predicted,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& truth) {
            return json(evaluate(to_matrix(predicted), to_matrix(truth))).dump();
        },
        py::arg("predicted"), py::arg("truth"));
    m.def(
        "ks_complement",
        [](const std::vector<double>& real, const std::vector<double>& synth) { return ks_complement(real, synth); },
        py::arg("real"), py::arg("synthetic"));
    m.def("tv_complement", &tv_complement, py::arg("real"), py::arg("synthetic"));
    m.def(
        "map_measures",
        [](const std::vector<std::string>& raw, const std::string& map_path) {
            const auto map = map_path.empty() ? MeasureMap::defaults() : load_measure_map(map_path);
            const auto r = map_measures(raw, map);
            return std::pair{std::vector<bool>(r.labels.values.begin(), r.labels.values.end()), r.unmatched};
        },
        py::arg("measures"), py::arg("map_path") = "");
    m.def("train", &train_from_files, py::arg("schema_path"), py::arg("data_path"), py::arg("model_out"),
          py::arg("split_seed") = 0, py::arg("mlp_json") = "", py::arg("delta_path") = "");

    py::class_<RecommendationService>(m, "Service")
        .def(py::init<>())
        .def("load", [](RecommendationService& s, const std::string& path) {
            s.load(std::make_shared<ModelArtifact>(load_model(path)));
        })
        .def("recommend", [](const RecommendationService& s, const std::string& body) { return to_response(s.recommend(body)); })
        .def("explain", [](const RecommendationService& s, const std::string& body) { return to_response(s.explain(body)); })
        .def("model_info", [](const RecommendationService& s) { return to_response(s.model_info()); });
}
