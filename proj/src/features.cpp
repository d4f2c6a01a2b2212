#include "retrofit/features.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace retrofit {

using nlohmann::json;

const std::vector<std::string>& energy_class_order() {
    static const std::vector<std::string> order = {"A+", "A", "B", "C", "D", "E", "F", "G"};
    return order;
}

std::optional<int> energy_class_code(std::string_view cls) {
    const auto& order = energy_class_order();
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (order[i] == cls) return static_cast<int>(i);
    }
    return std::nullopt;
}

int OrdinalEncoder::encode(std::string_view value) const {
    if (energy_class) {
        // Codes stay fixed regardless of which classes were seen during fitting.
        if (auto code = energy_class_code(value)) return *code;
        throw UnseenCategoryError(column, std::string(value));
    }
    auto it = std::find(categories.begin(), categories.end(), value);
    if (it == categories.end()) throw UnseenCategoryError(column, std::string(value));
    return static_cast<int>(it - categories.begin());
}

bool OrdinalEncoder::contains(std::string_view value) const {
    return std::find(categories.begin(), categories.end(), value) != categories.end();
}

double MinMaxScaler::transform(double x, bool* clamped) const {
    if (clamped) *clamped = false;
    if (!(max > min)) return 0.0;
    double v = (x - min) / (max - min);
    if (v < 0.0 || v > 1.0) {
        if (clamped) *clamped = true;
        v = std::clamp(v, 0.0, 1.0);
    }
    return v;
}

std::size_t EnergyClassTable::band_for(double heated_area) const {
    for (std::size_t b = 0; b < bands.size(); ++b) {
        if (heated_area <= bands[b].high) return b;
    }
    return bands.size() - 1;
}

double EnergyClassTable::limit(std::string_view cls, double heated_area) const {
    auto it = limits.find(std::string(cls));
    if (it == limits.end()) throw DataError("energy class '" + std::string(cls) + "' is not in the class table");
    return it->second.at(band_for(heated_area));
}

void EnergyClassTable::validate() const {
    if (bands.empty()) throw ConfigError("class table has no area bands");
    for (std::size_t b = 1; b < bands.size(); ++b) {
        if (!(bands[b].high > bands[b - 1].high)) throw ConfigError("class table bands must be increasing");
    }
    for (const auto& cls : classes) {
        auto it = limits.find(cls);
        if (it == limits.end()) throw ConfigError("class table lacks limits for class '" + cls + "'");
        if (it->second.size() != bands.size())
            throw ConfigError("class '" + cls + "' needs one limit per band");
    }
    for (std::size_t b = 0; b < bands.size(); ++b) {
        for (std::size_t k = 1; k < classes.size(); ++k) {
            if (!(limits.at(classes[k])[b] > limits.at(classes[k - 1])[b]))
                throw ConfigError("class limits must strictly increase from best to worst class");
        }
    }
}

EnergyClassTable EnergyClassTable::latvia() {
    EnergyClassTable t;
    t.bands = {{50, 120}, {120, 250}, {250, std::numeric_limits<double>::infinity()}};
    t.classes = {"A+", "A", "B", "C", "D", "E", "F"};
    t.limits = {
        {"A+", {35, 35, 30}},   {"A", {60, 50, 40}},    {"B", {75, 65, 60}},
        {"C", {95, 90, 80}},    {"D", {150, 130, 100}}, {"E", {180, 150, 125}},
    };
    std::vector<double> f;
    for (double e : t.limits["E"]) f.push_back(kOpenClassSurrogateFactor * e);
    t.limits["F"] = f;
    t.surrogate_classes = {"F"};
    return t;
}

double energy_performance_delta(const EnergyClassTable& table, std::string_view initial_class,
                                std::string_view final_class, double heated_area) {
    if (!(heated_area > 0)) throw DataError("heated area must be positive");
    return table.limit(initial_class, heated_area) - table.limit(final_class, heated_area);
}

std::vector<std::string> FeaturePipeline::feature_names() const {
    std::vector<std::string> out;
    for (const auto& t : transforms) out.push_back(t.name);
    return out;
}

const FeatureTransform& FeaturePipeline::transform(std::string_view name) const {
    for (const auto& t : transforms)
        if (t.name == name) return t;
    throw SchemaError("unknown model feature '" + std::string(name) + "'");
}

namespace {

const std::string& require_string(const Cell& c, const std::string& column) {
    if (const auto* s = std::get_if<std::string>(&c)) return *s;
    throw DataError("column '" + column + "' must hold a category string");
}

double require_number(const Cell& c, const std::string& column) {
    if (const auto* d = std::get_if<double>(&c)) return *d;
    if (const auto* b = std::get_if<bool>(&c)) return *b ? 1.0 : 0.0;
    throw DataError("column '" + column + "' must hold a number");
}

}  // namespace

double record_delta(const BuildingRecord& record, const DatasetSchema& schema, const DeltaFeatureSpec& spec) {
    const auto& init = require_string(record.values.at(schema.require_index(spec.initial_column)), spec.initial_column);
    const auto& fin = require_string(record.values.at(schema.require_index(spec.final_column)), spec.final_column);
    const double area = require_number(record.values.at(schema.require_index(spec.area_column)), spec.area_column);
    return energy_performance_delta(spec.table, init, fin, area);
}

FeaturePipeline fit_transforms(const std::vector<BuildingRecord>& train, const DatasetSchema& schema,
                               std::optional<DeltaFeatureSpec> delta) {
    if (train.empty()) throw DataError("cannot fit transforms on an empty training set");
    FeaturePipeline p;
    for (auto c : schema.feature_indices()) {
        const auto& spec = schema.columns[c];
        FeatureTransform t;
        t.name = spec.name;
        t.kind = spec.kind;
        if (spec.kind == ColumnKind::Categorical) {
            OrdinalEncoder enc;
            enc.column = spec.name;
            enc.energy_class = spec.energy_class;
            for (const auto& r : train) {
                const auto& v = require_string(r.values.at(c), spec.name);
                if (spec.energy_class && !energy_class_code(v))
                    throw DataError("column '" + spec.name + "' holds non energy-class value '" + v + "'");
                if (!enc.contains(v)) enc.categories.push_back(v);
            }
            if (spec.energy_class) {
                std::sort(enc.categories.begin(), enc.categories.end(),
                          [](const auto& a, const auto& b) { return *energy_class_code(a) < *energy_class_code(b); });
            }
            t.encoder = std::move(enc);
        } else if (spec.kind == ColumnKind::Numerical) {
            MinMaxScaler s{spec.name, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
            for (const auto& r : train) {
                const double v = require_number(r.values.at(c), spec.name);
                s.min = std::min(s.min, v);
                s.max = std::max(s.max, v);
            }
            t.scaler = s;
        }
        p.transforms.push_back(std::move(t));
    }
    if (delta) {
        delta->table.validate();
        FeatureTransform t;
        t.name = kDeltaFeatureName;
        t.kind = ColumnKind::Numerical;
        MinMaxScaler s{t.name, std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
        for (const auto& r : train) {
            const double v = record_delta(r, schema, *delta);
            s.min = std::min(s.min, v);
            s.max = std::max(s.max, v);
        }
        t.scaler = s;
        p.transforms.push_back(std::move(t));
        p.delta = std::move(delta);
    }
    return p;
}

TransformResult apply_transforms(const std::vector<BuildingRecord>& records, const DatasetSchema& schema,
                                 const FeaturePipeline& pipeline) {
    TransformResult out;
    out.x.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(pipeline.input_dim()));
    const std::size_t n_schema = pipeline.delta ? pipeline.transforms.size() - 1 : pipeline.transforms.size();
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < n_schema; ++j) cols.push_back(schema.require_index(pipeline.transforms[j].name));

    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        for (std::size_t j = 0; j < pipeline.transforms.size(); ++j) {
            const auto& t = pipeline.transforms[j];
            double v = 0;
            if (j >= n_schema) {
                const double raw = record_delta(rec, schema, *pipeline.delta);
                bool clamped = false;
                v = t.scaler->transform(raw, &clamped);
                if (clamped)
                    out.warnings.push_back("row " + std::to_string(r) + ": '" + t.name +
                                           "' outside training range, clamped");
            } else {
                const Cell& cell = rec.values.at(cols[j]);
                if (is_null(cell)) throw DataError("row " + std::to_string(r) + ": column '" + t.name + "' is null");
                switch (t.kind) {
                    case ColumnKind::Categorical:
                        v = t.encoder->encode(require_string(cell, t.name));
                        break;
                    case ColumnKind::Boolean:
                        v = require_number(cell, t.name) != 0.0 ? 1.0 : 0.0;
                        break;
                    case ColumnKind::Numerical: {
                        bool clamped = false;
                        v = t.scaler->transform(require_number(cell, t.name), &clamped);
                        if (clamped)
                            out.warnings.push_back("row " + std::to_string(r) + ": '" + t.name +
                                                   "' outside training range, clamped");
                        break;
                    }
                }
            }
            out.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = v;
        }
    }
    return out;
}

Matrix label_matrix(const std::vector<BuildingRecord>& records, const DatasetSchema& schema) {
    Matrix y(static_cast<Eigen::Index>(records.size()), kNumLabels);
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto labels = record_labels(records[r], schema);
        for (int k = 0; k < kNumLabels; ++k) y(static_cast<Eigen::Index>(r), k) = labels.values[k] ? 1.0 : 0.0;
    }
    return y;
}

void to_json(json& j, const EnergyClassTable& table) {
    json bands = json::array();
    for (const auto& b : table.bands) {
        json bj = {{"low", b.low}};
        bj["high"] = std::isinf(b.high) ? json(nullptr) : json(b.high);
        bands.push_back(bj);
    }
    j = {{"bands", bands}, {"classes", table.classes}, {"limits", table.limits},
         {"surrogate_classes", table.surrogate_classes}};
}

void from_json(const json& j, EnergyClassTable& table) {
    try {
        table = EnergyClassTable{};
        for (const auto& bj : j.at("bands")) {
            EnergyClassTable::Band b;
            b.low = bj.at("low").get<double>();
            if (bj.contains("high") && !bj["high"].is_null()) b.high = bj["high"].get<double>();
            table.bands.push_back(b);
        }
        table.classes = j.at("classes").get<std::vector<std::string>>();
        table.limits = j.at("limits").get<std::map<std::string, std::vector<double>>>();
        table.surrogate_classes = j.value("surrogate_classes", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed class table: ") + e.what());
    }
    table.validate();
}

void to_json(json& j, const FeaturePipeline& p) {
    json ts = json::array();
    for (const auto& t : p.transforms) {
        json tj = {{"name", t.name}, {"kind", to_string(t.kind)}};
        if (t.encoder)
            tj["encoder"] = {{"categories", t.encoder->categories}, {"energy_class", t.encoder->energy_class}};
        if (t.scaler) tj["scaler"] = {{"min", t.scaler->min}, {"max", t.scaler->max}};
        ts.push_back(std::move(tj));
    }
    j = {{"transforms", ts}};
    if (p.delta) {
        j["delta"] = {{"initial_column", p.delta->initial_column},
                      {"final_column", p.delta->final_column},
                      {"area_column", p.delta->area_column},
                      {"table", p.delta->table}};
    }
}

void from_json(const json& j, FeaturePipeline& p) {
    p = FeaturePipeline{};
    for (const auto& tj : j.at("transforms")) {
        FeatureTransform t;
        t.name = tj.at("name").get<std::string>();
        const auto kind = tj.at("kind").get<std::string>();
        t.kind = kind == "categorical" ? ColumnKind::Categorical
                 : kind == "boolean"   ? ColumnKind::Boolean
                                       : ColumnKind::Numerical;
        if (tj.contains("encoder")) {
            OrdinalEncoder e;
            e.column = t.name;
            e.categories = tj["encoder"].at("categories").get<std::vector<std::string>>();
            e.energy_class = tj["encoder"].value("energy_class", false);
            t.encoder = std::move(e);
        }
        if (tj.contains("scaler"))
            t.scaler = MinMaxScaler{t.name, tj["scaler"].at("min").get<double>(), tj["scaler"].at("max").get<double>()};
        p.transforms.push_back(std::move(t));
    }
    if (j.contains("delta")) {
        const auto& dj = j["delta"];
        p.delta = DeltaFeatureSpec{dj.at("initial_column").get<std::string>(), dj.at("final_column").get<std::string>(),
                                   dj.at("area_column").get<std::string>(), dj.at("table").get<EnergyClassTable>()};
    }
}

EnergyClassTable load_class_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open class table '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("class table '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return j.get<EnergyClassTable>();
}

}  // namespace retrofit
