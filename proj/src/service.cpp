#include "retrofit/service.hpp"

#include "retrofit/explain.hpp"
#include "retrofit/hpo.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <set>
#include <variant>

namespace retrofit {

using nlohmann::json;

namespace {

constexpr const char* kTargetField = "target_energy_class";

std::vector<std::string> target_classes(const ModelArtifact& a) {
    if (a.pipeline.delta) return a.pipeline.delta->table.classes;
    if (a.schema.target_class_column) {
        for (const auto& t : a.pipeline.transforms)
            if (t.name == *a.schema.target_class_column && t.encoder) return t.encoder->categories;
    }
    return energy_class_order();
}

std::string field_for_column(const ModelArtifact& a, const std::string& column) {
    return a.schema.target_class_column && *a.schema.target_class_column == column ? kTargetField : column;
}

HttpResult error_result(int status, const std::string& message, const std::string& field = {}) {
    json body = {{"error", message}};
    if (!field.empty()) body["field"] = field;
    return {status, body};
}

json category_list() {
    json cats = json::array();
    for (int k = 0; k < kNumLabels; ++k) {
        const auto i = static_cast<std::size_t>(k);
        cats.push_back({{"index", k},
                        {"key", kCategoryKeys[i]},
                        {"title", kCategoryTitles[i]},
                        {"description", kCategoryDescriptions[i]}});
    }
    return cats;
}

}  // namespace

std::vector<InputField> input_fields(const ModelArtifact& a) {
    std::vector<std::string> names;
    for (const auto& c : a.schema.columns)
        if (c.role == ColumnRole::Feature) names.push_back(c.name);
    if (a.pipeline.delta) {
        for (const auto* col : {&a.pipeline.delta->initial_column, &a.pipeline.delta->final_column,
                                &a.pipeline.delta->area_column})
            if (std::find(names.begin(), names.end(), *col) == names.end()) names.push_back(*col);
    }
    // Only columns the model actually reads are required.
    std::set<std::string> used;
    for (const auto& t : a.pipeline.transforms) used.insert(t.name);
    if (a.pipeline.delta) {
        used.insert(a.pipeline.delta->initial_column);
        used.insert(a.pipeline.delta->final_column);
        used.insert(a.pipeline.delta->area_column);
    }

    std::vector<InputField> out;
    for (const auto& name : names) {
        if (!used.count(name)) continue;
        if (a.schema.target_class_column && *a.schema.target_class_column == name) continue;
        const auto& spec = a.schema.column(name);
        InputField f{name, spec.kind, spec.unit, {}, spec.energy_class};
        if (spec.kind == ColumnKind::Categorical) {
            for (const auto& t : a.pipeline.transforms)
                if (t.name == name && t.encoder) f.options = t.encoder->categories;
            if (f.options.empty() && a.pipeline.delta) f.options = a.pipeline.delta->table.classes;
        }
        out.push_back(std::move(f));
    }
    return out;
}

BuildingRecord record_from_request(const ModelArtifact& a, const json& request) {
    if (!request.is_object() || !request.contains("features") || !request["features"].is_object())
        throw std::invalid_argument("request body must be an object with a 'features' object");
    const auto& features = request["features"];

    BuildingRecord rec;
    rec.values.assign(a.schema.columns.size(), std::monostate{});
    auto set_value = [&](const std::string& column, const json& value, const std::string& field) {
        const auto& spec = a.schema.column(column);
        if (value.is_null()) throw FieldError(field, "field '" + field + "' is required");
        const std::string raw = value.is_string() ? value.get<std::string>() : value.dump();
        auto cell = parse_cell(raw, spec, a.schema);
        if (!cell || is_null(*cell))
            throw FieldError(field, "field '" + field + "' has an invalid value '" + raw + "'");
        rec.values[a.schema.require_index(column)] = std::move(*cell);
    };

    for (const auto& f : input_fields(a)) {
        if (!features.contains(f.name)) throw FieldError(f.name, "field '" + f.name + "' is required");
        set_value(f.name, features[f.name], f.name);
    }
    if (a.schema.target_class_column) {
        if (!request.contains(kTargetField)) throw FieldError(kTargetField, "field 'target_energy_class' is required");
        set_value(*a.schema.target_class_column, request[kTargetField], kTargetField);
    }
    if (a.pipeline.delta) {
        const auto& classes = a.pipeline.delta->table.classes;
        for (const auto* col : {&a.pipeline.delta->initial_column, &a.pipeline.delta->final_column}) {
            const auto& cell = rec.values[a.schema.require_index(*col)];
            const auto* s = std::get_if<std::string>(&cell);
            if (!s || std::find(classes.begin(), classes.end(), *s) == classes.end()) {
                const auto field = field_for_column(a, *col);
                throw FieldError(field, "field '" + field + "' is not a known energy class");
            }
        }
    }
    return rec;
}

Recommendation recommend(const ModelArtifact& a, const BuildingRecord& record) {
    Matrix x;
    try {
        x = apply_transforms({record}, a.schema, a.pipeline).x;
    } catch (const UnseenCategoryError& e) {
        const auto field = field_for_column(a, e.column());
        throw FieldError(field, "field '" + field + "' has an unseen value '" + e.value() + "'");
    }
    const Matrix p = a.model.predict(x);
    Recommendation r;
    r.threshold = a.threshold;
    r.model_id = a.id;
    r.input.assign(x.data(), x.data() + x.size());
    for (Eigen::Index k = 0; k < p.cols(); ++k) {
        r.probabilities.push_back(p(0, k));
        r.recommended.push_back(p(0, k) >= a.threshold);
    }
    return r;
}

void RecommendationService::load(std::shared_ptr<const ModelArtifact> artifact) {
    std::lock_guard lock(mutex_);
    artifact_ = std::move(artifact);
}

std::shared_ptr<const ModelArtifact> RecommendationService::snapshot() const {
    std::lock_guard lock(mutex_);
    return artifact_;
}

namespace {

struct Prepared {
    std::shared_ptr<const ModelArtifact> artifact;
    BuildingRecord record;
    Recommendation rec;
};

// Shared request handling: returns an error result or the prepared recommendation.
std::variant<HttpResult, Prepared> prepare(const RecommendationService& svc, std::string_view body) {
    auto artifact = svc.snapshot();
    if (!artifact) return error_result(503, "no model loaded");
    json request;
    try {
        request = json::parse(body);
    } catch (const json::exception&) {
        return error_result(400, "request body is not valid JSON");
    }
    try {
        Prepared p{artifact, record_from_request(*artifact, request), {}};
        p.rec = recommend(*artifact, p.record);
        return p;
    } catch (const std::invalid_argument& e) {
        return error_result(400, e.what());
    } catch (const FieldError& e) {
        return error_result(422, e.what(), e.field());
    } catch (const Error& e) {
        return error_result(422, e.what());
    }
}

json recommendation_json(const Recommendation& r) {
    json labels = json::array();
    for (std::size_t k = 0; k < r.probabilities.size(); ++k) {
        labels.push_back({{"index", k},
                          {"key", kCategoryKeys[k]},
                          {"title", kCategoryTitles[k]},
                          {"description", kCategoryDescriptions[k]},
                          {"probability", r.probabilities[k]},
                          {"recommended", static_cast<bool>(r.recommended[k])}});
    }
    return {{"model_id", r.model_id},
            {"threshold", r.threshold},
            {"probabilities", r.probabilities},
            {"recommendations", r.recommended},
            {"labels", labels}};
}

}  // namespace

HttpResult RecommendationService::recommend(std::string_view body) const {
    auto prepared = prepare(*this, body);
    if (auto* err = std::get_if<HttpResult>(&prepared)) return *err;
    return {200, recommendation_json(std::get<Prepared>(prepared).rec)};
}

HttpResult RecommendationService::explain(std::string_view body) const {
    auto prepared = prepare(*this, body);
    if (auto* err = std::get_if<HttpResult>(&prepared)) return *err;
    const auto& p = std::get<Prepared>(prepared);
    const auto& a = *p.artifact;
    const auto names = a.pipeline.feature_names();
    Matrix background = a.background;
    if (background.rows() == 0)
        background = Eigen::Map<const Matrix>(p.rec.input.data(), 1, static_cast<Eigen::Index>(p.rec.input.size()));
    const bool exact = names.size() <= kMaxExactFeatures;

    std::vector<Attribution> attrs;
    if (exact) {
        attrs = shapley_exact_all(a.model, p.rec.input, background);
    } else {
        for (int k = 0; k < kNumLabels; ++k)
            attrs.push_back(shapley_sampled(a.model, p.rec.input, background, k, options_.sampled_permutations,
                                            derive_seed(options_.seed, static_cast<std::uint64_t>(k))));
    }

    json labels = json::array();
    for (auto& attr : attrs) {
        attr.feature_names = names;
        attr.feature_values = p.rec.input;
        const auto k = static_cast<std::size_t>(attr.label);
        labels.push_back({{"index", attr.label},
                          {"key", kCategoryKeys[k]},
                          {"title", kCategoryTitles[k]},
                          {"probability", p.rec.probabilities[k]},
                          {"recommended", static_cast<bool>(p.rec.recommended[k])},
                          {"attribution", attr},
                          {"waterfall", waterfall(attr)}});
    }
    return {200,
            {{"model_id", a.id}, {"threshold", a.threshold}, {"exact", exact}, {"labels", labels}}};
}

HttpResult RecommendationService::model_info() const {
    auto artifact = snapshot();
    if (!artifact) return error_result(503, "no model loaded");
    const auto& a = *artifact;
    json inputs = json::array();
    for (const auto& f : input_fields(a)) {
        json fj = {{"name", f.name}, {"kind", to_string(f.kind)}, {"energy_class", f.energy_class}};
        fj["unit"] = f.unit ? json(*f.unit) : json(nullptr);
        if (f.kind == ColumnKind::Categorical) fj["options"] = f.options;
        inputs.push_back(std::move(fj));
    }
    json body = {{"model_id", a.id},
                 {"format_version", kArtifactFormatVersion},
                 {"threshold", a.threshold},
                 {"categories", category_list()},
                 {"inputs", inputs},
                 {"model_features", a.pipeline.feature_names()},
                 {"target_classes", target_classes(a)},
                 {"explain_mode", a.pipeline.input_dim() <= kMaxExactFeatures ? "exact" : "sampled"},
                 {"provenance", a.provenance},
                 {"training_config", a.training_config},
                 {"schema", a.schema}};
    body["target_class_column"] = a.schema.target_class_column ? json(*a.schema.target_class_column) : json(nullptr);
    body["energy_delta"] = a.pipeline.delta.has_value();
    body["hpo"] = a.hpo ? json(*a.hpo) : json(nullptr);
    return {200, body};
}

ListenAddress parse_listen_address(std::string_view text) {
    if (text.empty()) text = kDefaultListen;
    ListenAddress out;
    const auto colon = text.rfind(':');
    std::string_view port = text;
    if (colon != std::string_view::npos) {
        out.host = std::string(text.substr(0, colon));
        port = text.substr(colon + 1);
    }
    if (out.host.empty()) out.host = "127.0.0.1";
    int p = 0;
    auto [ptr, ec] = std::from_chars(port.data(), port.data() + port.size(), p);
    if (ec != std::errc{} || ptr != port.data() + port.size() || p < 1 || p > 65535)
        throw ConfigError("invalid listen address '" + std::string(text) + "'");
    out.port = p;
    return out;
}

ListenAddress listen_address_from_env() {
    const char* v = std::getenv(kListenEnv);
    return parse_listen_address(v ? v : "");
}

void serve(const RecommendationService& service, const ListenAddress& address) {
    httplib::Server server;
    auto reply = [](httplib::Response& res, const HttpResult& r) {
        res.status = r.status;
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_content(r.body.dump(), "application/json");
    };
    server.Post("/recommend", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.recommend(req.body));
    });
    server.Post("/explain", [&](const httplib::Request& req, httplib::Response& res) {
        reply(res, service.explain(req.body));
    });
    server.Get("/model/info", [&](const httplib::Request&, httplib::Response& res) { reply(res, service.model_info()); });
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Origin", "*");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });
    if (!server.listen(address.host, address.port))
        throw Error("cannot listen on " + address.host + ":" + std::to_string(address.port));
}

}  // namespace retrofit
