#include "retrofit/measures.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <fstream>
#include <unordered_map>

namespace retrofit {

using nlohmann::json;

std::string normalize_measure(std::string_view s) {
    std::string out;
    bool space = false;
    for (unsigned char c : s) {
        if (std::isspace(c)) {
            space = !out.empty();
            continue;
        }
        if (space) out.push_back(' ');
        space = false;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

void MeasureMap::validate() const {
    std::unordered_map<std::string, int> owner;
    for (int k = 0; k < kNumLabels; ++k) {
        for (const auto& m : measures[static_cast<std::size_t>(k)]) {
            const auto key = normalize_measure(m);
            if (key.empty()) throw ConfigError("measure map contains an empty entry");
            auto [it, inserted] = owner.emplace(key, k);
            if (!inserted && it->second != k)
                throw ConfigError("measure '" + m + "' is listed under both " +
                                  std::string(kCategoryKeys[static_cast<std::size_t>(it->second)]) + " and " +
                                  std::string(kCategoryKeys[static_cast<std::size_t>(k)]));
        }
    }
}

MeasureMap MeasureMap::defaults() {
    MeasureMap m;
    m.measures[0] = {"Cavity wall insulation",
                     "Draught proofing",
                     "Internal or external wall insulation",
                     "Replace single glazed windows with low-E double glazed windows",
                     "Secondary glazing to single glazed windows",
                     "Increase loft insulation to 270 mm"};
    m.measures[1] = {"Low energy lighting for all fixed outlets",
                     "Heating controls (programmer and TRVs)",
                     "Heating controls (programmer and room thermostat)",
                     "Heating controls (programmer, room thermostat and TRVs)",
                     "Heating controls (room thermostat and TRVs)",
                     "Heating controls (room thermostat)",
                     "Heating controls (thermostatic radiator valves)",
                     "Heating controls (time and temperature zone control)"};
    m.measures[2] = {"Increase hot water cylinder insulation", "Hot water cylinder thermostat",
                     "Insulate hot water cylinder with 80 mm jacket",
                     "Add additional 80 mm jacket to hot water cylinder"};
    m.measures[3] = {"Wood pellet stove with boiler and radiators",
                     "Change heating to gas condensing boiler",
                     "Change room heaters to condensing boiler",
                     "Replace boiler with new condensing boiler",
                     "Replace heating unit with condensing unit",
                     "Replacement warm air unit",
                     "Condensing boiler (separate from the range cooker)",
                     "Fan assisted storage heaters",
                     "Fan assisted storage heaters and dual immersion cylinder",
                     "Fan-assisted storage heaters",
                     "Condensing oil boiler with radiators"};
    m.label_columns = {{"Carrying out construction works", RetrofitCategory::BuildingFabric},
                       {"Reconstruction of engineering systems", RetrofitCategory::HeatingLightingControls},
                       {"Water heating system", RetrofitCategory::DhwUpgrades},
                       {"Heat installation", RetrofitCategory::HeatingSystemInstallation}};
    return m;
}

MappingResult map_measures(const std::vector<std::string>& raw, const MeasureMap& map) {
    std::unordered_map<std::string, int> lookup;
    for (int k = 0; k < kNumLabels; ++k)
        for (const auto& m : map.measures[static_cast<std::size_t>(k)]) lookup.emplace(normalize_measure(m), k);
    MappingResult out;
    for (const auto& s : raw) {
        const auto key = normalize_measure(s);
        if (key.empty()) continue;
        auto it = lookup.find(key);
        if (it == lookup.end()) {
            if (map.unmatched == UnmatchedPolicy::Error) throw ConfigError("unmapped improvement measure '" + s + "'");
            out.unmatched.push_back(s);
            continue;
        }
        out.labels.values[static_cast<std::size_t>(it->second)] = true;
    }
    return out;
}

void to_json(json& j, const MeasureMap& m) {
    json cats = json::object();
    for (int k = 0; k < kNumLabels; ++k) cats[std::string(kCategoryKeys[static_cast<std::size_t>(k)])] = m.measures[static_cast<std::size_t>(k)];
    json cols = json::object();
    for (const auto& [col, cat] : m.label_columns) cols[col] = std::string(kCategoryKeys[static_cast<std::size_t>(cat)]);
    j = {{"categories", cats},
         {"unmatched", m.unmatched == UnmatchedPolicy::Error ? "error" : "warn"},
         {"label_columns", cols}};
}

void from_json(const json& j, MeasureMap& m) {
    m = MeasureMap{};
    try {
        const auto& cats = j.at("categories");
        for (const auto& [key, list] : cats.items()) {
            const auto cat = category_from_key(key);
            m.measures[static_cast<std::size_t>(cat)] = list.get<std::vector<std::string>>();
        }
        const auto policy = j.value("unmatched", std::string("error"));
        if (policy == "error") m.unmatched = UnmatchedPolicy::Error;
        else if (policy == "warn") m.unmatched = UnmatchedPolicy::WarnAndIgnore;
        else throw ConfigError("unmatched policy must be 'error' or 'warn'");
        if (j.contains("label_columns")) {
            for (const auto& [col, key] : j["label_columns"].items())
                m.label_columns[col] = category_from_key(key.get<std::string>());
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed measure map: ") + e.what());
    }
    m.validate();
}

MeasureMap load_measure_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open measure map '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("measure map '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return j.get<MeasureMap>();
}

}  // namespace retrofit
