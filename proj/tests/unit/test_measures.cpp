#include "retrofit/measures.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

using namespace retrofit;

TEST_CASE("default map assignments") {
    const auto map = MeasureMap::defaults();
    CHECK_NOTHROW(map.validate());

    auto r = map_measures({"Cavity wall insulation"}, map);
    CHECK(r.labels.values == std::array<bool, 4>{true, false, false, false});

    CHECK(map_measures({}, map).labels.values == std::array<bool, 4>{});

    r = map_measures({"Hot water cylinder thermostat", "Replace boiler with new condensing boiler"}, map);
    CHECK(r.labels[RetrofitCategory::DhwUpgrades]);
    CHECK(r.labels[RetrofitCategory::HeatingSystemInstallation]);
    CHECK_FALSE(r.labels[RetrofitCategory::BuildingFabric]);
}

TEST_CASE("matching ignores case and spacing") {
    CHECK(normalize_measure("  Cavity   WALL insulation ") == "cavity wall insulation");
    CHECK(map_measures({"cavity wall  INSULATION"}, MeasureMap::defaults()).labels[RetrofitCategory::BuildingFabric]);
}

TEST_CASE("unmatched policy") {
    auto map = MeasureMap::defaults();
    CHECK_THROWS_AS(map_measures({"Solar PV"}, map), ConfigError);
    map.unmatched = UnmatchedPolicy::WarnAndIgnore;
    const auto r = map_measures({"Solar PV", "Draught proofing"}, map);
    CHECK(r.unmatched == std::vector<std::string>{"Solar PV"});
    CHECK(r.labels[RetrofitCategory::BuildingFabric]);
}

TEST_CASE("conflicting entries are rejected") {
    auto map = MeasureMap::defaults();
    map.measures[1].push_back("cavity wall insulation");
    CHECK_THROWS_AS(map.validate(), ConfigError);
}

TEST_CASE("map json round trip") {
    const auto map = MeasureMap::defaults();
    const MeasureMap back = nlohmann::json(map).get<MeasureMap>();
    CHECK(back.measures == map.measures);
    CHECK(back.label_columns == map.label_columns);
}
