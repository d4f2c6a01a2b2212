#pragma once

#include "retrofit/features.hpp"
#include "retrofit/schema.hpp"

#include <filesystem>

namespace retrofit::testing {

inline std::filesystem::path data_dir() { return RETROFIT_DATA_DIR; }
inline std::filesystem::path test_data_dir() { return RETROFIT_TEST_DATA_DIR; }

inline DatasetSchema latvia_schema() { return load_schema(data_dir() / "latvia_schema.json"); }

inline std::vector<BuildingRecord> latvia_fixture(const DatasetSchema& schema) {
    auto loaded = load_dataset(test_data_dir() / "latvia_fixture.csv", schema);
    if (!loaded.rejected.empty()) throw DataError("fixture has rejected rows");
    return loaded.records;
}

inline DeltaFeatureSpec latvia_delta() {
    return {"Initial energy class", "Energy class after", "Reference area", EnergyClassTable::latvia()};
}

}  // namespace retrofit::testing
