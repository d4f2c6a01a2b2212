#include "retrofit/schema.hpp"

#include "retrofit/codec.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace retrofit {

using nlohmann::json;

RetrofitCategory category_from_key(std::string_view key) {
    for (int i = 0; i < kNumLabels; ++i) {
        if (kCategoryKeys[i] == key) return static_cast<RetrofitCategory>(i);
    }
    throw ConfigError("unknown retrofit category '" + std::string(key) + "'");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::string to_string(ColumnKind kind) {
    switch (kind) {
        case ColumnKind::Numerical: return "numerical";
        case ColumnKind::Categorical: return "categorical";
        case ColumnKind::Boolean: return "boolean";
    }
    return "numerical";
}

std::string to_string(ColumnRole role) {
    switch (role) {
        case ColumnRole::Feature: return "feature";
        case ColumnRole::Label: return "label";
        case ColumnRole::Ignored: return "ignored";
    }
    return "feature";
}

namespace {

ColumnKind kind_from_string(const std::string& s) {
    if (s == "numerical") return ColumnKind::Numerical;
    if (s == "categorical") return ColumnKind::Categorical;
    if (s == "boolean") return ColumnKind::Boolean;
    throw SchemaError("unknown column kind '" + s + "'");
}

ColumnRole role_from_string(const std::string& s) {
    if (s == "feature") return ColumnRole::Feature;
    if (s == "label") return ColumnRole::Label;
    if (s == "ignored") return ColumnRole::Ignored;
    throw SchemaError("unknown column role '" + s + "'");
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

// RFC 4180 style reader. Returns rows of raw fields.
std::vector<std::vector<std::string>> read_csv_rows(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool in_quotes = false;
    bool field_started = false;
    std::size_t i = 0;
    if (text.size() >= 3 && static_cast<unsigned char>(text[0]) == 0xEF &&
        static_cast<unsigned char>(text[1]) == 0xBB && static_cast<unsigned char>(text[2]) == 0xBF) {
        i = 3;
    }
    auto end_row = [&] {
        row.push_back(std::move(field));
        field.clear();
        // A blank line is skipped rather than read as a one-field row.
        if (!(row.size() == 1 && row[0].empty() && !field_started)) rows.push_back(std::move(row));
        row.clear();
        field_started = false;
    };
    for (; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                row.push_back(std::move(field));
                field.clear();
                field_started = true;
                break;
            case '\r':
                break;
            case '\n':
                end_row();
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (in_quotes) throw DataError("unterminated quoted field at end of CSV input");
    if (field_started || !field.empty() || !row.empty()) end_row();
    return rows;
}

std::string quote_csv(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_number(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15) {
        std::ostringstream os;
        os << static_cast<long long>(v);
        return os.str();
    }
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

std::string cell_to_string(const Cell& c) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) return "";
            else if constexpr (std::is_same_v<T, double>) return format_number(v);
            else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
            else return v;
        },
        c);
}

void DatasetSchema::validate() const {
    std::set<std::string> names;
    int labels = 0;
    for (const auto& c : columns) {
        if (c.name.empty()) throw SchemaError("column with empty name");
        if (!names.insert(c.name).second) throw SchemaError("duplicate column name '" + c.name + "'");
        if (c.role == ColumnRole::Label) {
            ++labels;
            if (c.kind != ColumnKind::Boolean && c.kind != ColumnKind::Numerical)
                throw SchemaError("label column '" + c.name + "' must be boolean or 0/1 numerical");
        }
        if (c.energy_class && c.kind != ColumnKind::Categorical)
            throw SchemaError("energy-class column '" + c.name + "' must be categorical");
    }
    if (labels != kNumLabels)
        throw SchemaError("schema must declare exactly 4 label columns, found " + std::to_string(labels));
    if (target_class_column) {
        const auto& c = column(*target_class_column);
        if (c.role != ColumnRole::Feature || c.kind != ColumnKind::Categorical)
            throw SchemaError("target_class_column must be a categorical feature");
    }
    for (const auto& [col, _] : value_map) {
        if (!index_of(col)) throw SchemaError("value_map refers to unknown column '" + col + "'");
    }
}

std::optional<std::size_t> DatasetSchema::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t DatasetSchema::require_index(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw SchemaError("unknown column '" + std::string(name) + "'");
    return *i;
}

const ColumnSpec& DatasetSchema::column(std::string_view name) const {
    return columns[require_index(name)];
}

std::vector<std::size_t> DatasetSchema::feature_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].role == ColumnRole::Feature) out.push_back(i);
    return out;
}

std::vector<std::size_t> DatasetSchema::label_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i].role == ColumnRole::Label) out.push_back(i);
    return out;
}

std::vector<std::string> DatasetSchema::feature_names() const {
    std::vector<std::string> out;
    for (auto i : feature_indices()) out.push_back(columns[i].name);
    return out;
}

std::vector<std::string> DatasetSchema::label_names() const {
    std::vector<std::string> out;
    for (auto i : label_indices()) out.push_back(columns[i].name);
    return out;
}

DatasetSchema DatasetSchema::without_feature(std::string_view name) const {
    DatasetSchema out = *this;
    auto& c = out.columns[require_index(name)];
    if (c.role != ColumnRole::Feature) throw SchemaError("'" + c.name + "' is not a feature column");
    c.role = ColumnRole::Ignored;
    if (out.target_class_column && *out.target_class_column == name) out.target_class_column.reset();
    ++out.version;
    return out;
}

std::string DatasetSchema::fingerprint() const {
    json j = *this;
    return sha256_hex(j.dump());
}

void to_json(json& j, const DatasetSchema& schema) {
    j = json::object();
    j["id"] = schema.id;
    j["version"] = schema.version;
    json cols = json::array();
    for (const auto& c : schema.columns) {
        json cj = {{"name", c.name}, {"kind", to_string(c.kind)}, {"role", to_string(c.role)}};
        if (c.unit) cj["unit"] = *c.unit;
        if (c.energy_class) cj["energy_class"] = true;
        cols.push_back(std::move(cj));
    }
    j["columns"] = std::move(cols);
    if (schema.target_class_column) j["target_class_column"] = *schema.target_class_column;
    if (!schema.value_map.empty()) j["value_map"] = schema.value_map;
    j["null_tokens"] = schema.null_tokens;
}

void from_json(const json& j, DatasetSchema& schema) {
    try {
        schema = DatasetSchema{};
        schema.id = j.value("id", std::string("dataset"));
        schema.version = j.value("version", 1);
        for (const auto& cj : j.at("columns")) {
            ColumnSpec c;
            c.name = cj.at("name").get<std::string>();
            c.kind = kind_from_string(cj.at("kind").get<std::string>());
            c.role = role_from_string(cj.value("role", std::string("feature")));
            if (cj.contains("unit") && !cj["unit"].is_null()) c.unit = cj["unit"].get<std::string>();
            c.energy_class = cj.value("energy_class", false);
            schema.columns.push_back(std::move(c));
        }
        if (j.contains("target_class_column") && !j["target_class_column"].is_null())
            schema.target_class_column = j["target_class_column"].get<std::string>();
        if (j.contains("value_map"))
            schema.value_map = j["value_map"].get<std::map<std::string, std::map<std::string, std::string>>>();
        if (j.contains("null_tokens")) schema.null_tokens = j["null_tokens"].get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw SchemaError(std::string("malformed schema document: ") + e.what());
    }
    schema.validate();
}

DatasetSchema load_schema(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open schema file '" + path.string() + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw SchemaError("schema file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return j.get<DatasetSchema>();
}

void save_schema(const DatasetSchema& schema, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw SchemaError("cannot write schema file '" + path.string() + "'");
    out << json(schema).dump(2) << '\n';
}

std::optional<Cell> parse_cell(std::string_view raw_in, const ColumnSpec& spec,
                               const DatasetSchema& schema) {
    std::string raw = trim(raw_in);
    if (auto it = schema.value_map.find(spec.name); it != schema.value_map.end()) {
        if (auto m = it->second.find(raw); m != it->second.end()) raw = m->second;
    }
    for (const auto& tok : schema.null_tokens) {
        if (raw == tok) return Cell{};
    }
    switch (spec.kind) {
        case ColumnKind::Numerical: {
            double v = 0;
            const char* b = raw.data();
            const char* e = raw.data() + raw.size();
            if (!raw.empty() && *b == '+') ++b;
            auto [ptr, ec] = std::from_chars(b, e, v);
            if (ec != std::errc{} || ptr != e || !std::isfinite(v)) return std::nullopt;
            return Cell{v};
        }
        case ColumnKind::Boolean: {
            const std::string l = lower(raw);
            if (l == "1" || l == "true" || l == "yes" || l == "y" || l == "t") return Cell{true};
            if (l == "0" || l == "false" || l == "no" || l == "n" || l == "f") return Cell{false};
            return std::nullopt;
        }
        case ColumnKind::Categorical:
            return Cell{raw};
    }
    return std::nullopt;
}

RetrofitLabels record_labels(const BuildingRecord& record, const DatasetSchema& schema) {
    RetrofitLabels labels;
    const auto idx = schema.label_indices();
    for (int k = 0; k < kNumLabels; ++k) {
        const Cell& c = record.values.at(idx[k]);
        if (const auto* b = std::get_if<bool>(&c)) labels.values[k] = *b;
        else if (const auto* d = std::get_if<double>(&c)) labels.values[k] = *d >= 0.5;
        else throw DataError("label column '" + schema.columns[idx[k]].name + "' is null");
    }
    return labels;
}

LoadResult parse_dataset(std::string_view csv_text, const DatasetSchema& schema) {
    schema.validate();
    const auto rows = read_csv_rows(csv_text);
    if (rows.empty()) throw SchemaError("CSV input has no header row");

    const auto& header = rows.front();
    std::vector<std::size_t> col_for_field(header.size());
    std::vector<bool> seen(schema.columns.size(), false);
    for (std::size_t f = 0; f < header.size(); ++f) {
        const std::string name = trim(header[f]);
        auto idx = schema.index_of(name);
        if (!idx) throw SchemaError("CSV header has extra column '" + name + "' not in schema");
        if (seen[*idx]) throw SchemaError("CSV header repeats column '" + name + "'");
        seen[*idx] = true;
        col_for_field[f] = *idx;
    }
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        if (!seen[c]) throw SchemaError("CSV header is missing column '" + schema.columns[c].name + "'");
    }

    LoadResult result;
    if (rows.size() == 1) result.warnings.push_back("CSV input contains a header but no data rows");
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& fields = rows[r];
        const std::size_t data_row = r - 1;
        if (fields.size() != header.size()) {
            result.rejected.push_back({data_row, "", "",
                                       "expected " + std::to_string(header.size()) + " fields, got " +
                                           std::to_string(fields.size())});
            continue;
        }
        BuildingRecord rec;
        rec.values.resize(schema.columns.size());
        bool ok = true;
        for (std::size_t f = 0; f < fields.size(); ++f) {
            const auto& spec = schema.columns[col_for_field[f]];
            auto cell = parse_cell(fields[f], spec, schema);
            if (!cell) {
                result.rejected.push_back(
                    {data_row, spec.name, fields[f], "cannot parse value as " + to_string(spec.kind)});
                ok = false;
                break;
            }
            rec.values[col_for_field[f]] = std::move(*cell);
        }
        if (ok) {
            result.records.push_back(std::move(rec));
            result.source_rows.push_back(data_row);
        }
    }
    return result;
}

LoadResult load_dataset(const std::filesystem::path& path, const DatasetSchema& schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open data file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_dataset(buf.str(), schema);
}

std::string format_dataset(const DatasetSchema& schema, const std::vector<BuildingRecord>& records) {
    std::ostringstream out;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        if (c) out << ',';
        out << quote_csv(schema.columns[c].name);
    }
    out << '\n';
    for (const auto& rec : records) {
        for (std::size_t c = 0; c < schema.columns.size(); ++c) {
            if (c) out << ',';
            out << quote_csv(cell_to_string(rec.values.at(c)));
        }
        out << '\n';
    }
    return out.str();
}

void write_dataset(const std::filesystem::path& path, const DatasetSchema& schema,
                   const std::vector<BuildingRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write data file '" + path.string() + "'");
    out << format_dataset(schema, records);
}

DropResult drop_nulls(const std::vector<BuildingRecord>& records, const DatasetSchema& schema,
                      const std::vector<std::string>& required_columns) {
    std::vector<std::size_t> required;
    if (required_columns.empty()) {
        for (std::size_t i = 0; i < schema.columns.size(); ++i)
            if (schema.columns[i].role != ColumnRole::Ignored) required.push_back(i);
    } else {
        for (const auto& name : required_columns) {
            auto i = schema.require_index(name);
            if (schema.columns[i].role == ColumnRole::Ignored)
                throw SchemaError("required column '" + name + "' is not a feature or label");
            required.push_back(i);
        }
    }
    DropResult out;
    for (std::size_t r = 0; r < records.size(); ++r) {
        bool keep = true;
        for (auto c : required) {
            if (is_null(records[r].values.at(c))) {
                ++out.report.drops_per_column[schema.columns[c].name];
                keep = false;
            }
        }
        if (keep) {
            out.kept.push_back(records[r]);
            out.kept_indices.push_back(r);
        }
    }
    out.report.kept_records = out.kept.size();
    out.report.dropped_records = records.size() - out.kept.size();
    return out;
}

std::vector<std::size_t> zscore_flags(const std::vector<BuildingRecord>& records,
                                      const DatasetSchema& schema, std::string_view column,
                                      double threshold) {
    const auto c = schema.require_index(column);
    if (schema.columns[c].kind != ColumnKind::Numerical)
        throw DataError("z-score requires a numerical column, '" + std::string(column) + "' is " +
                        to_string(schema.columns[c].kind));
    std::vector<std::pair<std::size_t, double>> vals;
    for (std::size_t r = 0; r < records.size(); ++r) {
        if (const auto* d = std::get_if<double>(&records[r].values.at(c))) vals.emplace_back(r, *d);
    }
    if (vals.size() < 2) return {};
    double mean = 0;
    for (const auto& [_, v] : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double var = 0;
    for (const auto& [_, v] : vals) var += (v - mean) * (v - mean);
    var /= static_cast<double>(vals.size());
    const double sd = std::sqrt(var);
    if (!(sd > 0)) return {};
    std::vector<std::size_t> flags;
    for (const auto& [r, v] : vals) {
        if (std::fabs(v - mean) / sd > threshold) flags.push_back(r);
    }
    return flags;
}

SplitIndices split(std::size_t n, const SplitSpec& spec) {
    if (!(spec.test_fraction > 0 && spec.test_fraction < 1) ||
        !(spec.val_fraction_of_rest > 0 && spec.val_fraction_of_rest < 1))
        throw ConfigError("split fractions must lie in (0, 1)");
    if (n < 8) throw DataError("split requires at least 8 records, got " + std::to_string(n));
    const auto n_test = static_cast<std::size_t>(std::lround(spec.test_fraction * static_cast<double>(n)));
    const auto n_val =
        static_cast<std::size_t>(std::lround(spec.val_fraction_of_rest * static_cast<double>(n - n_test)));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(spec.seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    SplitIndices out;
    out.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
    out.val.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test),
                   perm.begin() + static_cast<std::ptrdiff_t>(n_test + n_val));
    out.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test + n_val), perm.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

void to_json(json& j, const DropReport& report) {
    j = {{"drops_per_column", report.drops_per_column},
         {"dropped_records", report.dropped_records},
         {"kept_records", report.kept_records}};
}

void to_json(json& j, const RejectedRow& row) {
    j = {{"row", row.row}, {"column", row.column}, {"value", row.value}, {"reason", row.reason}};
}

}  // namespace retrofit
