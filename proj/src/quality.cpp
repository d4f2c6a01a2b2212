#include "retrofit/quality.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace retrofit {

using nlohmann::json;

ColumnData column_data(const std::vector<BuildingRecord>& records, const DatasetSchema& schema,
                       std::string_view column) {
    const auto c = schema.require_index(column);
    ColumnData d;
    d.kind = schema.columns[c].kind;
    for (const auto& r : records) {
        const Cell& cell = r.values.at(c);
        if (is_null(cell)) continue;
        if (d.discrete()) {
            d.categories.push_back(cell_to_string(cell));
        } else if (const auto* v = std::get_if<double>(&cell)) {
            d.numbers.push_back(*v);
        }
    }
    return d;
}

double ks_complement(std::span<const double> real, std::span<const double> synth) {
    if (real.empty() || synth.empty()) throw DataError("KS complement needs non-empty columns");
    std::vector<double> a(real.begin(), real.end()), b(synth.begin(), synth.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    std::size_t i = 0, j = 0;
    double sup = 0;
    // The ECDF difference only changes at sample points; evaluate after each distinct value.
    while (i < a.size() || j < b.size()) {
        double x;
        if (j >= b.size() || (i < a.size() && a[i] <= b[j])) x = a[i];
        else x = b[j];
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        sup = std::max(sup, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return 1.0 - sup;
}

double tv_complement(const std::vector<std::string>& real, const std::vector<std::string>& synth) {
    if (real.empty() || synth.empty()) throw DataError("TV complement needs non-empty columns");
    std::map<std::string, std::pair<double, double>> freq;
    for (const auto& c : real) freq[c].first += 1.0;
    for (const auto& c : synth) freq[c].second += 1.0;
    const double nr = static_cast<double>(real.size()), ns = static_cast<double>(synth.size());
    double tv = 0;
    for (const auto& [_, f] : freq) tv += std::fabs(f.first / nr - f.second / ns);
    return 1.0 - 0.5 * tv;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw DataError("correlation needs two equal-length columns of >= 2 rows");
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (!(saa > 0) || !(sbb > 0)) return std::nan("");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> correlation_similarity(std::span<const double> real_a, std::span<const double> real_b,
                                             std::span<const double> synth_a, std::span<const double> synth_b) {
    const double r = pearson(real_a, real_b);
    const double s = pearson(synth_a, synth_b);
    if (std::isnan(r) || std::isnan(s)) return std::nullopt;
    return 1.0 - std::fabs(r - s) / 2.0;
}

std::vector<double> quantile_edges(std::span<const double> real, int bins) {
    std::vector<double> sorted(real.begin(), real.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    if (sorted.empty()) return edges;
    for (int q = 1; q < bins; ++q) {
        const auto idx = static_cast<std::size_t>(std::floor(static_cast<double>(q) * static_cast<double>(sorted.size()) /
                                                             static_cast<double>(bins)));
        const double e = sorted[std::min(idx, sorted.size() - 1)];
        if (edges.empty() || e > edges.back()) edges.push_back(e);
    }
    return edges;
}

namespace {

std::vector<std::string> cells_of(const ColumnData& col, const std::vector<double>& edges) {
    if (col.discrete()) return col.categories;
    std::vector<std::string> out;
    out.reserve(col.numbers.size());
    for (double v : col.numbers) {
        const auto bin = std::upper_bound(edges.begin(), edges.end(), v) - edges.begin();
        out.push_back("bin" + std::to_string(bin));
    }
    return out;
}

}  // namespace

double contingency_similarity(const ColumnData& real_a, const ColumnData& real_b, const ColumnData& synth_a,
                              const ColumnData& synth_b) {
    if (real_a.size() == 0 || synth_a.size() == 0) throw DataError("contingency similarity needs non-empty columns");
    if (real_a.size() != real_b.size() || synth_a.size() != synth_b.size())
        throw DataError("contingency similarity needs equal-length column pairs");
    const auto ea = real_a.discrete() ? std::vector<double>{} : quantile_edges(real_a.numbers);
    const auto eb = real_b.discrete() ? std::vector<double>{} : quantile_edges(real_b.numbers);
    const auto ra = cells_of(real_a, ea), rb = cells_of(real_b, eb);
    const auto sa = cells_of(synth_a, ea), sb = cells_of(synth_b, eb);
    std::vector<std::string> joint_real, joint_synth;
    // '\x1f' cannot occur in CSV-parsed category strings used as joint keys.
    for (std::size_t i = 0; i < ra.size(); ++i) joint_real.push_back(ra[i] + '\x1f' + rb[i]);
    for (std::size_t i = 0; i < sa.size(); ++i) joint_synth.push_back(sa[i] + '\x1f' + sb[i]);
    return tv_complement(joint_real, joint_synth);
}

double overall_score(double column_shapes, double pair_trends) { return (column_shapes + pair_trends) / 2.0; }

namespace {

// Values of two columns on rows where both are present.
std::pair<ColumnData, ColumnData> paired(const std::vector<BuildingRecord>& records, const DatasetSchema& schema,
                                         std::size_t ca, std::size_t cb) {
    ColumnData a, b;
    a.kind = schema.columns[ca].kind;
    b.kind = schema.columns[cb].kind;
    auto push = [](ColumnData& d, const Cell& cell) {
        if (d.discrete()) d.categories.push_back(cell_to_string(cell));
        else d.numbers.push_back(std::get<double>(cell));
    };
    for (const auto& r : records) {
        const Cell &x = r.values.at(ca), &y = r.values.at(cb);
        if (is_null(x) || is_null(y)) continue;
        push(a, x);
        push(b, y);
    }
    return {a, b};
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

QualityReport quality_report(const DatasetSchema& schema, const std::vector<BuildingRecord>& real,
                             const std::vector<BuildingRecord>& synth, const QualityOptions& options) {
    if (real.empty() || synth.empty()) throw DataError("quality report needs non-empty real and synthetic tables");
    QualityReport rep;
    std::vector<std::size_t> cols;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        const auto role = schema.columns[c].role;
        if (role == ColumnRole::Ignored) continue;
        if (options.exclude_labels && role == ColumnRole::Label) continue;
        cols.push_back(c);
    }
    std::vector<double> shapes, shapes_features;
    for (auto c : cols) {
        const auto& spec = schema.columns[c];
        const auto r = column_data(real, schema, spec.name);
        const auto s = column_data(synth, schema, spec.name);
        ColumnScore cs;
        cs.column = spec.name;
        cs.label = spec.role == ColumnRole::Label;
        if (r.discrete()) {
            cs.metric = "TVComplement";
            cs.score = tv_complement(r.categories, s.categories);
        } else {
            cs.metric = "KSComplement";
            cs.score = ks_complement(r.numbers, s.numbers);
        }
        shapes.push_back(cs.score);
        if (!cs.label) shapes_features.push_back(cs.score);
        rep.column_scores.push_back(std::move(cs));
    }
    std::vector<double> trends;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        for (std::size_t j = i + 1; j < cols.size(); ++j) {
            const auto &a = schema.columns[cols[i]], &b = schema.columns[cols[j]];
            PairScore ps;
            ps.column_a = a.name;
            ps.column_b = b.name;
            auto [ra, rb] = paired(real, schema, cols[i], cols[j]);
            auto [sa, sb] = paired(synth, schema, cols[i], cols[j]);
            if (ra.size() == 0 || sa.size() == 0) {
                ps.metric = a.kind == ColumnKind::Numerical && b.kind == ColumnKind::Numerical ? "CorrelationSimilarity"
                                                                                               : "ContingencySimilarity";
                ps.note = "no rows with both columns present";
            } else if (a.kind == ColumnKind::Numerical && b.kind == ColumnKind::Numerical) {
                ps.metric = "CorrelationSimilarity";
                if (ra.size() < 2 || sa.size() < 2) {
                    ps.note = "fewer than two rows";
                } else {
                    ps.score = correlation_similarity(ra.numbers, rb.numbers, sa.numbers, sb.numbers);
                    if (!ps.score) ps.note = "zero variance column; correlation undefined";
                }
            } else {
                ps.metric = "ContingencySimilarity";
                ps.score = contingency_similarity(ra, rb, sa, sb);
            }
            if (ps.score) trends.push_back(*ps.score);
            rep.pair_scores.push_back(std::move(ps));
        }
    }
    rep.column_shapes = mean_of(shapes);
    rep.column_shapes_without_labels = mean_of(shapes_features);
    rep.pair_trends = trends.empty() ? rep.column_shapes : mean_of(trends);
    rep.overall = overall_score(rep.column_shapes, rep.pair_trends);
    return rep;
}

DiagnosticReport diagnostic_report(const DatasetSchema& real_schema, const std::vector<BuildingRecord>& real,
                                   const DatasetSchema& synth_schema, const std::vector<BuildingRecord>& synth) {
    DiagnosticReport rep;
    for (const auto& spec : real_schema.columns) {
        if (spec.role == ColumnRole::Ignored) continue;
        const auto sidx = synth_schema.index_of(spec.name);
        rep.checks.push_back({spec.name, "present", sidx.has_value(), sidx ? "" : "column missing from synthetic data"});
        const bool kind_ok = sidx && synth_schema.columns[*sidx].kind == spec.kind;
        rep.checks.push_back({spec.name, "kind", kind_ok, kind_ok ? "" : "column kind differs"});
        if (!sidx || !kind_ok) {
            rep.checks.push_back({spec.name, spec.kind == ColumnKind::Numerical ? "range" : "categories", false,
                                  "not comparable"});
            continue;
        }
        const auto r = column_data(real, real_schema, spec.name);
        const auto s = column_data(synth, synth_schema, spec.name);
        if (r.discrete()) {
            std::set<std::string> known(r.categories.begin(), r.categories.end());
            std::string unseen;
            for (const auto& c : s.categories) {
                if (!known.count(c)) {
                    unseen = c;
                    break;
                }
            }
            rep.checks.push_back({spec.name, "categories", unseen.empty(),
                                  unseen.empty() ? "" : "unseen category '" + unseen + "'"});
        } else {
            bool ok = true;
            std::string detail;
            if (!r.numbers.empty()) {
                const auto [lo, hi] = std::minmax_element(r.numbers.begin(), r.numbers.end());
                for (double v : s.numbers) {
                    if (v < *lo || v > *hi) {
                        ok = false;
                        std::ostringstream os;
                        os << "value " << v << " outside real range [" << *lo << ", " << *hi << "]";
                        detail = os.str();
                        break;
                    }
                }
            }
            rep.checks.push_back({spec.name, "range", ok, detail});
        }
    }
    std::size_t passed = 0;
    for (const auto& c : rep.checks) passed += c.passed ? 1 : 0;
    rep.score = rep.checks.empty() ? 1.0 : static_cast<double>(passed) / static_cast<double>(rep.checks.size());
    return rep;
}

void to_json(json& j, const QualityReport& r) {
    json cols = json::array();
    for (const auto& c : r.column_scores)
        cols.push_back({{"column", c.column}, {"metric", c.metric}, {"score", c.score}, {"label", c.label}});
    json pairs = json::array();
    for (const auto& p : r.pair_scores) {
        json pj = {{"column_a", p.column_a}, {"column_b", p.column_b}, {"metric", p.metric}};
        pj["score"] = p.score ? json(*p.score) : json(nullptr);
        if (!p.note.empty()) pj["note"] = p.note;
        pairs.push_back(std::move(pj));
    }
    j = {{"column_shapes", r.column_shapes},
         {"column_pair_trends", r.pair_trends},
         {"overall", r.overall},
         {"column_shapes_without_labels", r.column_shapes_without_labels},
         {"column_scores", cols},
         {"pair_scores", pairs}};
}

void to_json(json& j, const DiagnosticReport& r) {
    json checks = json::array();
    for (const auto& c : r.checks) {
        json cj = {{"column", c.column}, {"check", c.check}, {"passed", c.passed}};
        if (!c.detail.empty()) cj["detail"] = c.detail;
        checks.push_back(std::move(cj));
    }
    j = {{"score", r.score}, {"checks", checks}};
}

std::string column_scores_csv(const QualityReport& r) {
    std::ostringstream out;
    out << "column,metric,score,label\n";
    for (const auto& c : r.column_scores)
        out << '"' << c.column << "\"," << c.metric << ',' << c.score << ',' << (c.label ? 1 : 0) << '\n';
    return out.str();
}

}  // namespace retrofit
