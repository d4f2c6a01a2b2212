#include "retrofit/explain.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace retrofit {

using nlohmann::json;

namespace {

Matrix outputs(const MLPModel& model, const Matrix& rows, OutputScale scale) {
    return scale == OutputScale::Probability ? model.predict(rows) : model.scores(rows);
}

void check_inputs(const MLPModel& model, std::span<const double> x, const Matrix& background) {
    if (background.rows() == 0) throw DataError("background set is empty");
    if (static_cast<int>(x.size()) != model.input_dim() || background.cols() != model.input_dim())
        throw DataError("explained row or background does not match the model input dimension");
}

// Fills `rows` with background rows where features in `subset` are replaced by x.
void compose(std::span<const double> x, std::uint64_t subset, const Matrix& background, Matrix& rows,
             Eigen::Index offset) {
    const auto nb = background.rows();
    const auto nf = background.cols();
    rows.middleRows(offset, nb) = background;
    for (Eigen::Index f = 0; f < nf; ++f) {
        if (subset >> f & 1ULL) rows.block(offset, f, nb, 1).setConstant(x[static_cast<std::size_t>(f)]);
    }
}

// Coalition values for every subset and label: result(subset, label).
Matrix all_coalition_values(const MLPModel& model, std::span<const double> x, const Matrix& background,
                            OutputScale scale) {
    const auto nf = static_cast<std::size_t>(model.input_dim());
    const std::uint64_t n_subsets = 1ULL << nf;
    const Eigen::Index nb = background.rows();
    const Eigen::Index n_out = model.output_dim();
    Matrix values(static_cast<Eigen::Index>(n_subsets), n_out);
    // Batch several coalitions per forward pass.
    const std::uint64_t per_batch = std::max<std::uint64_t>(1, 8192 / static_cast<std::uint64_t>(nb));
    Matrix rows;
    for (std::uint64_t s0 = 0; s0 < n_subsets; s0 += per_batch) {
        const std::uint64_t count = std::min(per_batch, n_subsets - s0);
        rows.resize(static_cast<Eigen::Index>(count) * nb, background.cols());
        for (std::uint64_t k = 0; k < count; ++k) compose(x, s0 + k, background, rows, static_cast<Eigen::Index>(k) * nb);
        const Matrix out = outputs(model, rows, scale);
        for (std::uint64_t k = 0; k < count; ++k)
            values.row(static_cast<Eigen::Index>(s0 + k)) =
                out.middleRows(static_cast<Eigen::Index>(k) * nb, nb).colwise().mean();
    }
    return values;
}

std::vector<double> feature_values(std::span<const double> x) { return {x.begin(), x.end()}; }

std::vector<std::string> default_names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("x" + std::to_string(i));
    return out;
}

}  // namespace

double value_function(const MLPModel& model, std::span<const double> x, std::uint64_t subset,
                      const Matrix& background, int label, OutputScale scale) {
    check_inputs(model, x, background);
    Matrix rows(background.rows(), background.cols());
    compose(x, subset, background, rows, 0);
    return outputs(model, rows, scale).col(label).mean();
}

std::vector<Attribution> shapley_exact_all(const MLPModel& model, std::span<const double> x, const Matrix& background,
                                           OutputScale scale) {
    check_inputs(model, x, background);
    const auto nf = static_cast<std::size_t>(model.input_dim());
    if (nf > kMaxExactFeatures)
        throw ConfigError("exact Shapley enumeration supports at most 16 features (got " + std::to_string(nf) +
                          "); use sampled mode");
    const Matrix v = all_coalition_values(model, x, background, scale);
    // weight(s) = s! (F - s - 1)! / F!
    std::vector<double> weight(nf);
    for (std::size_t s = 0; s < nf; ++s) {
        weight[s] = std::exp(std::lgamma(static_cast<double>(s) + 1) + std::lgamma(static_cast<double>(nf - s)) -
                             std::lgamma(static_cast<double>(nf) + 1));
    }
    const std::uint64_t full = (1ULL << nf) - 1;
    std::vector<Attribution> out;
    for (int label = 0; label < model.output_dim(); ++label) {
        Attribution a;
        a.label = label;
        a.base_value = v(0, label);
        a.fx = v(static_cast<Eigen::Index>(full), label);
        a.phi.assign(nf, 0.0);
        for (std::uint64_t s = 0; s <= full; ++s) {
            const auto size = static_cast<std::size_t>(std::popcount(s));
            if (size == nf) continue;
            const double w = weight[size];
            const double vs = v(static_cast<Eigen::Index>(s), label);
            for (std::size_t i = 0; i < nf; ++i) {
                if (s >> i & 1ULL) continue;
                a.phi[i] += w * (v(static_cast<Eigen::Index>(s | (1ULL << i)), label) - vs);
            }
        }
        a.feature_names = default_names(nf);
        a.feature_values = feature_values(x);
        a.exact = true;
        out.push_back(std::move(a));
    }
    return out;
}

Attribution shapley_exact(const MLPModel& model, std::span<const double> x, const Matrix& background, int label,
                          OutputScale scale) {
    if (label < 0 || label >= model.output_dim()) throw DataError("label index out of range");
    auto all = shapley_exact_all(model, x, background, scale);
    return std::move(all[static_cast<std::size_t>(label)]);
}

Attribution shapley_sampled(const MLPModel& model, std::span<const double> x, const Matrix& background, int label,
                            int n_permutations, std::uint64_t seed, OutputScale scale) {
    check_inputs(model, x, background);
    if (label < 0 || label >= model.output_dim()) throw DataError("label index out of range");
    if (n_permutations < 50) throw ConfigError("sampled Shapley needs at least 50 permutations");
    const auto nf = static_cast<std::size_t>(model.input_dim());
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<Eigen::Index> pick(0, background.rows() - 1);

    std::vector<double> sum(nf, 0.0), sum_sq(nf, 0.0);
    std::vector<std::size_t> perm(nf);
    std::iota(perm.begin(), perm.end(), 0);
    // Row k of the walk: background row with the first k permuted features switched to x.
    Matrix walk(static_cast<Eigen::Index>(nf) + 1, static_cast<Eigen::Index>(nf));
    for (int p = 0; p < n_permutations; ++p) {
        std::shuffle(perm.begin(), perm.end(), rng);
        walk.row(0) = background.row(pick(rng));
        for (std::size_t k = 0; k < nf; ++k) {
            walk.row(static_cast<Eigen::Index>(k) + 1) = walk.row(static_cast<Eigen::Index>(k));
            walk(static_cast<Eigen::Index>(k) + 1, static_cast<Eigen::Index>(perm[k])) = x[perm[k]];
        }
        const Vector f = outputs(model, walk, scale).col(label);
        for (std::size_t k = 0; k < nf; ++k) {
            const double d = f(static_cast<Eigen::Index>(k) + 1) - f(static_cast<Eigen::Index>(k));
            sum[perm[k]] += d;
            sum_sq[perm[k]] += d * d;
        }
    }
    Attribution a;
    a.label = label;
    a.exact = false;
    a.feature_names = default_names(nf);
    a.feature_values = feature_values(x);
    a.base_value = outputs(model, background, scale).col(label).mean();
    Matrix xrow(1, static_cast<Eigen::Index>(nf));
    std::copy(x.begin(), x.end(), xrow.data());
    a.fx = outputs(model, xrow, scale)(0, label);
    const double n = n_permutations;
    a.phi.resize(nf);
    a.standard_error.resize(nf);
    for (std::size_t i = 0; i < nf; ++i) {
        a.phi[i] = sum[i] / n;
        const double var = std::max(0.0, sum_sq[i] / n - a.phi[i] * a.phi[i]) * n / (n - 1);
        a.standard_error[i] = std::sqrt(var / n);
    }
    const double residual = a.fx - a.base_value - std::accumulate(a.phi.begin(), a.phi.end(), 0.0);
    double total_abs = 0;
    for (double v : a.phi) total_abs += std::fabs(v);
    if (total_abs > 0) {
        for (double& v : a.phi) v += residual * std::fabs(v) / total_abs;
    } else if (nf > 0) {
        for (double& v : a.phi) v += residual / static_cast<double>(nf);
    }
    return a;
}

SummaryStats summarize(const std::vector<Attribution>& attributions) {
    if (attributions.empty()) throw DataError("cannot summarise an empty attribution list");
    SummaryStats s;
    s.feature_names = attributions.front().feature_names;
    const std::size_t nf = s.feature_names.size();
    for (const auto& a : attributions) {
        if (a.feature_names != s.feature_names || a.phi.size() != nf || a.feature_values.size() != nf)
            throw DataError("attributions have inconsistent feature sets");
    }
    std::vector<int> labels;
    for (const auto& a : attributions) labels.push_back(a.label);
    std::sort(labels.begin(), labels.end());
    labels.erase(std::unique(labels.begin(), labels.end()), labels.end());

    // Feature values normalised over all explained samples, for colouring.
    std::vector<double> lo(nf, std::numeric_limits<double>::infinity()), hi(nf, -std::numeric_limits<double>::infinity());
    for (const auto& a : attributions) {
        for (std::size_t f = 0; f < nf; ++f) {
            lo[f] = std::min(lo[f], a.feature_values[f]);
            hi[f] = std::max(hi[f], a.feature_values[f]);
        }
    }
    for (int label : labels) {
        LabelSummary ls;
        ls.label = label;
        ls.mean_abs_phi.assign(nf, 0.0);
        ls.scatter.resize(nf);
        std::size_t count = 0;
        for (const auto& a : attributions) {
            if (a.label != label) continue;
            ++count;
            for (std::size_t f = 0; f < nf; ++f) {
                ls.mean_abs_phi[f] += std::fabs(a.phi[f]);
                const double norm = hi[f] > lo[f] ? (a.feature_values[f] - lo[f]) / (hi[f] - lo[f]) : 0.5;
                ls.scatter[f].emplace_back(a.phi[f], norm);
            }
        }
        for (double& m : ls.mean_abs_phi) m /= static_cast<double>(count);
        ls.ordering.resize(nf);
        std::iota(ls.ordering.begin(), ls.ordering.end(), 0);
        std::stable_sort(ls.ordering.begin(), ls.ordering.end(), [&](std::size_t a, std::size_t b) {
            if (ls.mean_abs_phi[a] != ls.mean_abs_phi[b]) return ls.mean_abs_phi[a] > ls.mean_abs_phi[b];
            return s.feature_names[a] < s.feature_names[b];
        });
        s.labels.push_back(std::move(ls));
    }
    return s;
}

Waterfall waterfall(const Attribution& a) {
    Waterfall w;
    w.base_value = a.base_value;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < a.phi.size(); ++i)
        if (a.phi[i] != 0.0) order.push_back(i);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return std::fabs(a.phi[x]) < std::fabs(a.phi[y]); });
    double cum = a.base_value;
    for (auto i : order) {
        cum += a.phi[i];
        WaterfallStep step;
        step.feature = i < a.feature_names.size() ? a.feature_names[i] : "x" + std::to_string(i);
        step.feature_value = i < a.feature_values.size() ? a.feature_values[i] : 0.0;
        step.phi = a.phi[i];
        step.cumulative = cum;
        step.positive = a.phi[i] > 0;
        w.steps.push_back(std::move(step));
    }
    w.final_value = cum;
    return w;
}

void to_json(json& j, const Attribution& a) {
    j = {{"label", a.label},
         {"base_value", a.base_value},
         {"fx", a.fx},
         {"exact", a.exact},
         {"feature_names", a.feature_names},
         {"feature_values", a.feature_values},
         {"phi", a.phi}};
    if (!a.standard_error.empty()) j["standard_error"] = a.standard_error;
}

void to_json(json& j, const SummaryStats& s) {
    json labels = json::array();
    for (const auto& ls : s.labels) {
        json order = json::array();
        for (auto f : ls.ordering) order.push_back(s.feature_names[f]);
        json mean = json::object();
        json scatter = json::object();
        for (std::size_t f = 0; f < s.feature_names.size(); ++f) {
            mean[s.feature_names[f]] = ls.mean_abs_phi[f];
            json pts = json::array();
            for (const auto& [phi, v] : ls.scatter[f]) pts.push_back({phi, v});
            scatter[s.feature_names[f]] = std::move(pts);
        }
        labels.push_back({{"label", ls.label}, {"ordering", order}, {"mean_abs_phi", mean}, {"scatter", scatter}});
    }
    j = {{"feature_names", s.feature_names}, {"labels", labels}};
}

void to_json(json& j, const Waterfall& w) {
    json steps = json::array();
    for (const auto& s : w.steps) {
        steps.push_back({{"feature", s.feature},
                         {"feature_value", s.feature_value},
                         {"phi", s.phi},
                         {"cumulative", s.cumulative},
                         {"sign", s.positive ? "positive" : "negative"}});
    }
    j = {{"base_value", w.base_value}, {"steps", steps}, {"final_value", w.final_value}};
}

std::string summary_csv(const SummaryStats& s) {
    std::ostringstream out;
    out << "label,rank,feature,mean_abs_phi\n";
    for (const auto& ls : s.labels) {
        for (std::size_t r = 0; r < ls.ordering.size(); ++r) {
            const auto f = ls.ordering[r];
            out << ls.label << ',' << r + 1 << ",\"" << s.feature_names[f] << "\"," << ls.mean_abs_phi[f] << '\n';
        }
    }
    return out.str();
}

std::string waterfall_svg(const Waterfall& w, const std::string& title) {
    // Horizontal bars, base value at the bottom, f(x) at the top.
    const int row_h = 22, left = 220, width = 360, top = 30;
    const int rows = static_cast<int>(w.steps.size());
    const int height = top + (rows + 2) * row_h + 20;
    double lo = std::min(w.base_value, w.final_value), hi = std::max(w.base_value, w.final_value);
    for (const auto& s : w.steps) {
        lo = std::min(lo, s.cumulative);
        hi = std::max(hi, s.cumulative);
    }
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    auto px = [&](double v) { return left + (v - lo) / (hi - lo) * width; };
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + width + 40 << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "<text x=\"10\" y=\"18\" font-weight=\"bold\">" << title << "</text>\n";
    int y = top + rows * row_h;
    double prev = w.base_value;
    for (const auto& s : w.steps) {
        const double x0 = px(std::min(prev, s.cumulative)), x1 = px(std::max(prev, s.cumulative));
        svg << "<text x=\"10\" y=\"" << y + 15 << "\">" << s.feature << " = " << s.feature_value << "</text>\n";
        svg << "<rect x=\"" << x0 << "\" y=\"" << y + 3 << "\" width=\"" << std::max(1.0, x1 - x0)
            << "\" height=\"" << row_h - 6 << "\" fill=\"" << (s.positive ? "#ff0051" : "#008bfb") << "\"/>\n";
        prev = s.cumulative;
        y -= row_h;
    }
    svg << "<text x=\"10\" y=\"" << top + (rows + 1) * row_h + 15 << "\">E[f(x)] = " << w.base_value << "</text>\n";
    svg << "<text x=\"10\" y=\"" << top - 2 << "\">f(x) = " << w.final_value << "</text>\n";
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace retrofit
