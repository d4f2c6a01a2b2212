#include "retrofit/metrics.hpp"

#include <nlohmann/json.hpp>

#include <iomanip>
#include <sstream>

namespace retrofit {

using nlohmann::json;

Matrix binarize(const Matrix& probabilities, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("decision threshold must lie in (0, 1)");
    return probabilities.unaryExpr([threshold](double p) { return p >= threshold ? 1.0 : 0.0; });
}

LabelMetrics metrics_from_counts(const ConfusionCounts& c) {
    LabelMetrics m;
    const long n = c.total();
    m.accuracy = n > 0 ? static_cast<double>(c.tp + c.tn) / static_cast<double>(n) : 0.0;
    m.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
    m.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    return m;
}

MetricsReport evaluate(const Matrix& predicted, const Matrix& truth) {
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
        throw DataError("prediction and truth matrices differ in shape");
    MetricsReport r;
    const auto n_labels = truth.cols();
    for (Eigen::Index k = 0; k < n_labels; ++k) {
        ConfusionCounts c;
        for (Eigen::Index i = 0; i < truth.rows(); ++i) {
            const double p = predicted(i, k), t = truth(i, k);
            if ((p != 0.0 && p != 1.0) || (t != 0.0 && t != 1.0))
                throw DataError("label matrices must hold only 0 and 1");
            if (p == 1.0) (t == 1.0 ? c.tp : c.fp)++;
            else (t == 1.0 ? c.fn : c.tn)++;
        }
        r.counts.push_back(c);
        r.per_label.push_back(metrics_from_counts(c));
    }
    if (n_labels > 0) {
        for (const auto& m : r.per_label) {
            r.macro.accuracy += m.accuracy;
            r.macro.precision += m.precision;
            r.macro.recall += m.recall;
            r.macro.f1 += m.f1;
        }
        const auto n = static_cast<double>(n_labels);
        r.macro.accuracy /= n;
        r.macro.precision /= n;
        r.macro.recall /= n;
        r.macro.f1 /= n;
    }
    return r;
}

std::string format_metrics_table(const std::vector<MetricsRow>& rows) {
    std::size_t w_train = 10, w_test = 9;
    for (const auto& r : rows) {
        w_train = std::max(w_train, r.train_data.size());
        w_test = std::max(w_test, r.test_data.size());
    }
    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(w_train)) << "Train data" << "  " << std::setw(static_cast<int>(w_test))
        << "Test data" << "  " << std::right << std::setw(8) << "Accuracy" << "  " << std::setw(9) << "Precision"
        << "  " << std::setw(6) << "Recall" << "  " << std::setw(8) << "F1 score" << '\n';
    out << std::string(w_train + w_test + 4 + 8 + 2 + 9 + 2 + 6 + 2 + 8, '-') << '\n';
    out << std::fixed << std::setprecision(3);
    for (const auto& r : rows) {
        out << std::left << std::setw(static_cast<int>(w_train)) << r.train_data << "  "
            << std::setw(static_cast<int>(w_test)) << r.test_data << "  " << std::right << std::setw(8)
            << r.report.macro.accuracy << "  " << std::setw(9) << r.report.macro.precision << "  " << std::setw(6)
            << r.report.macro.recall << "  " << std::setw(8) << r.report.macro.f1 << '\n';
    }
    return out.str();
}

void to_json(json& j, const MetricsReport& r) {
    auto metrics_json = [](const LabelMetrics& m) {
        return json{{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    };
    json per = json::array();
    for (std::size_t k = 0; k < r.per_label.size(); ++k) {
        json lj = metrics_json(r.per_label[k]);
        lj["tp"] = r.counts[k].tp;
        lj["fp"] = r.counts[k].fp;
        lj["tn"] = r.counts[k].tn;
        lj["fn"] = r.counts[k].fn;
        if (k < kCategoryKeys.size()) lj["category"] = std::string(kCategoryKeys[k]);
        per.push_back(std::move(lj));
    }
    j = {{"per_label", per}, {"macro", metrics_json(r.macro)}};
}

}  // namespace retrofit
