#include "retrofit/datagen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <numeric>

namespace retrofit {

using nlohmann::json;

namespace {

constexpr double kAlphaScale = 4.0;
constexpr std::size_t kMaxEmSamples = 5000;
constexpr int kMaxEmIterations = 500;

double log_normal_pdf(double x, const GaussianMode& m) {
    const double z = (x - m.mean) / m.stddev;
    return -0.5 * z * z - std::log(m.stddev) - 0.5 * std::log(2.0 * std::numbers::pi);
}

struct MixtureFit {
    std::vector<GaussianMode> modes;
    double log_likelihood = 0;
};

MixtureFit em_fit(const std::vector<double>& sorted, int k, double sd_floor) {
    const auto n = sorted.size();
    const double nd = static_cast<double>(n);
    const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / nd;
    double var = 0;
    for (double x : sorted) var += (x - mean) * (x - mean);
    var = std::max(var / nd, sd_floor * sd_floor);

    MixtureFit fit;
    fit.modes.resize(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const auto q = static_cast<std::size_t>((i + 0.5) / k * nd);
        fit.modes[static_cast<std::size_t>(i)] = {sorted[std::min(q, n - 1)], std::sqrt(var), 1.0 / k};
    }

    std::vector<double> resp(n * static_cast<std::size_t>(k));
    double prev = -std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < kMaxEmIterations; ++iter) {
        double ll = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double* r = &resp[i * static_cast<std::size_t>(k)];
            double top = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                const auto& m = fit.modes[static_cast<std::size_t>(c)];
                r[c] = m.weight > 0 ? std::log(m.weight) + log_normal_pdf(sorted[i], m)
                                    : -std::numeric_limits<double>::infinity();
                top = std::max(top, r[c]);
            }
            double sum = 0;
            for (int c = 0; c < k; ++c) sum += (r[c] = std::exp(r[c] - top));
            for (int c = 0; c < k; ++c) r[c] /= sum;
            ll += top + std::log(sum);
        }
        fit.log_likelihood = ll;
        if (std::abs(ll - prev) <= 1e-9 * (1.0 + std::abs(ll))) break;
        prev = ll;

        for (int c = 0; c < k; ++c) {
            double nk = 0, mu = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double r = resp[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)];
                nk += r;
                mu += r * sorted[i];
            }
            auto& m = fit.modes[static_cast<std::size_t>(c)];
            m.weight = nk / nd;
            if (nk < 1e-12) continue;
            mu /= nk;
            double v = 0;
            for (std::size_t i = 0; i < n; ++i)
                v += resp[i * static_cast<std::size_t>(k) + static_cast<std::size_t>(c)] * (sorted[i] - mu) * (sorted[i] - mu);
            m.mean = mu;
            m.stddev = std::max(std::sqrt(v / nk), sd_floor);
        }
    }
    return fit;
}

Cell category_cell_for(const DiscreteSpec& spec, bool value) {
    for (const auto& c : spec.categories) {
        if (const auto* b = std::get_if<bool>(&c); b && *b == value) return c;
        if (const auto* d = std::get_if<double>(&c); d && (*d != 0.0) == value) return c;
    }
    return std::monostate{};
}

}  // namespace

// ---------------------------------------------------------------------------
// ModeNormalizer

std::vector<double> ModeNormalizer::responsibilities(double x) const {
    std::vector<double> r(modes.size());
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < modes.size(); ++k) {
        r[k] = std::log(modes[k].weight) + log_normal_pdf(x, modes[k]);
        top = std::max(top, r[k]);
    }
    double sum = 0;
    for (auto& v : r) sum += (v = std::exp(v - top));
    for (auto& v : r) v /= sum;
    return r;
}

ModeNormalizer::Encoded ModeNormalizer::encode(double x, std::mt19937_64& rng) const {
    auto r = responsibilities(x);
    // Prefer modes that cover x within the alpha range.
    std::vector<double> eligible(r.size(), 0.0);
    bool any = false;
    for (std::size_t k = 0; k < modes.size(); ++k) {
        if (std::abs(x - modes[k].mean) <= kAlphaScale * modes[k].stddev && r[k] > 0) {
            eligible[k] = r[k];
            any = true;
        }
    }
    const auto& weights = any ? eligible : r;
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    Encoded e;
    e.mode = pick(rng);
    const auto& m = modes[static_cast<std::size_t>(e.mode)];
    e.alpha = std::clamp((x - m.mean) / (kAlphaScale * m.stddev), -1.0, 1.0);
    return e;
}

double ModeNormalizer::decode(double alpha, int mode) const {
    const auto& m = modes.at(static_cast<std::size_t>(mode));
    return alpha * kAlphaScale * m.stddev + m.mean;
}

ModeNormalizer fit_mode_normalizer(std::span<const double> values, int max_modes, double weight_threshold,
                                   std::string column) {
    if (values.size() < 10) throw DataError("mode normalizer for '" + column + "' needs at least 10 values");
    if (max_modes < 1) throw ConfigError("max_modes must be positive");
    if (weight_threshold < 0 || weight_threshold >= 1) throw ConfigError("weight_threshold must be in [0, 1)");
    for (double v : values)
        if (!std::isfinite(v)) throw DataError("non-finite value in column '" + column + "'");

    ModeNormalizer out;
    out.column = std::move(column);
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    out.min = sorted.front();
    out.max = sorted.back();
    out.integral = std::all_of(sorted.begin(), sorted.end(), [](double v) { return v == std::round(v); });

    const double nd = static_cast<double>(sorted.size());
    const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / nd;
    double var = 0;
    for (double x : sorted) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / nd);
    const double sd_floor = std::max(1e-3 * sd, 1e-6 * std::max(1.0, std::abs(mean)));

    if (sd == 0.0) {
        out.modes = {{mean, sd_floor, 1.0}};
        return out;
    }

    // Large columns are fitted on an evenly strided subsample of the sorted values.
    std::vector<double> sample;
    if (sorted.size() > kMaxEmSamples) {
        sample.reserve(kMaxEmSamples);
        for (std::size_t i = 0; i < kMaxEmSamples; ++i) sample.push_back(sorted[i * sorted.size() / kMaxEmSamples]);
    } else {
        sample = sorted;
    }
    std::vector<double> uniq = sample;
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    const int k_max = std::min<int>(max_modes, static_cast<int>(uniq.size()));

    MixtureFit best;
    double best_bic = std::numeric_limits<double>::infinity();
    const double log_n = std::log(static_cast<double>(sample.size()));
    for (int k = 1; k <= k_max; ++k) {
        auto fit = em_fit(sample, k, sd_floor);
        const double bic = -2.0 * fit.log_likelihood + (3.0 * k - 1.0) * log_n;
        if (bic < best_bic) {
            best_bic = bic;
            best = std::move(fit);
        }
    }

    for (const auto& m : best.modes)
        if (m.weight >= weight_threshold) out.modes.push_back(m);
    double total = 0;
    for (const auto& m : out.modes) total += m.weight;
    for (auto& m : out.modes) m.weight /= total;
    std::sort(out.modes.begin(), out.modes.end(), [](const auto& a, const auto& b) { return a.mean < b.mean; });
    return out;
}

// ---------------------------------------------------------------------------
// TabularEncoder

int DiscreteSpec::category_of(const Cell& value) const {
    for (std::size_t i = 0; i < categories.size(); ++i)
        if (categories[i] == value) return static_cast<int>(i);
    return -1;
}

TabularEncoder TabularEncoder::fit(const DatasetSchema& schema, const std::vector<BuildingRecord>& records,
                                   int max_modes, double weight_threshold) {
    schema.validate();
    TabularEncoder enc;
    enc.schema_ = schema;
    for (std::size_t ci = 0; ci < schema.columns.size(); ++ci) {
        const auto& spec = schema.columns[ci];
        if (spec.role == ColumnRole::Ignored) continue;
        for (std::size_t r = 0; r < records.size(); ++r)
            if (is_null(records[r].values.at(ci)))
                throw DataError("null in column '" + spec.name + "' at row " + std::to_string(r));

        Column col;
        col.schema_index = ci;
        col.offset = enc.encoded_dim_;
        const bool continuous = spec.kind == ColumnKind::Numerical && spec.role != ColumnRole::Label;
        col.continuous = continuous;
        if (continuous) {
            std::vector<double> v;
            v.reserve(records.size());
            for (const auto& rec : records) v.push_back(std::get<double>(rec.values[ci]));
            col.index = enc.normalizers_.size();
            enc.normalizers_.push_back(fit_mode_normalizer(v, max_modes, weight_threshold, spec.name));
            const auto k = enc.normalizers_.back().active_modes();
            enc.spans_.push_back({OutputSpan::Activation::Tanh, enc.encoded_dim_, 1});
            enc.spans_.push_back({OutputSpan::Activation::Softmax, enc.encoded_dim_ + 1, k});
            enc.encoded_dim_ += 1 + k;
        } else {
            DiscreteSpec d;
            d.column = spec.name;
            for (const auto& rec : records) {
                const auto& cell = rec.values[ci];
                const int idx = d.category_of(cell);
                if (idx < 0) {
                    d.categories.push_back(cell);
                    d.counts.push_back(1);
                } else {
                    ++d.counts[static_cast<std::size_t>(idx)];
                }
            }
            if (d.categories.empty()) throw DataError("column '" + spec.name + "' has no values");
            col.index = enc.discrete_.size();
            const auto c = d.categories.size();
            enc.discrete_.push_back(std::move(d));
            enc.discrete_data_offset_.push_back(enc.encoded_dim_);
            enc.discrete_cond_offset_.push_back(enc.cond_dim_);
            enc.spans_.push_back({OutputSpan::Activation::Softmax, enc.encoded_dim_, c});
            enc.encoded_dim_ += c;
            enc.cond_dim_ += c;
        }
        enc.columns_.push_back(col);
    }
    return enc;
}

int TabularEncoder::discrete_index(std::string_view column) const {
    for (std::size_t d = 0; d < discrete_.size(); ++d)
        if (discrete_[d].column == column) return static_cast<int>(d);
    return -1;
}

std::vector<double> TabularEncoder::encode_row(const BuildingRecord& row, std::mt19937_64& rng) const {
    if (row.values.size() != schema_.columns.size()) throw DataError("record width does not match the schema");
    std::vector<double> out(encoded_dim_, 0.0);
    for (const auto& col : columns_) {
        const auto& cell = row.values[col.schema_index];
        const auto& name = schema_.columns[col.schema_index].name;
        if (is_null(cell)) throw DataError("null in column '" + name + "'");
        if (col.continuous) {
            const auto* x = std::get_if<double>(&cell);
            if (!x) throw DataError("column '" + name + "' expects a number");
            const auto e = normalizers_[col.index].encode(*x, rng);
            out[col.offset] = e.alpha;
            out[col.offset + 1 + static_cast<std::size_t>(e.mode)] = 1.0;
        } else {
            const int c = discrete_[col.index].category_of(cell);
            if (c < 0) throw UnseenCategoryError(name, cell_to_string(cell));
            out[col.offset + static_cast<std::size_t>(c)] = 1.0;
        }
    }
    return out;
}

BuildingRecord TabularEncoder::decode_row(std::span<const double> encoded) const {
    if (encoded.size() != encoded_dim_) throw DataError("encoded row has the wrong width");
    BuildingRecord rec;
    rec.values.assign(schema_.columns.size(), std::monostate{});
    auto argmax = [&](std::size_t start, std::size_t len) {
        const auto* p = encoded.data() + start;
        return static_cast<std::size_t>(std::max_element(p, p + len) - p);
    };
    for (const auto& col : columns_) {
        if (col.continuous) {
            const auto& norm = normalizers_[col.index];
            const auto mode = argmax(col.offset + 1, norm.active_modes());
            const double alpha = std::clamp(encoded[col.offset], -1.0, 1.0);
            double x = std::clamp(norm.decode(alpha, static_cast<int>(mode)), norm.min, norm.max);
            if (norm.integral) x = std::round(x);
            rec.values[col.schema_index] = x;
        } else {
            const auto& d = discrete_[col.index];
            rec.values[col.schema_index] = d.categories[argmax(col.offset, d.categories.size())];
        }
    }
    return rec;
}

Matrix TabularEncoder::encode(const std::vector<BuildingRecord>& rows, std::mt19937_64& rng) const {
    Matrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(encoded_dim_));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto v = encode_row(rows[r], rng);
        out.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    return out;
}

std::vector<std::vector<std::size_t>> TabularEncoder::frequencies() const {
    std::vector<std::vector<std::size_t>> f;
    f.reserve(discrete_.size());
    for (const auto& d : discrete_) f.push_back(d.counts);
    return f;
}

// ---------------------------------------------------------------------------
// Conditional vectors

CondVector make_cond_vector(const std::vector<std::vector<std::size_t>>& frequencies, int column, int category) {
    if (column < 0 || static_cast<std::size_t>(column) >= frequencies.size())
        throw ConfigError("conditional column out of range");
    const auto& f = frequencies[static_cast<std::size_t>(column)];
    if (category < 0 || static_cast<std::size_t>(category) >= f.size())
        throw ConfigError("conditional category out of range");
    std::size_t dim = 0, offset = 0;
    for (std::size_t d = 0; d < frequencies.size(); ++d) {
        if (d == static_cast<std::size_t>(column)) offset = dim;
        dim += frequencies[d].size();
    }
    CondVector c;
    c.column = column;
    c.category = category;
    c.onehot.assign(dim, 0.0);
    c.onehot[offset + static_cast<std::size_t>(category)] = 1.0;
    return c;
}

CondVector sample_cond_vector(const std::vector<std::vector<std::size_t>>& frequencies, std::mt19937_64& rng) {
    if (frequencies.empty()) throw ConfigError("no discrete columns to condition on");
    std::uniform_int_distribution<std::size_t> col(0, frequencies.size() - 1);
    const auto d = col(rng);
    const auto& f = frequencies[d];
    if (f.empty()) throw ConfigError("discrete column without categories");
    std::vector<double> w(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) w[i] = std::log(static_cast<double>(f[i]) + 1.0);
    int category = 0;
    if (f.size() > 1) {
        std::discrete_distribution<int> pick(w.begin(), w.end());
        category = pick(rng);
    }
    return make_cond_vector(frequencies, static_cast<int>(d), category);
}

// ---------------------------------------------------------------------------
// Networks

namespace gan {

namespace {

Linear torch_linear(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Linear l{Matrix(in, out), RowVector(out)};
    for (Eigen::Index i = 0; i < l.w.size(); ++i) l.w.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < l.b.size(); ++i) l.b[i] = u(rng);
    return l;
}

Linear zero_like(const Linear& l) {
    return {Matrix::Zero(l.w.rows(), l.w.cols()), RowVector::Zero(l.b.size())};
}

}  // namespace

Matrix GeneratorNet::forward(const Matrix& input, Cache* cache, bool training) const {
    if (training && !cache) throw ConfigError("training-mode generator pass needs a cache");
    if (cache) *cache = Cache{};
    Matrix x = input;
    const double n = static_cast<double>(input.rows());
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const Matrix z = (x * blocks[i].w).rowwise() + blocks[i].b;
        RowVector mean, inv_std;
        if (training) {
            mean = z.colwise().mean();
            const RowVector var = (z.rowwise() - mean).array().square().colwise().sum().matrix() / n;
            inv_std = (var.array() + kNormEpsilon).rsqrt().matrix();
        } else {
            mean = running_mean[i];
            inv_std = (running_var[i].array() + kNormEpsilon).rsqrt().matrix();
        }
        Matrix xhat = (z.rowwise() - mean).array().rowwise() * inv_std.array();
        Matrix h = ((xhat.array().rowwise() * norms[i].w.row(0).array()).rowwise() + norms[i].b.array())
                       .cwiseMax(0.0)
                       .matrix();
        Matrix next(x.rows(), h.cols() + x.cols());
        next << h, x;
        if (cache) {
            cache->inputs.push_back(std::move(x));
            cache->xhat.push_back(std::move(xhat));
            cache->inv_std.push_back(std::move(inv_std));
            cache->hidden.push_back(std::move(h));
        }
        x = std::move(next);
    }
    Matrix y = (x * out.w).rowwise() + out.b;
    if (cache) cache->inputs.push_back(std::move(x));
    return y;
}

void GeneratorNet::update_running_stats(const Cache& cache) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        // Recover the batch statistics from the cached input rather than storing them twice.
        const Matrix z = (cache.inputs[i] * blocks[i].w).rowwise() + blocks[i].b;
        const double n = static_cast<double>(z.rows());
        const RowVector mean = z.colwise().mean();
        RowVector var = (z.rowwise() - mean).array().square().colwise().sum().matrix();
        var /= n > 1 ? n - 1 : 1.0;  // unbiased, as the running estimate is for the population
        running_mean[i] = (1 - kNormMomentum) * running_mean[i] + kNormMomentum * mean;
        running_var[i] = (1 - kNormMomentum) * running_var[i] + kNormMomentum * var;
    }
}

std::vector<Linear> GeneratorNet::backward(const Cache& cache, const Matrix& d_out) const {
    const std::size_t nb = blocks.size();
    std::vector<Linear> g(2 * nb + 1);
    g.back().w = cache.inputs.back().transpose() * d_out;
    g.back().b = d_out.colwise().sum();
    Matrix dx = d_out * out.w.transpose();
    const double n = static_cast<double>(d_out.rows());
    for (std::size_t i = nb; i-- > 0;) {
        const auto& h = cache.hidden[i];
        const auto& xhat = cache.xhat[i];
        const auto hw = h.cols();
        const Matrix dy = dx.leftCols(hw).cwiseProduct((h.array() > 0.0).cast<double>().matrix());
        g[nb + i].w = dy.cwiseProduct(xhat).colwise().sum();
        g[nb + i].b = dy.colwise().sum();
        const Matrix dxhat = dy.array().rowwise() * norms[i].w.row(0).array();
        const RowVector sum_d = dxhat.colwise().sum();
        const RowVector sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
        const Matrix dz = ((n * dxhat).rowwise() - sum_d - (xhat.array().rowwise() * sum_dx.array()).matrix())
                              .array()
                              .rowwise() *
                          (cache.inv_std[i].array() / n);
        g[i].w = cache.inputs[i].transpose() * dz;
        g[i].b = dz.colwise().sum();
        Matrix rest = dx.rightCols(dx.cols() - hw);
        dx = rest + dz * blocks[i].w.transpose();
    }
    return g;
}

std::vector<Linear*> GeneratorNet::params() {
    std::vector<Linear*> p;
    for (auto& b : blocks) p.push_back(&b);
    for (auto& b : norms) p.push_back(&b);
    p.push_back(&out);
    return p;
}

namespace {

/// Leaky-ReLU derivative times an inverted-dropout mask (when `rng` is given).
Matrix layer_mask(const Matrix& z, double slope, double dropout, std::mt19937_64* rng) {
    Matrix m = z.unaryExpr([slope](double v) { return v > 0 ? 1.0 : slope; });
    if (rng && dropout > 0) {
        std::bernoulli_distribution keep(1.0 - dropout);
        const double scale = 1.0 / (1.0 - dropout);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] *= keep(*rng) ? scale : 0.0;
    }
    return m;
}

}  // namespace

Matrix DiscriminatorNet::forward(const Matrix& rows, Cache* cache, std::mt19937_64* rng) const {
    if (rows.rows() % pac != 0) throw ConfigError("discriminator batch must be a multiple of pac");
    Matrix a = Eigen::Map<const Matrix>(rows.data(), rows.rows() / pac, rows.cols() * pac);
    if (cache) cache->packed = a;
    for (const auto& l : hidden) {
        Matrix z = (a * l.w).rowwise() + l.b;
        Matrix m = layer_mask(z, slope, dropout, rng);
        a = z.cwiseProduct(m);
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->mask.push_back(std::move(m));
            cache->post.push_back(a);
        }
    }
    return (a * out.w).rowwise() + out.b;
}

Matrix DiscriminatorNet::backward(const Cache& cache, const Matrix& d_score, std::vector<Linear>* grads) const {
    const auto& last = cache.post.empty() ? cache.packed : cache.post.back();
    if (grads) {
        grads->back().w += last.transpose() * d_score;
        grads->back().b += d_score.colwise().sum();
    }
    Matrix da = d_score * out.w.transpose();
    for (std::size_t i = hidden.size(); i-- > 0;) {
        Matrix dz = da.cwiseProduct(cache.mask[i]);
        const auto& input = i == 0 ? cache.packed : cache.post[i - 1];
        if (grads) {
            (*grads)[i].w += input.transpose() * dz;
            (*grads)[i].b += dz.colwise().sum();
        }
        da = dz * hidden[i].w.transpose();
    }
    const auto rows = da.rows() * pac;
    return Eigen::Map<const Matrix>(da.data(), rows, da.cols() / pac);
}

double DiscriminatorNet::gradient_penalty(const Matrix& rows, double lambda, std::vector<Linear>* grads,
                                          std::mt19937_64* rng) const {
    if (rows.rows() % pac != 0) throw ConfigError("discriminator batch must be a multiple of pac");
    const std::size_t L = hidden.size();
    Matrix a = Eigen::Map<const Matrix>(rows.data(), rows.rows() / pac, rows.cols() * pac);
    const auto P = a.rows();
    std::vector<Matrix> masks(L);
    for (std::size_t j = 0; j < L; ++j) {
        Matrix z = (a * hidden[j].w).rowwise() + hidden[j].b;
        masks[j] = layer_mask(z, slope, dropout, rng);
        a = z.cwiseProduct(masks[j]);
    }

    // d score / d input, via the chain of masks.
    std::vector<Matrix> v(L);
    Matrix u = Matrix::Ones(P, 1) * out.w.transpose();
    for (std::size_t j = L; j-- > 0;) {
        v[j] = u.cwiseProduct(masks[j]);
        u = v[j] * hidden[j].w.transpose();
    }
    const Matrix& G = u;
    const Vector norms = G.rowwise().norm();
    double penalty = 0;
    for (Eigen::Index r = 0; r < P; ++r) penalty += (norms[r] - 1.0) * (norms[r] - 1.0);
    penalty *= lambda / static_cast<double>(P);
    if (!grads || L == 0) return penalty;

    Matrix g_bar(G.rows(), G.cols());
    for (Eigen::Index r = 0; r < P; ++r) {
        const double n = norms[r];
        if (n > 0) g_bar.row(r) = (2.0 * lambda / static_cast<double>(P) * (n - 1.0) / n) * G.row(r);
        else g_bar.row(r).setZero();
    }
    (*grads)[0].w += g_bar.transpose() * v[0];
    Matrix v_bar = g_bar * hidden[0].w;
    for (std::size_t j = 0; j < L; ++j) {
        Matrix u_bar = v_bar.cwiseProduct(masks[j]);
        if (j + 1 < L) {
            (*grads)[j + 1].w += u_bar.transpose() * v[j + 1];
            v_bar = u_bar * hidden[j + 1].w;
        } else {
            grads->back().w += u_bar.colwise().sum().transpose();
        }
    }
    return penalty;
}

std::vector<Linear*> DiscriminatorNet::params() {
    std::vector<Linear*> p;
    for (auto& h : hidden) p.push_back(&h);
    p.push_back(&out);
    return p;
}

std::vector<Linear> DiscriminatorNet::zero_grads() const {
    std::vector<Linear> g;
    for (const auto& h : hidden) g.push_back(zero_like(h));
    g.push_back(zero_like(out));
    return g;
}

GeneratorNet make_generator(int input_dim, const std::vector<int>& dims, int output_dim, std::mt19937_64& rng) {
    GeneratorNet g;
    Eigen::Index in = input_dim;
    for (int d : dims) {
        g.blocks.push_back(torch_linear(in, d, rng));
        g.norms.push_back({Matrix::Ones(1, d), RowVector::Zero(d)});
        g.running_mean.push_back(RowVector::Zero(d));
        g.running_var.push_back(RowVector::Ones(d));
        in += d;
    }
    g.out = torch_linear(in, output_dim, rng);
    return g;
}

DiscriminatorNet make_discriminator(int row_dim, const std::vector<int>& dims, int pac, double slope,
                                    std::mt19937_64& rng, double dropout) {
    DiscriminatorNet d;
    d.pac = pac;
    d.slope = slope;
    d.dropout = dropout;
    Eigen::Index in = static_cast<Eigen::Index>(row_dim) * pac;
    for (int w : dims) {
        d.hidden.push_back(torch_linear(in, w, rng));
        in = w;
    }
    d.out = torch_linear(in, 1, rng);
    return d;
}

}  // namespace gan

// ---------------------------------------------------------------------------
// Training

void GanConfig::validate() const {
    if (epochs <= 0) throw ConfigError("GAN epochs must be positive");
    if (generator_dims.empty() || discriminator_dims.empty()) throw ConfigError("GAN layer lists must not be empty");
    for (int d : generator_dims)
        if (d <= 0) throw ConfigError("generator widths must be positive");
    for (int d : discriminator_dims)
        if (d <= 0) throw ConfigError("discriminator widths must be positive");
    if (noise_dim <= 0) throw ConfigError("noise_dim must be positive");
    if (pac <= 0) throw ConfigError("pac must be positive");
    if (batch_size < pac) throw ConfigError("batch_size must be at least pac");
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be positive");
    if (!(gradient_penalty >= 0)) throw ConfigError("gradient_penalty must be non-negative");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must be in [0, 1)");
    if (!(gumbel_tau > 0)) throw ConfigError("gumbel_tau must be positive");
    if (!(discriminator_dropout >= 0 && discriminator_dropout < 1))
        throw ConfigError("discriminator_dropout must be in [0, 1)");
    if (!(weight_decay >= 0)) throw ConfigError("weight_decay must be non-negative");
}

int GanConfig::effective_batch(std::size_t rows) const {
    int b = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(batch_size), rows));
    b -= b % pac;
    if (b < pac) throw ConfigError("dataset is smaller than one pac group");
    return b;
}

namespace {

/// tanh on alpha spans, Gumbel-softmax on one-hot spans.
Matrix activate(const Matrix& raw, const std::vector<OutputSpan>& spans, double tau, std::mt19937_64& rng) {
    Matrix out(raw.rows(), raw.cols());
    std::uniform_real_distribution<double> u(std::numeric_limits<double>::min(), 1.0);
    for (const auto& s : spans) {
        const auto st = static_cast<Eigen::Index>(s.start);
        const auto len = static_cast<Eigen::Index>(s.length);
        if (s.activation == OutputSpan::Activation::Tanh) {
            out.middleCols(st, len) = raw.middleCols(st, len).array().tanh().matrix();
            continue;
        }
        for (Eigen::Index r = 0; r < raw.rows(); ++r) {
            double top = -std::numeric_limits<double>::infinity();
            for (Eigen::Index c = 0; c < len; ++c) {
                const double g = -std::log(-std::log(u(rng)));
                out(r, st + c) = (raw(r, st + c) + g) / tau;
                top = std::max(top, out(r, st + c));
            }
            double sum = 0;
            for (Eigen::Index c = 0; c < len; ++c) sum += (out(r, st + c) = std::exp(out(r, st + c) - top));
            for (Eigen::Index c = 0; c < len; ++c) out(r, st + c) /= sum;
        }
    }
    return out;
}

Matrix activation_backward(const Matrix& act, const Matrix& d_act, const std::vector<OutputSpan>& spans, double tau) {
    Matrix d(act.rows(), act.cols());
    for (const auto& s : spans) {
        const auto st = static_cast<Eigen::Index>(s.start);
        const auto len = static_cast<Eigen::Index>(s.length);
        const auto y = act.middleCols(st, len);
        const auto dy = d_act.middleCols(st, len);
        if (s.activation == OutputSpan::Activation::Tanh) {
            d.middleCols(st, len) = dy.cwiseProduct((1.0 - y.array().square()).matrix());
            continue;
        }
        const Vector dot = dy.cwiseProduct(y).rowwise().sum();
        d.middleCols(st, len) = (y.array() * (dy.colwise() - dot).array() / tau).matrix();
    }
    return d;
}

Matrix concat_cols(const Matrix& a, const Matrix& b) {
    Matrix m(a.rows(), a.cols() + b.cols());
    m << a, b;
    return m;
}

Matrix normal_noise(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix z(rows, cols);
    for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
    return z;
}

struct CondBatch {
    Matrix onehot;
    std::vector<int> column, category;
};

CondBatch sample_conds(const std::vector<std::vector<std::size_t>>& freq, std::size_t cond_dim, int batch,
                       std::mt19937_64& rng) {
    CondBatch c;
    c.onehot = Matrix::Zero(batch, static_cast<Eigen::Index>(cond_dim));
    for (int r = 0; r < batch; ++r) {
        const auto cv = sample_cond_vector(freq, rng);
        c.onehot.row(r) = Eigen::Map<const RowVector>(cv.onehot.data(), static_cast<Eigen::Index>(cv.onehot.size()));
        c.column.push_back(cv.column);
        c.category.push_back(cv.category);
    }
    return c;
}

void adam_step(Adam& opt, const std::vector<gan::Linear*>& params, const std::vector<gan::Linear>& grads) {
    opt.begin_step();
    for (std::size_t i = 0; i < params.size(); ++i) {
        opt.update(2 * i, {params[i]->w.data(), static_cast<std::size_t>(params[i]->w.size())},
                   {grads[i].w.data(), static_cast<std::size_t>(grads[i].w.size())});
        opt.update(2 * i + 1, {params[i]->b.data(), static_cast<std::size_t>(params[i]->b.size())},
                   {grads[i].b.data(), static_cast<std::size_t>(grads[i].b.size())});
    }
}

}  // namespace

Generator train_gan(const DatasetSchema& schema, const std::vector<BuildingRecord>& records, const GanConfig& config,
                    const GanProgress& progress) {
    config.validate();
    if (records.size() < 100) throw DataError("GAN training needs at least 100 rows");
    const int batch = config.effective_batch(records.size());
    const int groups = batch / config.pac;

    auto encoder = TabularEncoder::fit(schema, records, config.max_modes, config.weight_threshold);
    std::mt19937_64 rng(derive_seed(config.seed, 0));
    const Matrix data = encoder.encode(records, rng);
    const auto freq = encoder.frequencies();
    const auto data_dim = static_cast<int>(encoder.encoded_dim());
    const auto cond_dim = encoder.cond_dim();

    // Rows per (discrete column, category), for sampling real rows that match a condition.
    std::vector<std::vector<std::vector<Eigen::Index>>> by_category(encoder.discrete().size());
    for (std::size_t d = 0; d < encoder.discrete().size(); ++d) {
        by_category[d].resize(encoder.discrete()[d].categories.size());
        const auto off = static_cast<Eigen::Index>(encoder.discrete_data_offset(d));
        const auto len = static_cast<Eigen::Index>(encoder.discrete()[d].categories.size());
        for (Eigen::Index r = 0; r < data.rows(); ++r) {
            Eigen::Index c = 0;
            data.row(r).segment(off, len).maxCoeff(&c);
            by_category[d][static_cast<std::size_t>(c)].push_back(r);
        }
    }

    std::mt19937_64 init_rng(derive_seed(config.seed, 1));
    auto gen = gan::make_generator(config.noise_dim + static_cast<int>(cond_dim), config.generator_dims, data_dim,
                                   init_rng);
    auto disc = gan::make_discriminator(data_dim + static_cast<int>(cond_dim), config.discriminator_dims, config.pac,
                                        config.leaky_slope, init_rng, config.discriminator_dropout);
    const AdamConfig adam{config.learning_rate, config.beta1, config.beta2, 1e-8, config.weight_decay};
    Adam opt_g(adam), opt_d(adam);
    auto g_params = gen.params();
    auto d_params = disc.params();

    std::mt19937_64 train_rng(derive_seed(config.seed, 2));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t steps = std::max<std::size_t>(1, records.size() / static_cast<std::size_t>(batch));
    const auto& spans = encoder.spans();

    auto check = [](double v, const char* what, int epoch) {
        if (!std::isfinite(v))
            throw TrainingError(std::string("GAN diverged: non-finite ") + what + " loss at epoch " + std::to_string(epoch));
    };

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        double g_sum = 0, d_sum = 0;
        for (std::size_t step = 0; step < steps; ++step) {
            // Discriminator.
            {
                auto c1 = sample_conds(freq, cond_dim, batch, train_rng);
                std::vector<int> perm(static_cast<std::size_t>(batch));
                std::iota(perm.begin(), perm.end(), 0);
                std::shuffle(perm.begin(), perm.end(), train_rng);
                Matrix real(batch, data_dim + static_cast<Eigen::Index>(cond_dim));
                for (int r = 0; r < batch; ++r) {
                    const auto p = static_cast<std::size_t>(perm[static_cast<std::size_t>(r)]);
                    const auto& pool = by_category[static_cast<std::size_t>(c1.column[p])]
                                                  [static_cast<std::size_t>(c1.category[p])];
                    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
                    real.row(r) << data.row(pool[pick(train_rng)]), c1.onehot.row(static_cast<Eigen::Index>(p));
                }
                const Matrix z = normal_noise(batch, config.noise_dim, train_rng);
                gan::GeneratorNet::Cache gc;
                const Matrix raw = gen.forward(concat_cols(z, c1.onehot), &gc, true);
                gen.update_running_stats(gc);
                const Matrix fake = concat_cols(activate(raw, spans, config.gumbel_tau, train_rng), c1.onehot);

                auto grads = disc.zero_grads();
                gan::DiscriminatorNet::Cache cr, cf;
                const Matrix y_real = disc.forward(real, &cr, &train_rng);
                const Matrix y_fake = disc.forward(fake, &cf, &train_rng);
                const double loss = -(y_real.mean() - y_fake.mean());
                disc.backward(cr, Matrix::Constant(groups, 1, -1.0 / groups), &grads);
                disc.backward(cf, Matrix::Constant(groups, 1, 1.0 / groups), &grads);

                Matrix interp(batch, real.cols());
                for (int gi = 0; gi < groups; ++gi) {
                    const double a = unit(train_rng);
                    interp.middleRows(gi * config.pac, config.pac) =
                        a * real.middleRows(gi * config.pac, config.pac) +
                        (1.0 - a) * fake.middleRows(gi * config.pac, config.pac);
                }
                const double pen = disc.gradient_penalty(interp, config.gradient_penalty, &grads, &train_rng);
                check(loss + pen, "discriminator", epoch);
                adam_step(opt_d, d_params, grads);
                d_sum += loss + pen;
            }
            // Generator.
            {
                auto c1 = sample_conds(freq, cond_dim, batch, train_rng);
                const Matrix z = normal_noise(batch, config.noise_dim, train_rng);
                gan::GeneratorNet::Cache gc;
                const Matrix raw = gen.forward(concat_cols(z, c1.onehot), &gc, true);
                gen.update_running_stats(gc);
                const Matrix act = activate(raw, spans, config.gumbel_tau, train_rng);
                gan::DiscriminatorNet::Cache dc;
                const Matrix y_fake = disc.forward(concat_cols(act, c1.onehot), &dc, &train_rng);
                const Matrix d_rows = disc.backward(dc, Matrix::Constant(groups, 1, -1.0 / groups), nullptr);
                Matrix d_raw = activation_backward(act, d_rows.leftCols(data_dim), spans, config.gumbel_tau);

                // Cross-entropy of the conditioned column's raw logits against the requested category.
                double ce = 0;
                for (int r = 0; r < batch; ++r) {
                    const auto d = static_cast<std::size_t>(c1.column[static_cast<std::size_t>(r)]);
                    const auto off = static_cast<Eigen::Index>(encoder.discrete_data_offset(d));
                    const auto len = static_cast<Eigen::Index>(encoder.discrete()[d].categories.size());
                    const auto target = c1.category[static_cast<std::size_t>(r)];
                    const RowVector logits = raw.row(r).segment(off, len);
                    const double top = logits.maxCoeff();
                    const RowVector e = (logits.array() - top).exp().matrix();
                    const double sum = e.sum();
                    ce += -(logits[target] - top - std::log(sum));
                    RowVector g = e / sum;
                    g[target] -= 1.0;
                    d_raw.row(r).segment(off, len) += g / batch;
                }
                ce /= batch;
                const double loss = -y_fake.mean() + ce;
                check(loss, "generator", epoch);
                adam_step(opt_g, g_params, gen.backward(gc, d_raw));
                g_sum += loss;
            }
        }
        if (progress) progress({epoch, g_sum / static_cast<double>(steps), d_sum / static_cast<double>(steps)});
    }
    return Generator(std::move(encoder), std::move(gen), config);
}

// ---------------------------------------------------------------------------
// Sampling

std::vector<double> Generator::parameters() const {
    std::vector<double> p;
    auto add = [&](const gan::Linear& l) {
        p.insert(p.end(), l.w.data(), l.w.data() + l.w.size());
        p.insert(p.end(), l.b.data(), l.b.data() + l.b.size());
    };
    for (const auto& b : net_.blocks) add(b);
    for (const auto& b : net_.norms) add(b);
    for (std::size_t i = 0; i < net_.running_mean.size(); ++i) {
        p.insert(p.end(), net_.running_mean[i].data(), net_.running_mean[i].data() + net_.running_mean[i].size());
        p.insert(p.end(), net_.running_var[i].data(), net_.running_var[i].data() + net_.running_var[i].size());
    }
    add(net_.out);
    return p;
}

Matrix Generator::sample_encoded(const std::vector<CondVector>& conds, std::mt19937_64& rng) const {
    const auto n = static_cast<Eigen::Index>(conds.size());
    Matrix c(n, static_cast<Eigen::Index>(encoder_.cond_dim()));
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& v = conds[static_cast<std::size_t>(r)].onehot;
        if (v.size() != encoder_.cond_dim()) throw ConfigError("conditional vector has the wrong width");
        c.row(r) = Eigen::Map<const RowVector>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    const Matrix z = normal_noise(n, config_.noise_dim, rng);
    return activate(net_.forward(concat_cols(z, c), nullptr), encoder_.spans(), config_.gumbel_tau, rng);
}

std::vector<BuildingRecord> Generator::sample_conditioned(int column, int category, std::size_t n,
                                                          std::mt19937_64& rng) const {
    const auto cv = make_cond_vector(encoder_.frequencies(), column, category);
    const Matrix enc = sample_encoded(std::vector<CondVector>(n, cv), rng);
    std::vector<BuildingRecord> out;
    out.reserve(n);
    for (Eigen::Index r = 0; r < enc.rows(); ++r)
        out.push_back(encoder_.decode_row({enc.row(r).data(), static_cast<std::size_t>(enc.cols())}));
    return out;
}

GenerationResult Generator::generate(const BalancePlan& plan, std::uint64_t seed) const {
    const auto labels = encoder_.schema().label_names();
    struct EntryOutput {
        std::vector<BuildingRecord> rows;
        EntryStats stats;
        std::string warning;
    };

    auto run = [&](std::size_t index) {
        EntryOutput out;
        const auto& entry = plan.entries[index];
        out.stats.entry = entry;
        if (entry.label < 0 || entry.label >= kNumLabels) throw ConfigError("plan label index out of range");
        if (entry.count == 0) return out;
        const auto& column = labels[static_cast<std::size_t>(entry.label)];
        const int d = encoder_.discrete_index(column);
        const auto& spec = encoder_.discrete()[static_cast<std::size_t>(d)];
        const Cell target = category_cell_for(spec, entry.value);
        const int category = spec.category_of(target);
        if (category < 0) {
            out.warning = "label '" + column + "' never takes value " + (entry.value ? "1" : "0") +
                          " in the training data; entry skipped";
            return out;
        }
        const auto label_index = encoder_.schema().require_index(column);
        const std::size_t budget = kRetryBudgetPerRow * entry.count;
        std::mt19937_64 rng(derive_seed(seed, index));
        while (out.stats.delivered < entry.count && out.stats.draws < budget) {
            const auto want = entry.count - out.stats.delivered;
            const auto n = std::min(budget - out.stats.draws, std::max<std::size_t>(2 * want, 32));
            for (auto& row : sample_conditioned(d, category, n, rng)) {
                if (out.stats.delivered == entry.count) break;
                ++out.stats.draws;
                if (row.values[label_index] == target) {
                    out.rows.push_back(std::move(row));
                    ++out.stats.delivered;
                } else {
                    ++out.stats.rejected;
                }
            }
        }
        if (out.stats.delivered < entry.count)
            out.warning = "retry budget exhausted for label '" + column + "' = " + (entry.value ? "1" : "0") +
                          ": delivered " + std::to_string(out.stats.delivered) + " of " +
                          std::to_string(entry.count);
        return out;
    };

    std::vector<std::future<EntryOutput>> jobs;
    for (std::size_t i = 0; i < plan.entries.size(); ++i) jobs.push_back(std::async(std::launch::async, run, i));

    GenerationResult result;
    for (auto& job : jobs) {
        auto out = job.get();
        for (auto& r : out.rows) result.records.push_back(std::move(r));
        result.stats.push_back(out.stats);
        if (!out.warning.empty()) result.warnings.push_back(std::move(out.warning));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Balance plans

std::size_t BalancePlan::total() const {
    std::size_t t = 0;
    for (const auto& e : entries) t += e.count;
    return t;
}

namespace {

// rates[j][v][k]: expected value of label k in a row conditioned on label j == v.
using CondRates = std::array<std::array<std::array<double, kNumLabels>, 2>, kNumLabels>;

CondRates conditional_rates(const Matrix& labels) {
    if (labels.cols() != kNumLabels) throw DataError("label matrix must have four columns");
    if (labels.rows() == 0) throw DataError("label matrix is empty");
    std::array<double, kNumLabels> marginal{};
    for (int k = 0; k < kNumLabels; ++k) marginal[static_cast<std::size_t>(k)] = labels.col(k).mean();
    CondRates rates{};
    for (int j = 0; j < kNumLabels; ++j) {
        for (int v = 0; v < 2; ++v) {
            auto& out = rates[static_cast<std::size_t>(j)][static_cast<std::size_t>(v)];
            out = marginal;
            double n = 0;
            std::array<double, kNumLabels> sum{};
            for (Eigen::Index r = 0; r < labels.rows(); ++r) {
                if ((labels(r, j) >= 0.5) != (v == 1)) continue;
                n += 1;
                for (int k = 0; k < kNumLabels; ++k) sum[static_cast<std::size_t>(k)] += labels(r, k);
            }
            if (n > 0)
                for (int k = 0; k < kNumLabels; ++k) out[static_cast<std::size_t>(k)] = sum[static_cast<std::size_t>(k)] / n;
            out[static_cast<std::size_t>(j)] = v;
        }
    }
    return rates;
}

BalancePlan greedy_plan(std::array<double, kNumLabels> pos, double total, const CondRates& rates, std::size_t budget) {
    // Grant counters in a fixed (label, value) order: (0,1), (0,0), (1,1), ...
    std::array<std::size_t, 2 * kNumLabels> grants{};
    std::vector<int> order;
    for (std::size_t step = 0; step < budget; ++step) {
        int best = 0;
        double best_imb = -1;
        for (int k = 0; k < kNumLabels; ++k) {
            const double imb = std::abs(2.0 * pos[static_cast<std::size_t>(k)] - total);
            if (imb > best_imb) {
                best_imb = imb;
                best = k;
            }
        }
        int slot;
        if (best_imb > 1.0) {
            slot = 2 * best + (2.0 * pos[static_cast<std::size_t>(best)] < total ? 0 : 1);
        } else {
            // Balanced to within one row: rotate through the least-granted (label, value).
            slot = static_cast<int>(std::min_element(grants.begin(), grants.end()) - grants.begin());
        }
        if (grants[static_cast<std::size_t>(slot)]++ == 0) order.push_back(slot);
        const int j = slot / 2;
        const int v = slot % 2 == 0 ? 1 : 0;
        total += 1;
        for (int k = 0; k < kNumLabels; ++k)
            pos[static_cast<std::size_t>(k)] += rates[static_cast<std::size_t>(j)][static_cast<std::size_t>(v)][static_cast<std::size_t>(k)];
    }
    BalancePlan plan;
    for (int slot : order)
        plan.entries.push_back({slot / 2, slot % 2 == 0, grants[static_cast<std::size_t>(slot)]});
    return plan;
}

}  // namespace

BalancePlan make_balance_plan(const Matrix& labels, std::size_t budget) {
    const auto rates = conditional_rates(labels);
    std::array<double, kNumLabels> pos{};
    for (int k = 0; k < kNumLabels; ++k) pos[static_cast<std::size_t>(k)] = labels.col(k).sum();
    return greedy_plan(pos, static_cast<double>(labels.rows()), rates, budget);
}

BalancePlan make_balance_plan(const std::vector<double>& positive_rates, std::size_t n, std::size_t budget) {
    if (positive_rates.size() != kNumLabels) throw ConfigError("expected four positive rates");
    if (n == 0) throw ConfigError("row count must be positive");
    CondRates rates{};
    std::array<double, kNumLabels> pos{};
    for (int k = 0; k < kNumLabels; ++k) {
        const double p = positive_rates[static_cast<std::size_t>(k)];
        if (!(p >= 0 && p <= 1)) throw ConfigError("positive rates must lie in [0, 1]");
        pos[static_cast<std::size_t>(k)] = p * static_cast<double>(n);
    }
    for (int j = 0; j < kNumLabels; ++j)
        for (int v = 0; v < 2; ++v)
            for (int k = 0; k < kNumLabels; ++k)
                rates[static_cast<std::size_t>(j)][static_cast<std::size_t>(v)][static_cast<std::size_t>(k)] =
                    k == j ? v : positive_rates[static_cast<std::size_t>(k)];
    return greedy_plan(pos, static_cast<double>(n), rates, budget);
}

std::vector<double> expected_positive_rates(const Matrix& labels, const BalancePlan& plan) {
    const auto rates = conditional_rates(labels);
    std::vector<double> pos(kNumLabels);
    for (int k = 0; k < kNumLabels; ++k) pos[static_cast<std::size_t>(k)] = labels.col(k).sum();
    double total = static_cast<double>(labels.rows());
    for (const auto& e : plan.entries) {
        const auto& r = rates[static_cast<std::size_t>(e.label)][e.value ? 1u : 0u];
        for (int k = 0; k < kNumLabels; ++k)
            pos[static_cast<std::size_t>(k)] += static_cast<double>(e.count) * r[static_cast<std::size_t>(k)];
        total += static_cast<double>(e.count);
    }
    for (auto& p : pos) p /= total;
    return pos;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const GanConfig& c) {
    j = {{"epochs", c.epochs},
         {"generator_dims", c.generator_dims},
         {"discriminator_dims", c.discriminator_dims},
         {"noise_dim", c.noise_dim},
         {"pac", c.pac},
         {"gradient_penalty", c.gradient_penalty},
         {"discriminator_dropout", c.discriminator_dropout},
         {"learning_rate", c.learning_rate},
         {"betas", {c.beta1, c.beta2}},
         {"weight_decay", c.weight_decay},
         {"batch_size", c.batch_size},
         {"gumbel_tau", c.gumbel_tau},
         {"leaky_slope", c.leaky_slope},
         {"max_modes", c.max_modes},
         {"weight_threshold", c.weight_threshold},
         {"seed", c.seed}};
}

void to_json(json& j, const BalancePlan& p) {
    j = json::array();
    for (const auto& e : p.entries) j.push_back({{"label", e.label}, {"value", e.value ? 1 : 0}, {"count", e.count}});
}

void to_json(json& j, const EntryStats& s) {
    j = {{"label", s.entry.label},
         {"value", s.entry.value ? 1 : 0},
         {"requested", s.entry.count},
         {"delivered", s.delivered},
         {"draws", s.draws},
         {"rejected", s.rejected}};
}

void to_json(json& j, const ModeNormalizer& m) {
    json modes = json::array();
    for (const auto& g : m.modes) modes.push_back({{"mean", g.mean}, {"std", g.stddev}, {"weight", g.weight}});
    j = {{"column", m.column}, {"modes", modes}, {"min", m.min}, {"max", m.max}, {"integral", m.integral}};
}

}  // namespace retrofit
