#include "retrofit/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace retrofit {

namespace {

const double kProbLow = std::nextafter(0.0, 1.0);
const double kProbHigh = std::nextafter(1.0, 0.0);

Matrix affine(const Matrix& a, const DenseLayer& layer) {
    Matrix z = a * layer.weights;
    z.rowwise() += layer.bias;
    return z;
}

Matrix sigmoid_matrix(const Matrix& z) {
    return z.unaryExpr([](double v) { return sigmoid(v); });
}

}  // namespace

double sigmoid(double z) {
    const double p = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::clamp(p, kProbLow, kProbHigh);
}

std::size_t MLPModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

Matrix MLPModel::scores(const Matrix& x) const {
    if (x.cols() != input_dim())
        throw DataError("input has " + std::to_string(x.cols()) + " features, model expects " +
                        std::to_string(input_dim()));
    Matrix a = x;
    for (std::size_t l = 0; l < layers.size(); ++l) {
        a = affine(a, layers[l]);
        if (l + 1 < layers.size()) a = a.cwiseMax(0.0);
    }
    return a;
}

Matrix MLPModel::predict(const Matrix& x) const { return sigmoid_matrix(scores(x)); }

std::vector<double> MLPModel::flatten() const {
    std::vector<double> out;
    out.reserve(parameter_count());
    for (const auto& l : layers) {
        out.insert(out.end(), l.weights.data(), l.weights.data() + l.weights.size());
        out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    return out;
}

void MLPModel::unflatten(std::span<const double> params) {
    if (params.size() != parameter_count()) throw DataError("parameter vector has the wrong length");
    std::size_t k = 0;
    for (auto& l : layers) {
        std::copy_n(params.data() + k, l.weights.size(), l.weights.data());
        k += static_cast<std::size_t>(l.weights.size());
        std::copy_n(params.data() + k, l.bias.size(), l.bias.data());
        k += static_cast<std::size_t>(l.bias.size());
    }
}

bool MLPModel::all_finite() const {
    for (const auto& l : layers)
        if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
    return true;
}

MLPModel MLPModel::zeros(int input_dim, const std::vector<int>& hidden, int output_dim) {
    MLPModel m;
    int fan_in = input_dim;
    auto add = [&](int fan_out) {
        m.layers.push_back({Matrix::Zero(fan_in, fan_out), RowVector::Zero(fan_out)});
        fan_in = fan_out;
    };
    for (int h : hidden) add(h);
    add(output_dim);
    return m;
}

MLPModel MLPModel::glorot(int input_dim, const std::vector<int>& hidden, int output_dim, std::uint64_t seed) {
    MLPModel m = zeros(input_dim, hidden, output_dim);
    std::mt19937_64 rng(seed);
    for (auto& l : m.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(l.weights.rows() + l.weights.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = u(rng);
    }
    return m;
}

Vector forward(const MLPModel& model, std::span<const double> x) {
    if (static_cast<int>(x.size()) != model.input_dim())
        throw DataError("input has " + std::to_string(x.size()) + " features, model expects " +
                        std::to_string(model.input_dim()));
    Matrix row(1, static_cast<Eigen::Index>(x.size()));
    std::copy(x.begin(), x.end(), row.data());
    if (!row.allFinite()) throw DataError("input contains non-finite values");
    return model.predict(row).row(0).transpose();
}

double bce_loss(const Matrix& probs, const Matrix& labels) {
    if (probs.rows() != labels.rows() || probs.cols() != labels.cols())
        throw DataError("probabilities and labels differ in shape");
    if (probs.size() == 0) return 0.0;
    double total = 0;
    for (Eigen::Index i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs.data()[i], kBceEpsilon, 1.0 - kBceEpsilon);
        const double y = labels.data()[i];
        total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return total / static_cast<double>(probs.size());
}

double bce_loss(std::span<const double> probs, std::span<const double> labels) {
    if (probs.size() != labels.size()) throw DataError("probabilities and labels differ in length");
    Matrix p(1, static_cast<Eigen::Index>(probs.size())), y(1, static_cast<Eigen::Index>(labels.size()));
    std::copy(probs.begin(), probs.end(), p.data());
    std::copy(labels.begin(), labels.end(), y.data());
    return bce_loss(p, y);
}

double loss_and_gradient(const MLPModel& model, const Matrix& x, const Matrix& y, std::vector<DenseLayer>* grads) {
    const std::size_t n_layers = model.layers.size();
    std::vector<Matrix> acts;  // acts[l] is the input to layer l
    acts.reserve(n_layers + 1);
    acts.push_back(x);
    Matrix z;
    for (std::size_t l = 0; l < n_layers; ++l) {
        z = affine(acts.back(), model.layers[l]);
        if (l + 1 < n_layers) acts.push_back(z.cwiseMax(0.0));
    }
    const Matrix p = sigmoid_matrix(z);
    const double loss = bce_loss(p, y);
    if (!grads) return loss;

    const double scale = 1.0 / static_cast<double>(p.size());
    // d(mean BCE)/dz = (p - y) / N, zero where the probability is clipped.
    Matrix delta = (p - y) * scale;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double pi = p.data()[i];
        if (pi < kBceEpsilon || pi > 1.0 - kBceEpsilon) delta.data()[i] = 0.0;
    }
    grads->resize(n_layers);
    for (std::size_t l = n_layers; l-- > 0;) {
        auto& g = (*grads)[l];
        g.weights = acts[l].transpose() * delta;
        g.bias = delta.colwise().sum();
        if (l > 0) {
            Matrix back = delta * model.layers[l].weights.transpose();
            delta = back.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
        }
    }
    return loss;
}

void Adam::update(std::size_t slot, std::span<double> param, std::span<const double> grad) {
    if (slot >= m_.size()) {
        m_.resize(slot + 1);
        v_.resize(slot + 1);
    }
    auto& m = m_[slot];
    auto& v = v_[slot];
    if (m.size() != param.size()) {
        m.assign(param.size(), 0.0);
        v.assign(param.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i] + config_.weight_decay * param[i];
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        param[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
}

void MLPConfig::validate() const {
    if (layer_sizes.size() < 2 || layer_sizes.size() > 6)
        throw ConfigError("an MLP needs between 2 and 6 hidden layers");
    for (int s : layer_sizes)
        if (s <= 0) throw ConfigError("hidden layer sizes must be positive");
    if (!(learning_rate > 0)) throw ConfigError("learning rate must be positive");
    if (batch_size <= 0) throw ConfigError("batch size must be positive");
    if (max_epochs <= 0) throw ConfigError("max_epochs must be positive");
    if (patience <= 0) throw ConfigError("patience must be positive");
    if (min_delta < 0) throw ConfigError("min_delta must be non-negative");
}

TrainResult train(const Matrix& x, const Matrix& y, const MLPConfig& config, const Matrix& x_val,
                  const Matrix& y_val, const EpochCallback& on_epoch) {
    config.validate();
    if (x.rows() == 0 || x_val.rows() == 0) throw DataError("training and validation sets must be non-empty");
    if (x.rows() != y.rows() || x_val.rows() != y_val.rows() || x.cols() != x_val.cols() || y.cols() != y_val.cols())
        throw DataError("training/validation matrices have inconsistent shapes");

    TrainResult result;
    MLPModel model = MLPModel::glorot(static_cast<int>(x.cols()), config.layer_sizes, static_cast<int>(y.cols()),
                                      derive_seed(config.seed, 0));
    std::mt19937_64 shuffle_rng(derive_seed(config.seed, 1));
    Adam adam(AdamConfig{config.learning_rate});

    auto& report = result.report;
    report.initial_train_loss = loss_and_gradient(model, x, y, nullptr);
    report.initial_val_loss = loss_and_gradient(model, x_val, y_val, nullptr);

    const auto n = static_cast<std::size_t>(x.rows());
    const auto batch = static_cast<std::size_t>(config.batch_size);
    std::vector<Eigen::Index> order(n);
    std::iota(order.begin(), order.end(), 0);

    MLPModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    double patience_ref = std::numeric_limits<double>::infinity();
    int wait = 0;
    std::vector<DenseLayer> grads;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double epoch_loss = 0;
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t len = std::min(batch, n - start);
            std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(start + len));
            const Matrix xb = x(idx, Eigen::all);
            const Matrix yb = y(idx, Eigen::all);
            const double loss = loss_and_gradient(model, xb, yb, &grads);
            if (std::isnan(loss)) {
                std::ostringstream os;
                os << "training loss became NaN at epoch " << epoch << ", batch starting at row " << start
                   << " (learning rate " << config.learning_rate << ")";
                throw TrainingError(os.str());
            }
            epoch_loss += loss * static_cast<double>(len);
            adam.begin_step();
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                auto& layer = model.layers[l];
                adam.update(2 * l, {layer.weights.data(), static_cast<std::size_t>(layer.weights.size())},
                            {grads[l].weights.data(), static_cast<std::size_t>(grads[l].weights.size())});
                adam.update(2 * l + 1, {layer.bias.data(), static_cast<std::size_t>(layer.bias.size())},
                            {grads[l].bias.data(), static_cast<std::size_t>(grads[l].bias.size())});
            }
        }
        const double val = loss_and_gradient(model, x_val, y_val, nullptr);
        if (std::isnan(val) || !model.all_finite())
            throw TrainingError("validation loss became NaN at epoch " + std::to_string(epoch));
        report.train_loss.push_back(epoch_loss / static_cast<double>(n));
        report.val_loss.push_back(val);
        report.stopped_epoch = epoch;

        if (val < best_val) {
            best_val = val;
            best = model;
            report.best_epoch = epoch;
        }
        if (val < patience_ref - config.min_delta) {
            patience_ref = val;
            wait = 0;
        } else {
            ++wait;
        }
        if (on_epoch && on_epoch(epoch, val)) {
            report.interrupted = true;
            break;
        }
        if (wait >= config.patience) break;
    }
    result.model = std::move(best);
    return result;
}

GradientCheckResult gradient_check(const MLPModel& model, const Matrix& x, const Matrix& y, double h) {
    std::vector<DenseLayer> grads;
    loss_and_gradient(model, x, y, &grads);
    std::vector<double> analytic;
    for (const auto& g : grads) {
        analytic.insert(analytic.end(), g.weights.data(), g.weights.data() + g.weights.size());
        analytic.insert(analytic.end(), g.bias.data(), g.bias.data() + g.bias.size());
    }
    MLPModel probe = model;
    std::vector<double> params = model.flatten();
    GradientCheckResult out;
    out.parameters = params.size();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + h;
        probe.unflatten(params);
        const double up = loss_and_gradient(probe, x, y, nullptr);
        params[i] = orig - h;
        probe.unflatten(params);
        const double down = loss_and_gradient(probe, x, y, nullptr);
        params[i] = orig;
        const double numeric = (up - down) / (2 * h);
        const double diff = std::fabs(analytic[i] - numeric);
        out.max_abs_error = std::max(out.max_abs_error, diff);
        out.max_abs_analytic = std::max(out.max_abs_analytic, std::fabs(analytic[i]));
        out.max_abs_numeric = std::max(out.max_abs_numeric, std::fabs(numeric));
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric), 1e-6});
        out.max_relative_error = std::max(out.max_relative_error, diff / denom);
    }
    return out;
}

}  // namespace retrofit
