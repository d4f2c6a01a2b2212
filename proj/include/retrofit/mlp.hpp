#pragma once

#include "retrofit/common.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace retrofit {

struct DenseLayer {
    Matrix weights;  // fan_in x fan_out
    RowVector bias;  // fan_out
};

/// Fully connected network: ReLU on hidden layers, sigmoid on the output layer.
struct MLPModel {
    std::vector<DenseLayer> layers;

    int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().weights.rows()); }
    int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weights.cols()); }
    std::size_t parameter_count() const;

    /// Pre-sigmoid output scores, one row per input row.
    Matrix scores(const Matrix& x) const;
    /// Sigmoid probabilities, one row per input row.
    Matrix predict(const Matrix& x) const;

    std::vector<double> flatten() const;
    void unflatten(std::span<const double> params);
    bool all_finite() const;

    /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    static MLPModel glorot(int input_dim, const std::vector<int>& hidden, int output_dim, std::uint64_t seed);
    static MLPModel zeros(int input_dim, const std::vector<int>& hidden, int output_dim);
};

/// Probabilities for a single feature vector. Each output lies strictly inside (0, 1).
Vector forward(const MLPModel& model, std::span<const double> x);

/// Logistic function clamped to the open interval (0, 1).
double sigmoid(double z);

inline constexpr double kBceEpsilon = 1e-7;

/// Mean binary cross-entropy over every entry, probabilities clipped to [eps, 1 - eps].
double bce_loss(const Matrix& probs, const Matrix& labels);
double bce_loss(std::span<const double> probs, std::span<const double> labels);

/// Loss of `model` on (x, y) and, when `grads` is given, its gradient per layer.
double loss_and_gradient(const MLPModel& model, const Matrix& x, const Matrix& y,
                         std::vector<DenseLayer>* grads);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;  // L2 term added to the gradient
};

/// Adam state for a fixed set of parameter blocks, addressed by slot.
class Adam {
public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// Advances the shared step counter; call once per optimisation step.
    void begin_step() { ++t_; }
    void update(std::size_t slot, std::span<double> param, std::span<const double> grad);

    const AdamConfig& config() const { return config_; }

private:
    AdamConfig config_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct MLPConfig {
    std::vector<int> layer_sizes = {64, 64};  // hidden layers
    double learning_rate = 1e-3;
    int batch_size = 32;
    int max_epochs = 200;
    int patience = 10;
    double min_delta = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

struct TrainReport {
    double initial_train_loss = 0;  // before the first update
    double initial_val_loss = 0;
    std::vector<double> train_loss;  // index e-1 holds epoch e
    std::vector<double> val_loss;
    int best_epoch = 0;
    int stopped_epoch = 0;
    bool interrupted = false;  // stopped by the epoch callback
};

/// Called after each epoch with (epoch, validation loss); return true to stop training.
using EpochCallback = std::function<bool(int, double)>;

struct TrainResult {
    MLPModel model;  // parameters of the best validation epoch
    TrainReport report;
};

/// Mini-batch Adam training on mean BCE with early stopping on validation loss.
/// Deterministic for a given config seed. Throws TrainingError if the loss becomes NaN.
TrainResult train(const Matrix& x, const Matrix& y, const MLPConfig& config, const Matrix& x_val,
                  const Matrix& y_val, const EpochCallback& on_epoch = {});

struct GradientCheckResult {
    double max_relative_error = 0;
    double max_abs_error = 0;
    double max_abs_analytic = 0;
    double max_abs_numeric = 0;
    std::size_t parameters = 0;
};

/// Compares backprop gradients with central finite differences on every parameter.
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradientCheckResult gradient_check(const MLPModel& model, const Matrix& x, const Matrix& y, double h = 1e-5);

}  // namespace retrofit
