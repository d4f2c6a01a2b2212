#pragma once

#include "retrofit/mlp.hpp"
#include "retrofit/schema.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace retrofit {

// ---------------------------------------------------------------------------
// Mode-specific normalisation

struct GaussianMode {
    double mean = 0;
    double stddev = 1;
    double weight = 1;
};

/// Gaussian mixture over one continuous column. A value x encodes as (alpha, k) with
/// k a mode sampled in proportion to its responsibility and
/// alpha = (x - mean_k) / (4 stddev_k) clipped to [-1, 1].
struct ModeNormalizer {
    std::string column;
    std::vector<GaussianMode> modes;
    double min = 0;  // observed range, used to clamp decoded values
    double max = 0;
    bool integral = false;  // every fitted value was an integer

    std::size_t active_modes() const { return modes.size(); }
    std::vector<double> responsibilities(double x) const;

    struct Encoded {
        double alpha = 0;
        int mode = 0;
    };
    Encoded encode(double x, std::mt19937_64& rng) const;
    /// Inverse of encode for a given mode (no range clamping).
    double decode(double alpha, int mode) const;
};

inline constexpr int kDefaultMaxModes = 10;
inline constexpr double kDefaultWeightThreshold = 0.005;

/// Fits mixtures with 1..max_modes components by expectation-maximisation, keeps the
/// component count with the lowest BIC, then drops modes lighter than `weight_threshold`.
/// Constant columns yield one mode with a floored stddev. Requires at least 10 values.
ModeNormalizer fit_mode_normalizer(std::span<const double> values, int max_modes = kDefaultMaxModes,
                                   double weight_threshold = kDefaultWeightThreshold, std::string column = {});

// ---------------------------------------------------------------------------
// Row encoding

struct DiscreteSpec {
    std::string column;
    std::vector<Cell> categories;      // first-appearance order
    std::vector<std::size_t> counts;   // training frequency per category

    int category_of(const Cell& value) const;  // -1 when unseen
};

/// Activation applied to one contiguous block of the encoded row.
struct OutputSpan {
    enum class Activation { Tanh, Softmax };
    Activation activation = Activation::Tanh;
    std::size_t start = 0;
    std::size_t length = 0;
};

/// Encodes schema feature and label columns: continuous columns as [alpha, mode one-hot],
/// discrete columns (categorical, boolean and every label column) as category one-hots.
class TabularEncoder {
public:
    static TabularEncoder fit(const DatasetSchema& schema, const std::vector<BuildingRecord>& records,
                              int max_modes = kDefaultMaxModes, double weight_threshold = kDefaultWeightThreshold);

    std::size_t encoded_dim() const { return encoded_dim_; }
    std::size_t cond_dim() const { return cond_dim_; }
    const std::vector<OutputSpan>& spans() const { return spans_; }
    const std::vector<ModeNormalizer>& normalizers() const { return normalizers_; }
    const std::vector<DiscreteSpec>& discrete() const { return discrete_; }
    const DatasetSchema& schema() const { return schema_; }

    /// Offset of discrete column d's one-hot inside an encoded row / inside the cond vector.
    std::size_t discrete_data_offset(std::size_t d) const { return discrete_data_offset_[d]; }
    std::size_t discrete_cond_offset(std::size_t d) const { return discrete_cond_offset_[d]; }
    /// Index into discrete() of a schema column, or -1.
    int discrete_index(std::string_view column) const;

    std::vector<double> encode_row(const BuildingRecord& row, std::mt19937_64& rng) const;
    /// Argmax decoding; continuous values are clamped to the fitted range and rounded
    /// for integral columns. Ignored schema columns come back null.
    BuildingRecord decode_row(std::span<const double> encoded) const;
    Matrix encode(const std::vector<BuildingRecord>& rows, std::mt19937_64& rng) const;

    std::vector<std::vector<std::size_t>> frequencies() const;

private:
    struct Column {
        std::size_t schema_index = 0;
        bool continuous = false;
        std::size_t index = 0;  // into normalizers_ or discrete_
        std::size_t offset = 0;
    };

    DatasetSchema schema_;
    std::vector<Column> columns_;
    std::vector<ModeNormalizer> normalizers_;
    std::vector<DiscreteSpec> discrete_;
    std::vector<OutputSpan> spans_;
    std::vector<std::size_t> discrete_data_offset_;
    std::vector<std::size_t> discrete_cond_offset_;
    std::size_t encoded_dim_ = 0;
    std::size_t cond_dim_ = 0;
};

// ---------------------------------------------------------------------------
// Conditional vectors

struct CondVector {
    int column = 0;    // discrete column index
    int category = 0;  // category within that column
    std::vector<double> onehot;  // concatenation over all discrete columns
};

/// Training-by-sampling: column uniform, category proportional to log(1 + frequency).
CondVector sample_cond_vector(const std::vector<std::vector<std::size_t>>& frequencies, std::mt19937_64& rng);
CondVector make_cond_vector(const std::vector<std::vector<std::size_t>>& frequencies, int column, int category);

// ---------------------------------------------------------------------------
// GAN

struct GanConfig {
    int epochs = 800;
    std::vector<int> generator_dims = {256, 256};
    std::vector<int> discriminator_dims = {256, 256};
    int noise_dim = 128;
    int pac = 10;
    double gradient_penalty = 10.0;
    double discriminator_dropout = 0.5;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.9;
    double weight_decay = 1e-6;
    int batch_size = 64;  // clamped to the row count, then rounded down to a multiple of pac
    double gumbel_tau = 0.2;
    double leaky_slope = 0.2;
    int max_modes = kDefaultMaxModes;
    double weight_threshold = kDefaultWeightThreshold;
    std::uint64_t seed = 0;

    void validate() const;
    int effective_batch(std::size_t rows) const;
};

namespace gan {

struct Linear {
    Matrix w;  // in x out
    RowVector b;
};

/// Residual generator: each hidden block outputs [relu(bn(fc(x))), x].
struct GeneratorNet {
    std::vector<Linear> blocks;
    std::vector<Linear> norms;  // batch-norm scale (w, 1 x width) and shift (b)
    std::vector<RowVector> running_mean, running_var;
    Linear out;

    static constexpr double kNormEpsilon = 1e-5;
    static constexpr double kNormMomentum = 0.1;

    struct Cache {
        std::vector<Matrix> inputs;  // input of each block, then the final concat
        std::vector<Matrix> xhat;    // normalised pre-activations
        std::vector<RowVector> inv_std;
        std::vector<Matrix> hidden;  // relu outputs
    };
    /// Training mode normalises with batch statistics and records them in `cache`;
    /// otherwise the running statistics are used and `cache` may be null.
    Matrix forward(const Matrix& input, Cache* cache, bool training = false) const;
    /// Folds the batch statistics of a training-mode pass into the running ones.
    void update_running_stats(const Cache& cache);
    /// Returns parameter gradients in params() order given d(loss)/d(raw output).
    std::vector<Linear> backward(const Cache& cache, const Matrix& d_out) const;
    /// Blocks, then norms, then the output layer.
    std::vector<Linear*> params();
};

/// Packed discriminator: `pac` consecutive rows are concatenated before the first layer.
/// Hidden layers apply leaky ReLU then inverted dropout; dropout is active only when a
/// random source is passed.
struct DiscriminatorNet {
    std::vector<Linear> hidden;
    Linear out;
    int pac = 10;
    double slope = 0.2;
    double dropout = 0.0;

    struct Cache {
        Matrix packed;
        std::vector<Matrix> pre;   // pre-activations of hidden layers
        std::vector<Matrix> mask;  // d(post)/d(pre): leaky slope times dropout scale
        std::vector<Matrix> post;  // layer outputs after dropout
    };
    /// Scores, one per pac group.
    Matrix forward(const Matrix& rows, Cache* cache, std::mt19937_64* rng = nullptr) const;
    /// Accumulates parameter gradients for d(loss)/d(score); returns d(loss)/d(rows).
    Matrix backward(const Cache& cache, const Matrix& d_score, std::vector<Linear>* grads) const;
    /// lambda * mean_groups (||d score / d packed input|| - 1)^2, accumulating its
    /// parameter gradients into `grads` when given.
    double gradient_penalty(const Matrix& rows, double lambda, std::vector<Linear>* grads,
                            std::mt19937_64* rng = nullptr) const;
    std::vector<Linear*> params();
    std::vector<Linear> zero_grads() const;
};

/// Uniform +-1/sqrt(fan_in) initialisation for weights and biases.
GeneratorNet make_generator(int input_dim, const std::vector<int>& dims, int output_dim, std::mt19937_64& rng);
DiscriminatorNet make_discriminator(int row_dim, const std::vector<int>& dims, int pac, double slope,
                                    std::mt19937_64& rng, double dropout = 0.0);

}  // namespace gan

struct GanEpochStats {
    int epoch = 0;
    double generator_loss = 0;
    double discriminator_loss = 0;
};

using GanProgress = std::function<void(const GanEpochStats&)>;

/// Plan entry: deliver `count` rows whose label `label` equals `value`.
struct BalanceEntry {
    int label = 0;
    bool value = true;
    std::size_t count = 0;
};

struct BalancePlan {
    std::vector<BalanceEntry> entries;
    std::size_t total() const;
};

struct EntryStats {
    BalanceEntry entry;
    std::size_t delivered = 0;
    std::size_t draws = 0;
    std::size_t rejected = 0;
};

struct GenerationResult {
    std::vector<BuildingRecord> records;
    std::vector<EntryStats> stats;
    std::vector<std::string> warnings;
};

inline constexpr std::size_t kRetryBudgetPerRow = 100;

class Generator {
public:
    Generator(TabularEncoder encoder, gan::GeneratorNet net, GanConfig config)
        : encoder_(std::move(encoder)), net_(std::move(net)), config_(std::move(config)) {}

    const TabularEncoder& encoder() const { return encoder_; }
    const GanConfig& config() const { return config_; }
    const gan::GeneratorNet& net() const { return net_; }
    std::vector<double> parameters() const;

    /// Activated generator rows for the given conditions (one per row).
    Matrix sample_encoded(const std::vector<CondVector>& conds, std::mt19937_64& rng) const;

    /// Raw samples conditioned on discrete column `column` taking category `category`.
    std::vector<BuildingRecord> sample_conditioned(int column, int category, std::size_t n,
                                                   std::mt19937_64& rng) const;

    /// Rejection sampling per plan entry until exactly `count` rows satisfy the condition,
    /// within kRetryBudgetPerRow draws per requested row. Exhausted budgets yield partial
    /// entries and a warning.
    GenerationResult generate(const BalancePlan& plan, std::uint64_t seed) const;

private:
    TabularEncoder encoder_;
    gan::GeneratorNet net_;
    GanConfig config_;
};

/// Adversarial training with gradient penalty, conditional vectors on both networks,
/// and a cross-entropy term tying the generated conditioned column to the requested category.
/// Requires at least 100 rows. Throws TrainingError on non-finite losses.
Generator train_gan(const DatasetSchema& schema, const std::vector<BuildingRecord>& records, const GanConfig& config,
                    const GanProgress& progress = {});

/// Greedy label balancing: each granted row goes to the (label, minority value) with the
/// largest |positives - negatives|, then expected counts are updated using the label
/// co-occurrence rates of `labels` (rows x 4). Near-balanced states spread rows evenly.
BalancePlan make_balance_plan(const Matrix& labels, std::size_t budget);
/// Same, from marginal positive rates under label independence.
BalancePlan make_balance_plan(const std::vector<double>& positive_rates, std::size_t n, std::size_t budget);

/// Expected positive rate of each label after adding the plan's rows to `labels`.
std::vector<double> expected_positive_rates(const Matrix& labels, const BalancePlan& plan);

void to_json(nlohmann::json& j, const GanConfig& c);
void to_json(nlohmann::json& j, const BalancePlan& p);
void to_json(nlohmann::json& j, const EntryStats& s);
void to_json(nlohmann::json& j, const ModeNormalizer& m);

}  // namespace retrofit
