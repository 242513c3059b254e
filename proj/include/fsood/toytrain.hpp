#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsood/linalg.hpp"
#include "fsood/mcl.hpp"
#include "fsood/membank.hpp"

namespace fsood {

// ---------------------------------------------------------------------------
// Synthetic proposals

/// Class-conditional Gaussian clusters standing in for detector RoI features.
/// Class centers are random directions of length `separation`; each feature
/// is its class center plus isotropic noise of standard deviation `noise`.
/// Consistencies are uniform on [consistency_low, consistency_high].
struct SyntheticConfig {
  int classes = 5;
  int input_dim = 32;
  double separation = 3.0;
  double noise = 1.0;
  double consistency_low = 0.3;
  double consistency_high = 1.0;
  int batch = 12;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticBatch {
  Matrix features;
  std::vector<int> labels;
  std::vector<double> consistencies;
};

/// Rows are the class centers; a pure function of (config.seed, classes, dims).
Matrix class_centers(const SyntheticConfig& config);

/// Deterministic in (config, step).
SyntheticBatch generate_batch(const SyntheticConfig& config, std::uint64_t step);

/// `count` samples from a stream independent of the training batches.
SyntheticBatch generate_eval_set(const SyntheticConfig& config, std::size_t count);

// ---------------------------------------------------------------------------
// Projection encoder: affine -> ReLU -> affine -> L2 normalization

struct ProjectionEncoder {
  Matrix w1;  ///< hidden x input
  Vector b1;
  Matrix w2;  ///< embed x hidden
  Vector b2;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  static ProjectionEncoder init(int input_dim, int hidden_dim, int embed_dim, std::uint64_t seed);

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }
  int embed_dim() const { return static_cast<int>(w2.rows()); }

  /// Views over w1, b1, w2, b2, in that order.
  std::vector<std::span<double>> parameters();
  bool operator==(const ProjectionEncoder& other) const;
};

struct EncoderCache {
  Matrix input;
  Matrix hidden_pre;  ///< before ReLU
  Matrix hidden;
  Matrix output_pre;  ///< before normalization
  Matrix embeddings;
};

struct EncoderGradients {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
  Matrix input;

  std::vector<std::span<const double>> parameters() const;
};

/// Throws std::domain_error when an output row is zero before normalization.
EncoderCache encoder_forward(const ProjectionEncoder& encoder, const Matrix& features);

EncoderGradients encoder_backward(const ProjectionEncoder& encoder, const EncoderCache& cache,
                                  const Matrix& grad_embeddings);

// ---------------------------------------------------------------------------
// Surrogate classification head (linear softmax on the embeddings)

struct LinearHead {
  Matrix w;  ///< classes x embed
  Vector b;

  static LinearHead init(int embed_dim, int classes, std::uint64_t seed);
  std::vector<std::span<double>> parameters();
};

struct HeadResult {
  double loss = 0.0;  ///< mean cross-entropy
  Matrix grad_embeddings;
  Matrix grad_w;
  Vector grad_b;
};

HeadResult head_loss(const LinearHead& head, const Matrix& embeddings, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Optimizer and schedule

struct SgdConfig {
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// v <- momentum * v + (grad + weight_decay * param); param <- param - lr * v.
/// Throws std::invalid_argument on a non-finite gradient or a shape mismatch,
/// leaving everything untouched.
void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> velocity,
              const SgdConfig& config, double lr);

/// Momentum buffers for a fixed list of parameter tensors.
class SgdState {
 public:
  explicit SgdState(SgdConfig config = {}) : config_(config) {}

  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads, double lr);
  const std::vector<std::vector<double>>& buffers() const { return buffers_; }
  const SgdConfig& config() const { return config_; }

 private:
  SgdConfig config_;
  std::vector<std::vector<double>> buffers_;
};

/// Linear warmup from warmup_start_fraction * base_lr to base_lr over the
/// first warmup_iterations, then multiplied by decay_factor once each
/// milestone has been reached (iteration >= milestone).
struct LrSchedule {
  double base_lr = 1e-3;
  int warmup_iterations = 200;
  double warmup_start_fraction = 1.0 / 3.0;
  std::vector<int> milestones{8000};
  double decay_factor = 0.1;

  void validate() const;
};

double lr_at(const LrSchedule& schedule, int iteration);

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  SyntheticConfig data;
  MclConfig mcl;
  LrSchedule schedule;
  SgdConfig sgd;
  int hidden_dim = 64;
  int iterations = 2000;
  /// Adds a linear-softmax cross-entropy on z as the classification loss.
  bool surrogate_cls = false;
  EnqueuePolicy enqueue = EnqueuePolicy::all;
  int eval_samples = 1000;
  int smoothing_window = 50;

  /// Bank capacity 512, embedding dim 16, base LR 0.1.
  TrainConfig();
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct LossRecord {
  int iteration = 0;
  double total = 0.0;
  double in_batch = 0.0;
  double cross_batch = 0.0;
  double mcl = 0.0;
  double cls = 0.0;
};

struct Compactness {
  double intra = 0.0;
  double inter = 0.0;
  double margin = 0.0;
  /// Labels dropped for having fewer than two samples.
  std::vector<int> excluded_labels;
};

struct TrainResult {
  ProjectionEncoder initial_encoder;
  ProjectionEncoder encoder;
  LinearHead head;
  std::vector<LossRecord> history;
  MemoryBank bank;
  Compactness initial_metrics;
  Compactness final_metrics;
  SyntheticBatch eval_set;
  Matrix eval_embeddings;  ///< final encoder on eval_set
};

/// Per iteration: generate batch, encode, MCL loss against the bank
/// snapshot (+ surrogate classification loss), backpropagate, SGD step, then
/// enqueue the iteration's embeddings. Deterministic given the config.
TrainResult train(const TrainConfig& config);

/// Mean of the last `window` entries of `values` (all of them if fewer).
double smoothed_tail(std::span<const double> values, std::size_t window);
double smoothed_head(std::span<const double> values, std::size_t window);

/// Mean cosine similarity over same-label pairs and over different-label
/// pairs. Throws std::invalid_argument unless at least two labels keep two or
/// more samples.
Compactness compactness_metrics(const Matrix& embeddings, std::span<const int> labels);

/// CSV "label,dim0,...,dim{D-1}" with shortest round-trip doubles.
void export_embeddings(const Matrix& embeddings, std::span<const int> labels,
                       const std::filesystem::path& path);
/// Inverse of export_embeddings, for tests and downstream tools.
std::pair<Matrix, std::vector<int>> read_embeddings(const std::filesystem::path& path);

/// CSV "iteration,total,in_batch,cross_batch,mcl,cls".
void write_loss_curve(std::span<const LossRecord> history, const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace fsood
