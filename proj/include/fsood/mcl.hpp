#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fsood/linalg.hpp"
#include "fsood/membank.hpp"

namespace fsood {

struct MclConfig {
  double tau = 0.2;     ///< softmax temperature
  double theta = 0.5;   ///< IoU gate threshold
  double w0 = 0.95;     ///< bank weight for the newest entries
  double alpha = 0.01;  ///< per-iteration decay of the bank weight
  double lambda = 0.3;  ///< weight of the contrastive term in the total loss
  std::size_t capacity = 8192;
  std::size_t dim = 16;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Current-iteration proposals. Row i of `embeddings` is z_i.
struct ContrastiveBatch {
  Matrix embeddings;
  std::vector<int> labels;
  std::vector<double> consistencies;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(embeddings.cols()); }

  /// Shape checks plus the unit-norm invariant on every row.
  void validate() const;
};

struct AnchorTerm {
  double gate = 0.0;         ///< phi(c_i)
  double in_batch = 0.0;     ///< L_in,i, including its 1/M^2 factor
  double cross_batch = 0.0;  ///< L_cross,i, including its 1/(M N) factor
  double loss() const { return in_batch + cross_batch; }
};

/// `total` = (1/M) sum_i gate_i * (in_batch_i + cross_batch_i). The
/// `in_batch` and `cross_batch` fields are the gated parts of that sum, so
/// total == in_batch + cross_batch up to rounding.
struct LossBreakdown {
  double total = 0.0;
  double in_batch = 0.0;
  double cross_batch = 0.0;
  std::vector<AnchorTerm> per_anchor;
};

/// Ungated sum over anchors plus the individual terms.
struct TermSum {
  double value = 0.0;
  std::vector<double> per_anchor;
};

struct MclGradient {
  LossBreakdown loss;
  /// dL/dz or dL/d(pre-normalization features), one row per proposal.
  Matrix grad;
};

struct TotalLossInputs {
  double cls_loss = 0.0;
  double reg_loss = 0.0;
  double mcl_loss = 0.0;
};

/// c when c > theta, else 0.
double consistency_weight(double c, double theta);

/// Same-label indicator times max(w0 - alpha * t, 0).
double step_weight(int label_i, int label_j, std::uint64_t t, double w0, double alpha);

// The functions below evaluate the formulas for whatever vectors they are
// given; only shapes and consistency ranges are checked. Callers feeding
// real embeddings should run ContrastiveBatch::validate() first.

TermSum in_batch_loss(const ContrastiveBatch& batch, double tau);

/// `offsets[j]` is the backward step offset of `bank[j]`. Bank entries are
/// constants of the loss.
TermSum cross_batch_loss(const ContrastiveBatch& batch, std::span<const ProposalRecord> bank,
                         std::span<const std::uint64_t> offsets, const MclConfig& config);

LossBreakdown mcl_loss(const ContrastiveBatch& batch, std::span<const ProposalRecord> bank,
                       std::span<const std::uint64_t> offsets, const MclConfig& config);

/// Loss and dL/dz_i for the batch embeddings. No gradient flows to the bank.
MclGradient mcl_loss_grad(const ContrastiveBatch& batch, std::span<const ProposalRecord> bank,
                          std::span<const std::uint64_t> offsets, const MclConfig& config);

/// Same as mcl_loss_grad, but the batch is given as raw features that are
/// L2-normalized first; the gradient is with respect to those features.
MclGradient mcl_loss_grad_features(const Matrix& features, std::span<const int> labels,
                                   std::span<const double> consistencies,
                                   std::span<const ProposalRecord> bank,
                                   std::span<const std::uint64_t> offsets,
                                   const MclConfig& config);

/// Row-wise L2 normalization. Throws std::domain_error on a zero row.
Matrix normalize_rows(const Matrix& features);

/// Backpropagates through z = u / ||u||: du = (I - z z^T) dz / ||u|| per row.
Matrix normalize_rows_backward(const Matrix& features, const Matrix& grad_normalized);

/// cls + reg + lambda * mcl.
double total_loss(const TotalLossInputs& inputs, double lambda);

}  // namespace fsood
