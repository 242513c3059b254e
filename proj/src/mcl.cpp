#include "fsood/mcl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fsood {

namespace {

void check_shapes(const ContrastiveBatch& batch) {
  const auto m = batch.size();
  if (m == 0) throw std::invalid_argument("contrastive batch is empty");
  if (static_cast<std::size_t>(batch.embeddings.rows()) != m ||
      batch.consistencies.size() != m) {
    throw std::invalid_argument("contrastive batch: embeddings, labels and consistencies differ in length");
  }
  for (double c : batch.consistencies) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw std::invalid_argument("contrastive batch: consistency outside [0, 1]");
    }
  }
}

void check_bank(const ContrastiveBatch& batch, std::span<const ProposalRecord> bank,
                std::span<const std::uint64_t> offsets) {
  if (offsets.size() != bank.size()) {
    throw std::invalid_argument("cross-batch loss: " + std::to_string(offsets.size()) +
                                " offsets for " + std::to_string(bank.size()) + " bank entries");
  }
  for (const auto& r : bank) {
    if (static_cast<std::size_t>(r.embedding.size()) != batch.dim()) {
      throw std::invalid_argument("cross-batch loss: bank embedding dimension " +
                                  std::to_string(r.embedding.size()) + " != batch dimension " +
                                  std::to_string(batch.dim()));
    }
  }
}

Matrix stack_bank(std::span<const ProposalRecord> bank, std::size_t dim) {
  Matrix out(static_cast<Eigen::Index>(bank.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t j = 0; j < bank.size(); ++j) {
    out.row(static_cast<Eigen::Index>(j)) = bank[j].embedding.transpose();
  }
  return out;
}

// Max-shifted log-sum-exp over logits[k] for k with include[k].
template <typename Include>
double log_sum_exp(const Eigen::VectorXd& logits, Include include) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (include(k)) mx = std::max(mx, logits[k]);
  }
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (Eigen::Index k = 0; k < logits.size(); ++k) {
    if (include(k)) acc += std::exp(logits[k] - mx);
  }
  return mx + std::log(acc);
}

// Per-anchor in-batch term. When `grad` is non-null, adds scale * dL_in,i/dZ.
double anchor_in_batch(const Matrix& z, std::span<const int> labels, std::size_t i, double tau,
                       double scale, Matrix* grad) {
  const auto m = static_cast<Eigen::Index>(labels.size());
  const auto ii = static_cast<Eigen::Index>(i);
  std::size_t positives = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (j != ii && labels[static_cast<std::size_t>(j)] == labels[i]) ++positives;
  }
  if (positives == 0) return 0.0;

  const Eigen::VectorXd logits = (z * z.row(ii).transpose()) / tau;
  const auto not_self = [ii](Eigen::Index k) { return k != ii; };
  const double lse = log_sum_exp(logits, not_self);

  double sum = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (j != ii && labels[static_cast<std::size_t>(j)] == labels[i]) sum += logits[j] - lse;
  }
  const double mm = static_cast<double>(m) * static_cast<double>(m);
  const double value = -sum / mm;

  if (grad != nullptr && scale != 0.0) {
    // dL/ds_ik = -(1/M^2) (1[k positive] - |P| softmax_k), s_ik = z_i.z_k / tau.
    const double coef = -scale / (mm * tau);
    const double p_count = static_cast<double>(positives);
    for (Eigen::Index k = 0; k < m; ++k) {
      if (k == ii) continue;
      const double pos = labels[static_cast<std::size_t>(k)] == labels[i] ? 1.0 : 0.0;
      const double g = coef * (pos - p_count * std::exp(logits[k] - lse));
      grad->row(ii) += g * z.row(k);
      grad->row(k) += g * z.row(ii);
    }
  }
  return value;
}

// Per-anchor cross-batch term against a stacked bank.
double anchor_cross_batch(const Matrix& z, int label, std::size_t i, const Matrix& bank_z,
                          std::span<const ProposalRecord> bank,
                          std::span<const std::uint64_t> offsets, const MclConfig& config,
                          double scale, Matrix* grad) {
  const auto n = bank_z.rows();
  if (n == 0) return 0.0;
  const auto ii = static_cast<Eigen::Index>(i);

  Eigen::VectorXd weights(n);
  double weight_sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    weights[j] = step_weight(label, bank[ju].label, offsets[ju], config.w0, config.alpha);
    weight_sum += weights[j];
  }
  if (weight_sum == 0.0) return 0.0;

  const Eigen::VectorXd logits = (bank_z * z.row(ii).transpose()) / config.tau;
  const double lse = log_sum_exp(logits, [](Eigen::Index) { return true; });

  double sum = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (weights[j] != 0.0) sum += weights[j] * (logits[j] - lse);
  }
  const double norm = static_cast<double>(z.rows()) * static_cast<double>(n);
  const double value = -sum / norm;

  if (grad != nullptr && scale != 0.0) {
    const double coef = -scale / (norm * config.tau);
    for (Eigen::Index j = 0; j < n; ++j) {
      const double g = coef * (weights[j] - weight_sum * std::exp(logits[j] - lse));
      grad->row(ii) += g * bank_z.row(j);
    }
  }
  return value;
}

LossBreakdown evaluate(const ContrastiveBatch& batch, std::span<const ProposalRecord> bank,
                       std::span<const std::uint64_t> offsets, const MclConfig& config,
                       Matrix* grad) {
  config.validate();
  check_shapes(batch);
  check_bank(batch, bank, offsets);

  const auto m = batch.size();
  const double inv_m = 1.0 / static_cast<double>(m);
  const Matrix bank_z = stack_bank(bank, batch.dim());
  if (grad != nullptr) grad->setZero(batch.embeddings.rows(), batch.embeddings.cols());

  LossBreakdown out;
  out.per_anchor.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    AnchorTerm& term = out.per_anchor[i];
    term.gate = consistency_weight(batch.consistencies[i], config.theta);
    const double scale = term.gate * inv_m;
    term.in_batch = anchor_in_batch(batch.embeddings, batch.labels, i, config.tau, scale, grad);
    term.cross_batch = anchor_cross_batch(batch.embeddings, batch.labels[i], i, bank_z, bank,
                                          offsets, config, scale, grad);
    out.in_batch += term.gate * term.in_batch;
    out.cross_batch += term.gate * term.cross_batch;
    out.total += term.gate * term.loss();
  }
  out.in_batch *= inv_m;
  out.cross_batch *= inv_m;
  out.total *= inv_m;
  if (!std::isfinite(out.total)) throw std::domain_error("contrastive loss is not finite");
  return out;
}

}  // namespace

void MclConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("MclConfig: tau must be > 0");
  if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("MclConfig: theta must be in [0, 1]");
  if (!(w0 > 0.0)) throw std::invalid_argument("MclConfig: w0 must be > 0");
  if (!(alpha >= 0.0)) throw std::invalid_argument("MclConfig: alpha must be >= 0");
  if (!(lambda >= 0.0)) throw std::invalid_argument("MclConfig: lambda must be >= 0");
  if (capacity == 0) throw std::invalid_argument("MclConfig: capacity must be positive");
}

void ContrastiveBatch::validate() const {
  check_shapes(*this);
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    const double norm = embeddings.row(i).norm();
    if (!(std::abs(norm - 1.0) <= kUnitNormTolerance)) {
      throw std::invalid_argument("contrastive batch: embedding " + std::to_string(i) +
                                  " is not unit-norm");
    }
  }
}

double consistency_weight(double c, double theta) { return c > theta ? c : 0.0; }

double step_weight(int label_i, int label_j, std::uint64_t t, double w0, double alpha) {
  if (label_i != label_j) return 0.0;
  return std::max(w0 - alpha * static_cast<double>(t), 0.0);
}

TermSum in_batch_loss(const ContrastiveBatch& batch, double tau) {
  check_shapes(batch);
  if (!(tau > 0.0)) throw std::invalid_argument("in_batch_loss: tau must be > 0");
  TermSum out;
  out.per_anchor.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double v = anchor_in_batch(batch.embeddings, batch.labels, i, tau, 0.0, nullptr);
    out.per_anchor.push_back(v);
    out.value += v;
  }
  return out;
}

TermSum cross_batch_loss(const ContrastiveBatch& batch, std::span<const ProposalRecord> bank,
                         std::span<const std::uint64_t> offsets, const MclConfig& config) {
  config.validate();
  check_shapes(batch);
  check_bank(batch, bank, offsets);
  const Matrix bank_z = stack_bank(bank, batch.dim());
  TermSum out;
  out.per_anchor.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double v = anchor_cross_batch(batch.embeddings, batch.labels[i], i, bank_z, bank,
                                        offsets, config, 0.0, nullptr);
    out.per_anchor.push_back(v);
    out.value += v;
  }
  return out;
}

LossBreakdown mcl_loss(const ContrastiveBatch& batch, std::span<const ProposalRecord> bank,
                       std::span<const std::uint64_t> offsets, const MclConfig& config) {
  return evaluate(batch, bank, offsets, config, nullptr);
}

MclGradient mcl_loss_grad(const ContrastiveBatch& batch, std::span<const ProposalRecord> bank,
                          std::span<const std::uint64_t> offsets, const MclConfig& config) {
  MclGradient out;
  out.loss = evaluate(batch, bank, offsets, config, &out.grad);
  return out;
}

MclGradient mcl_loss_grad_features(const Matrix& features, std::span<const int> labels,
                                   std::span<const double> consistencies,
                                   std::span<const ProposalRecord> bank,
                                   std::span<const std::uint64_t> offsets,
                                   const MclConfig& config) {
  ContrastiveBatch batch{normalize_rows(features), {labels.begin(), labels.end()},
                         {consistencies.begin(), consistencies.end()}};
  MclGradient out = mcl_loss_grad(batch, bank, offsets, config);
  out.grad = normalize_rows_backward(features, out.grad);
  return out;
}

Matrix normalize_rows(const Matrix& features) {
  Matrix out(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double norm = features.row(i).norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw std::domain_error("cannot L2-normalize row " + std::to_string(i) +
                              " (norm " + std::to_string(norm) + ")");
    }
    out.row(i) = features.row(i) / norm;
  }
  return out;
}

Matrix normalize_rows_backward(const Matrix& features, const Matrix& grad_normalized) {
  Matrix out(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double norm = features.row(i).norm();
    const Eigen::RowVectorXd z = features.row(i) / norm;
    const double radial = z.dot(grad_normalized.row(i));
    out.row(i) = (grad_normalized.row(i) - radial * z) / norm;
  }
  return out;
}

double total_loss(const TotalLossInputs& inputs, double lambda) {
  if (!std::isfinite(inputs.cls_loss) || !std::isfinite(inputs.reg_loss) ||
      !std::isfinite(inputs.mcl_loss)) {
    throw std::invalid_argument("total_loss: non-finite input");
  }
  return inputs.cls_loss + inputs.reg_loss + lambda * inputs.mcl_loss;
}

}  // namespace fsood
