#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "fsood/linalg.hpp"

namespace fsood {

/// Tolerance on ||embedding|| - 1 for anything entering the bank or a batch.
inline constexpr double kUnitNormTolerance = 1e-6;

struct ProposalRecord {
  Vector embedding;
  int label = 0;
  /// IoU of the proposal with its matched ground truth, in [0, 1].
  double consistency = 0.0;
  std::uint64_t step = 0;
};

/// Which proposals of a batch are pushed into the bank.
enum class EnqueuePolicy {
  all,    ///< every proposal, regardless of the IoU gate
  gated,  ///< only proposals whose consistency passes the gate (c > theta)
};

/// Fixed-capacity FIFO of proposal records. Eviction is per record,
/// oldest first. Single writer; hand readers a snapshot().
class MemoryBank {
 public:
  /// `dim` == 0 lets the first enqueue fix the embedding dimension.
  explicit MemoryBank(std::size_t capacity, std::size_t dim = 0);

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  std::uint64_t current_step() const { return current_step_; }

  /// Appends `records`, stamping each with `step`, then evicts the oldest
  /// entries until size() <= capacity(). Throws std::invalid_argument on a
  /// non-unit embedding, a dimension mismatch, consistency outside [0, 1],
  /// or `step` < current_step(). The bank is unchanged when it throws.
  void enqueue_batch(std::span<const ProposalRecord> records, std::uint64_t step);

  /// t_j = current_step - record.step, aligned with record order.
  std::vector<std::uint64_t> backward_offsets(std::uint64_t current_step) const;

  /// Point-in-time copy, oldest first.
  std::vector<ProposalRecord> snapshot() const;

  const std::deque<ProposalRecord>& records() const { return records_; }

  nlohmann::json to_json() const;
  /// Throws std::invalid_argument on any schema or invariant violation.
  static MemoryBank from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& path) const;
  static MemoryBank load(const std::filesystem::path& path);

 private:
  static MemoryBank parse_checkpoint(const nlohmann::json& j);

  std::size_t capacity_;
  std::size_t dim_;
  std::uint64_t current_step_ = 0;
  std::deque<ProposalRecord> records_;
};

/// Filters a batch according to the enqueue policy.
std::vector<ProposalRecord> select_for_enqueue(std::span<const ProposalRecord> records,
                                               EnqueuePolicy policy, double theta);

}  // namespace fsood
