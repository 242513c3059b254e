#include "fsood/membank.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace fsood {

namespace {

constexpr const char* kCheckpointFormat = "fsood.memory_bank";
constexpr int kCheckpointVersion = 1;

void validate_record(const ProposalRecord& r, std::size_t dim, std::size_t index) {
  if (dim != 0 && static_cast<std::size_t>(r.embedding.size()) != dim) {
    throw std::invalid_argument("enqueue_batch: record " + std::to_string(index) +
                                " has dimension " + std::to_string(r.embedding.size()) +
                                ", bank expects " + std::to_string(dim));
  }
  const double norm = r.embedding.norm();
  if (!std::isfinite(norm) || std::abs(norm - 1.0) > kUnitNormTolerance) {
    throw std::invalid_argument("enqueue_batch: record " + std::to_string(index) +
                                " is not unit-norm (norm " + std::to_string(norm) + ")");
  }
  if (!(r.consistency >= 0.0 && r.consistency <= 1.0)) {
    throw std::invalid_argument("enqueue_batch: record " + std::to_string(index) +
                                " has consistency outside [0, 1]");
  }
}

}  // namespace

MemoryBank::MemoryBank(std::size_t capacity, std::size_t dim) : capacity_(capacity), dim_(dim) {
  if (capacity == 0) throw std::invalid_argument("MemoryBank: capacity must be positive");
}

void MemoryBank::enqueue_batch(std::span<const ProposalRecord> records, std::uint64_t step) {
  if (step < current_step_) {
    throw std::invalid_argument("enqueue_batch: step " + std::to_string(step) +
                                " precedes current step " + std::to_string(current_step_));
  }
  std::size_t dim = dim_;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (dim == 0) dim = static_cast<std::size_t>(records[i].embedding.size());
    validate_record(records[i], dim, i);
  }
  dim_ = dim;
  current_step_ = step;

  // Only the newest `capacity_` of the incoming records can survive.
  const std::size_t skip = records.size() > capacity_ ? records.size() - capacity_ : 0;
  for (std::size_t i = skip; i < records.size(); ++i) {
    ProposalRecord r = records[i];
    r.step = step;
    records_.push_back(std::move(r));
  }
  while (records_.size() > capacity_) records_.pop_front();
}

std::vector<std::uint64_t> MemoryBank::backward_offsets(std::uint64_t current_step) const {
  std::vector<std::uint64_t> out;
  out.reserve(records_.size());
  for (const auto& r : records_) {
    if (r.step > current_step) {
      throw std::invalid_argument("backward_offsets: record step " + std::to_string(r.step) +
                                  " is after step " + std::to_string(current_step));
    }
    out.push_back(current_step - r.step);
  }
  return out;
}

std::vector<ProposalRecord> MemoryBank::snapshot() const {
  return {records_.begin(), records_.end()};
}

nlohmann::json MemoryBank::to_json() const {
  nlohmann::json recs = nlohmann::json::array();
  for (const auto& r : records_) {
    recs.push_back({{"label", r.label},
                    {"consistency", r.consistency},
                    {"step", r.step},
                    {"embedding", std::vector<double>(r.embedding.begin(), r.embedding.end())}});
  }
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"capacity", capacity_},
          {"dim", dim_},
          {"current_step", current_step_},
          {"records", std::move(recs)}};
}

MemoryBank MemoryBank::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw std::invalid_argument("memory bank checkpoint: unexpected format tag");
  }
  if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kCheckpointVersion) {
    throw std::invalid_argument("memory bank checkpoint: unsupported version");
  }
  try {
    return parse_checkpoint(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("memory bank checkpoint: ") + e.what());
  }
}

MemoryBank MemoryBank::parse_checkpoint(const nlohmann::json& j) {
  MemoryBank bank(j.at("capacity").get<std::size_t>(), j.at("dim").get<std::size_t>());
  const auto& recs = j.at("records");
  if (recs.size() > bank.capacity_) {
    throw std::invalid_argument("memory bank checkpoint: more records than capacity");
  }
  std::uint64_t last_step = 0;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& rj = recs[i];
    ProposalRecord r;
    const auto values = rj.at("embedding").get<std::vector<double>>();
    r.embedding = Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
    r.label = rj.at("label").get<int>();
    r.consistency = rj.at("consistency").get<double>();
    r.step = rj.at("step").get<std::uint64_t>();
    validate_record(r, bank.dim_, i);
    if (r.step < last_step) {
      throw std::invalid_argument("memory bank checkpoint: records out of step order");
    }
    last_step = r.step;
    bank.records_.push_back(std::move(r));
  }
  bank.current_step_ = j.at("current_step").get<std::uint64_t>();
  if (bank.current_step_ < last_step) {
    throw std::invalid_argument("memory bank checkpoint: current_step precedes a record");
  }
  return bank;
}

void MemoryBank::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << to_json().dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

MemoryBank MemoryBank::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw std::invalid_argument(path.string() + ": invalid JSON");
  return from_json(j);
}

std::vector<ProposalRecord> select_for_enqueue(std::span<const ProposalRecord> records,
                                               EnqueuePolicy policy, double theta) {
  std::vector<ProposalRecord> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (policy == EnqueuePolicy::all || r.consistency > theta) out.push_back(r);
  }
  return out;
}

}  // namespace fsood
