#include <gtest/gtest.h>

#include <filesystem>
#include <random>

#include "fsood/membank.hpp"
#include "oracles.hpp"

using namespace fsood;

namespace {

ProposalRecord record(std::mt19937_64& gen, std::size_t dim, int label) {
  std::normal_distribution<double> n;
  Vector v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = n(gen);
  std::uniform_real_distribution<double> u;
  return {v / v.norm(), label, u(gen), 0};
}

std::vector<ProposalRecord> batch(std::mt19937_64& gen, std::size_t count, std::size_t dim) {
  std::vector<ProposalRecord> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(record(gen, dim, static_cast<int>(gen() % 5)));
  return out;
}

bool same(const ProposalRecord& a, const ProposalRecord& b) {
  return a.embedding == b.embedding && a.label == b.label && a.consistency == b.consistency &&
         a.step == b.step;
}

}  // namespace

TEST(MemoryBank, FirstEnqueueIntoEmptyBank) {
  std::mt19937_64 gen(1);
  MemoryBank bank(4, 3);
  bank.enqueue_batch(batch(gen, 2, 3), 0);
  EXPECT_EQ(bank.size(), 2u);
}

TEST(MemoryBank, EvictsOldestRecordsFirst) {
  std::mt19937_64 gen(2);
  MemoryBank bank(4, 3);
  auto first = batch(gen, 3, 3);
  auto second = batch(gen, 3, 3);
  bank.enqueue_batch(first, 1);
  bank.enqueue_batch(second, 2);
  ASSERT_EQ(bank.size(), 4u);
  // Per-record eviction: the last record of the first batch survives.
  EXPECT_EQ(bank.records()[0].embedding, first[2].embedding);
  EXPECT_EQ(bank.records()[0].step, 1u);
  EXPECT_EQ(bank.records()[3].embedding, second[2].embedding);
}

TEST(MemoryBank, OversizedBatchKeepsItsTail) {
  std::mt19937_64 gen(3);
  MemoryBank bank(2, 4);
  auto b = batch(gen, 5, 4);
  bank.enqueue_batch(b, 0);
  ASSERT_EQ(bank.size(), 2u);
  EXPECT_EQ(bank.records()[0].embedding, b[3].embedding);
  EXPECT_EQ(bank.records()[1].embedding, b[4].embedding);
}

TEST(MemoryBank, RejectsBadRecordsAtomically) {
  std::mt19937_64 gen(4);
  MemoryBank bank(8, 3);
  bank.enqueue_batch(batch(gen, 2, 3), 5);
  auto bad = batch(gen, 3, 3);
  bad[2].embedding *= 2.0;
  EXPECT_THROW(bank.enqueue_batch(bad, 6), std::invalid_argument);
  EXPECT_EQ(bank.size(), 2u);
  auto wrong_dim = batch(gen, 1, 4);
  EXPECT_THROW(bank.enqueue_batch(wrong_dim, 6), std::invalid_argument);
  auto bad_c = batch(gen, 1, 3);
  bad_c[0].consistency = 1.5;
  EXPECT_THROW(bank.enqueue_batch(bad_c, 6), std::invalid_argument);
  EXPECT_THROW(bank.enqueue_batch(batch(gen, 1, 3), 4), std::invalid_argument);
  EXPECT_EQ(bank.size(), 2u);
  EXPECT_EQ(bank.current_step(), 5u);
}

TEST(MemoryBank, DimensionFixedByFirstEnqueue) {
  std::mt19937_64 gen(5);
  MemoryBank bank(8);
  bank.enqueue_batch(batch(gen, 1, 6), 0);
  EXPECT_EQ(bank.dim(), 6u);
  EXPECT_THROW(bank.enqueue_batch(batch(gen, 1, 5), 1), std::invalid_argument);
}

TEST(MemoryBank, BackwardOffsets) {
  std::mt19937_64 gen(6);
  MemoryBank bank(10, 2);
  bank.enqueue_batch(batch(gen, 2, 2), 3);
  bank.enqueue_batch(batch(gen, 1, 2), 7);
  EXPECT_EQ(bank.backward_offsets(7), (std::vector<std::uint64_t>{4, 4, 0}));
  EXPECT_EQ(bank.backward_offsets(10), (std::vector<std::uint64_t>{7, 7, 3}));
  EXPECT_THROW(bank.backward_offsets(6), std::invalid_argument);
}

TEST(MemoryBank, SnapshotIsIndependentOfLaterWrites) {
  std::mt19937_64 gen(7);
  MemoryBank bank(3, 2);
  bank.enqueue_batch(batch(gen, 3, 2), 0);
  const auto snap = bank.snapshot();
  bank.enqueue_batch(batch(gen, 3, 2), 1);
  ASSERT_EQ(snap.size(), 3u);
  EXPECT_EQ(snap[0].step, 0u);
  EXPECT_FALSE(same(snap[0], bank.records()[0]));
}

TEST(MemoryBank, MatchesReplayOracle) {
  std::mt19937_64 gen(8);
  const std::size_t capacity = 37;
  MemoryBank bank(capacity, 4);
  oracle::ReplayBank replay{capacity, {}};
  std::uint64_t step = 0;
  for (int op = 0; op < 3000; ++op) {
    step += gen() % 3;
    auto b = batch(gen, gen() % 12, 4);
    bank.enqueue_batch(b, step);
    replay.push(b, step);
    const auto want = replay.last();
    ASSERT_EQ(bank.size(), want.size());
    for (std::size_t i = 0; i < want.size(); ++i) ASSERT_TRUE(same(bank.records()[i], want[i]));
  }
}

TEST(MemoryBank, OccupancyIsMinOfStreamAndCapacity) {
  std::mt19937_64 gen(9);
  MemoryBank bank(50, 3);
  for (std::uint64_t t = 0; t < 10; ++t) {
    bank.enqueue_batch(batch(gen, 12, 3), t);
    EXPECT_EQ(bank.size(), std::min<std::size_t>(12 * (t + 1), 50));
  }
}

TEST(MemoryBank, CheckpointRoundTrip) {
  std::mt19937_64 gen(10);
  MemoryBank bank(6, 5);
  bank.enqueue_batch(batch(gen, 4, 5), 2);
  bank.enqueue_batch(batch(gen, 4, 5), 9);
  const auto path = std::filesystem::temp_directory_path() / "fsood_bank_roundtrip.json";
  bank.save(path);
  const MemoryBank back = MemoryBank::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(back.capacity(), bank.capacity());
  EXPECT_EQ(back.dim(), bank.dim());
  EXPECT_EQ(back.current_step(), bank.current_step());
  ASSERT_EQ(back.size(), bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) EXPECT_TRUE(same(back.records()[i], bank.records()[i]));
}

TEST(MemoryBank, CheckpointRejectsMalformedInput) {
  std::mt19937_64 gen(11);
  MemoryBank bank(3, 2);
  bank.enqueue_batch(batch(gen, 2, 2), 1);
  auto j = bank.to_json();
  j["records"][0]["embedding"] = {3.0, 4.0};
  EXPECT_THROW(MemoryBank::from_json(j), std::invalid_argument);
  auto k = bank.to_json();
  k["capacity"] = 1;
  EXPECT_THROW(MemoryBank::from_json(k), std::invalid_argument);
  EXPECT_THROW(MemoryBank::from_json(nlohmann::json::array()), std::invalid_argument);
}

TEST(SelectForEnqueue, Policies) {
  std::mt19937_64 gen(12);
  auto b = batch(gen, 4, 2);
  b[0].consistency = 0.2;
  b[1].consistency = 0.5;
  b[2].consistency = 0.51;
  b[3].consistency = 0.9;
  EXPECT_EQ(select_for_enqueue(b, EnqueuePolicy::all, 0.5).size(), 4u);
  const auto gated = select_for_enqueue(b, EnqueuePolicy::gated, 0.5);
  ASSERT_EQ(gated.size(), 2u);
  EXPECT_EQ(gated[0].consistency, 0.51);
}
