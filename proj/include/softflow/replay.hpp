#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <vector>

#include "softflow/env.hpp"
#include "softflow/rng.hpp"
#include "softflow/trajectory.hpp"

namespace softflow {

enum class Prioritization { rank, proportional };

struct BufferEntry {
  Trajectory trajectory;
  double reward_raw = 0.0;
  uint64_t insertion_seq = 0;
};

// Reward-prioritized store of feasible trajectories, deduplicated by
// terminal object. When full, a push replaces the minimum-reward entry iff
// the candidate's reward is strictly higher.
class PositiveBuffer {
 public:
  explicit PositiveBuffer(int capacity);

  int capacity() const { return capacity_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const BufferEntry& entry(size_t i) const { return entries_[i]; }
  double min_reward() const;

  bool push(Trajectory trajectory, double reward);

  // `batch` draws with replacement.
  //  rank:          weight k for the k-th lowest reward (ties broken by
  //                 insertion order), i.e. higher reward, higher weight
  //  proportional:  weight R^beta
  std::vector<BufferEntry> sample(int batch, double beta, Prioritization scheme,
                                  RngStream& rng) const;

  // Removes entries whose terminal object fails `pred`; returns them in
  // storage order. Used by reclassification.
  template <typename Pred>
  std::vector<BufferEntry> extract_if(Pred pred);

  // Checkpoint restore path: bypasses the eviction rule, keeps sequence ids.
  void restore_entry(BufferEntry entry);
  uint64_t next_seq() const { return next_seq_; }
  void set_next_seq(uint64_t seq) { next_seq_ = seq; }

 private:
  size_t min_index() const;

  int capacity_;
  std::vector<BufferEntry> entries_;
  std::unordered_map<std::string, size_t> by_key_;
  uint64_t next_seq_ = 0;
};

// FIFO store of infeasible trajectories; no deduplication.
class NegativeBuffer {
 public:
  explicit NegativeBuffer(int capacity);

  int capacity() const { return capacity_; }
  size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const Trajectory& entry(size_t i) const { return entries_[i]; }

  // Appends; evicts the oldest entry when over capacity. Returns the number
  // of evictions (0 or 1).
  int push(Trajectory trajectory);

  // `batch` uniform draws with replacement.
  std::vector<Trajectory> sample(int batch, RngStream& rng) const;

  template <typename Pred>
  std::vector<Trajectory> extract_if(Pred pred);

 private:
  int capacity_;
  std::deque<Trajectory> entries_;
};

struct ReclassifyResult {
  int moved_to_negative = 0;  // former positives now stored as negatives
  int dropped = 0;            // entries lost to FIFO capacity or rejected offers
};

// Re-evaluates every stored terminal object under `env`'s oracle:
// positives failing it move to the negative buffer (FIFO capacity applies),
// negatives passing it are offered to the positive buffer under the normal
// insertion rule. Both extractions happen before any re-insertion, so the
// outcome does not depend on interleaving.
ReclassifyResult reclassify(PositiveBuffer& positives, NegativeBuffer& negatives, const Env& env);

// --- template bodies --------------------------------------------------------

template <typename Pred>
std::vector<BufferEntry> PositiveBuffer::extract_if(Pred pred) {
  std::vector<BufferEntry> removed;
  std::vector<BufferEntry> kept;
  kept.reserve(entries_.size());
  for (BufferEntry& e : entries_) {
    if (pred(e.trajectory)) removed.push_back(std::move(e));
    else kept.push_back(std::move(e));
  }
  entries_ = std::move(kept);
  by_key_.clear();
  for (size_t i = 0; i < entries_.size(); ++i)
    by_key_.emplace(terminal_key(entries_[i].trajectory.terminal), i);
  return removed;
}

template <typename Pred>
std::vector<Trajectory> NegativeBuffer::extract_if(Pred pred) {
  std::vector<Trajectory> removed;
  std::deque<Trajectory> kept;
  for (Trajectory& t : entries_) {
    if (pred(t)) removed.push_back(std::move(t));
    else kept.push_back(std::move(t));
  }
  entries_ = std::move(kept);
  return removed;
}

}  // namespace softflow
