#include "softflow/replay.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace softflow {

PositiveBuffer::PositiveBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("PositiveBuffer: capacity must be >= 1");
}

double PositiveBuffer::min_reward() const {
  if (entries_.empty()) throw std::logic_error("PositiveBuffer: min_reward of empty buffer");
  return entries_[min_index()].reward_raw;
}

size_t PositiveBuffer::min_index() const {
  size_t best = 0;
  for (size_t i = 1; i < entries_.size(); ++i) {
    const BufferEntry& e = entries_[i];
    const BufferEntry& b = entries_[best];
    if (e.reward_raw < b.reward_raw ||
        (e.reward_raw == b.reward_raw && e.insertion_seq < b.insertion_seq))
      best = i;
  }
  return best;
}

bool PositiveBuffer::push(Trajectory trajectory, double reward) {
  if (!trajectory.feasible)
    throw std::invalid_argument("PositiveBuffer: push of infeasible trajectory");
  const std::string key = terminal_key(trajectory.terminal);
  if (by_key_.count(key)) return false;  // redundant terminal object
  if (static_cast<int>(entries_.size()) < capacity_) {
    by_key_.emplace(key, entries_.size());
    entries_.push_back({std::move(trajectory), reward, next_seq_++});
    return true;
  }
  const size_t victim = min_index();
  if (reward <= entries_[victim].reward_raw) return false;
  by_key_.erase(terminal_key(entries_[victim].trajectory.terminal));
  by_key_.emplace(key, victim);
  entries_[victim] = {std::move(trajectory), reward, next_seq_++};
  return true;
}

std::vector<BufferEntry> PositiveBuffer::sample(int batch, double beta, Prioritization scheme,
                                                RngStream& rng) const {
  if (entries_.empty()) throw std::invalid_argument("PositiveBuffer: sample from empty buffer");
  if (batch < 1) throw std::invalid_argument("PositiveBuffer: batch must be >= 1");
  const size_t n = entries_.size();

  std::vector<BufferEntry> out;
  out.reserve(static_cast<size_t>(batch));

  if (scheme == Prioritization::rank) {
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (entries_[a].reward_raw != entries_[b].reward_raw)
        return entries_[a].reward_raw < entries_[b].reward_raw;
      return entries_[a].insertion_seq < entries_[b].insertion_seq;
    });
    // rank k (1-based, lowest reward first) carries weight k; inverse CDF of
    // the triangular cumulative k(k+1)/2.
    const double total = static_cast<double>(n) * (static_cast<double>(n) + 1.0) / 2.0;
    for (int i = 0; i < batch; ++i) {
      const double target = rng.uniform01() * total;
      size_t lo = 1, hi = n;
      while (lo < hi) {
        const size_t mid = (lo + hi) / 2;
        const double cum = static_cast<double>(mid) * (static_cast<double>(mid) + 1.0) / 2.0;
        if (cum > target) hi = mid;
        else lo = mid + 1;
      }
      out.push_back(entries_[order[lo - 1]]);
    }
    return out;
  }

  std::vector<double> cum(n);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    acc += std::pow(entries_[i].reward_raw, beta);
    cum[i] = acc;
  }
  for (int i = 0; i < batch; ++i) {
    const double target = rng.uniform01() * acc;
    const size_t idx = static_cast<size_t>(
        std::upper_bound(cum.begin(), cum.end(), target) - cum.begin());
    out.push_back(entries_[std::min(idx, n - 1)]);
  }
  return out;
}

void PositiveBuffer::restore_entry(BufferEntry entry) {
  if (static_cast<int>(entries_.size()) >= capacity_)
    throw std::logic_error("PositiveBuffer: restore over capacity");
  const std::string key = terminal_key(entry.trajectory.terminal);
  if (by_key_.count(key)) throw std::logic_error("PositiveBuffer: restore duplicate terminal");
  by_key_.emplace(key, entries_.size());
  entries_.push_back(std::move(entry));
}

NegativeBuffer::NegativeBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("NegativeBuffer: capacity must be >= 1");
}

int NegativeBuffer::push(Trajectory trajectory) {
  if (trajectory.feasible)
    throw std::invalid_argument("NegativeBuffer: push of feasible trajectory");
  entries_.push_back(std::move(trajectory));
  int evicted = 0;
  while (static_cast<int>(entries_.size()) > capacity_) {
    entries_.pop_front();
    ++evicted;
  }
  return evicted;
}

std::vector<Trajectory> NegativeBuffer::sample(int batch, RngStream& rng) const {
  if (entries_.empty()) throw std::invalid_argument("NegativeBuffer: sample from empty buffer");
  if (batch < 1) throw std::invalid_argument("NegativeBuffer: batch must be >= 1");
  std::vector<Trajectory> out;
  out.reserve(static_cast<size_t>(batch));
  for (int i = 0; i < batch; ++i)
    out.push_back(entries_[static_cast<size_t>(rng.uniform_int(entries_.size()))]);
  return out;
}

ReclassifyResult reclassify(PositiveBuffer& positives, NegativeBuffer& negatives, const Env& env) {
  ReclassifyResult result;

  std::vector<BufferEntry> demoted =
      positives.extract_if([&](const Trajectory& t) { return !env.feasible(t.terminal); });
  std::vector<Trajectory> promoted =
      negatives.extract_if([&](const Trajectory& t) { return env.feasible(t.terminal); });

  for (BufferEntry& e : demoted) {
    e.trajectory.feasible = false;
    result.dropped += negatives.push(std::move(e.trajectory));
    ++result.moved_to_negative;
  }
  for (Trajectory& t : promoted) {
    t.feasible = true;
    const double reward = t.reward_raw;
    if (!positives.push(std::move(t), reward)) ++result.dropped;
  }
  return result;
}

}  // namespace softflow
