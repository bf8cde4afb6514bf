#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dmrs/autodiff.hpp"
#include "dmrs/tensor.hpp"

namespace dmrs {

/// Named learnable tensors in a fixed enumeration order, plus batch-norm
/// running statistics keyed by layer name. Storage is a deque so references
/// handed to a tape stay valid while entries are appended.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> tensor;
  };
  struct StatsEntry {
    std::string name;
    RunningStats<T> stats;
  };

  void add(std::string name, Tensor<T> tensor) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(tensor)});
  }

  /// Running mean starts at 0 and running variance at 1.
  void add_running(std::string name, std::int64_t channels) {
    if (stats_index_.count(name)) throw ConfigError("duplicate statistics name '" + name + "'");
    stats_index_.emplace(name, stats_.size());
    stats_.push_back({std::move(name), {Tensor<T>({channels}, T{0}), Tensor<T>({channels}, T{1})}});
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  Tensor<T>& get(const std::string& name) { return entries_[lookup(index_, name, "parameter")].tensor; }
  const Tensor<T>& get(const std::string& name) const {
    return entries_[lookup(index_, name, "parameter")].tensor;
  }

  RunningStats<T>& running(const std::string& name) {
    return stats_[lookup(stats_index_, name, "statistics")].stats;
  }
  const RunningStats<T>& running(const std::string& name) const {
    return stats_[lookup(stats_index_, name, "statistics")].stats;
  }

  std::deque<Entry>& entries() { return entries_; }
  const std::deque<Entry>& entries() const { return entries_; }
  std::deque<StatsEntry>& running_entries() { return stats_; }
  const std::deque<StatsEntry>& running_entries() const { return stats_; }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  /// Learnable scalar count (running statistics excluded).
  std::int64_t parameter_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  /// Scalars held in running statistics (mean and variance).
  std::int64_t running_count() const {
    std::int64_t n = 0;
    for (const auto& s : stats_) n += s.stats.mean.numel() + s.stats.var.numel();
    return n;
  }

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.tensor.template cast<U>());
    for (const auto& s : stats_) {
      out.add_running(s.name, s.stats.mean.numel());
      out.running(s.name) = {s.stats.mean.template cast<U>(), s.stats.var.template cast<U>()};
    }
    return out;
  }

 private:
  static std::size_t lookup(const std::unordered_map<std::string, std::size_t>& idx,
                            const std::string& name, const char* what) {
    auto it = idx.find(name);
    if (it == idx.end()) throw ConfigError(std::string("unknown ") + what + " '" + name + "'");
    return it->second;
  }

  std::deque<Entry> entries_;
  std::deque<StatsEntry> stats_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, std::size_t> stats_index_;
};

template <typename T>
using GradList = std::vector<std::pair<std::string, Tensor<T>>>;

}  // namespace dmrs
