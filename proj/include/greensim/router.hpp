#pragma once

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "greensim/trace.hpp"

namespace greensim {

struct RouterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Length-based prompt classification. With the default single threshold of
// 1024 tokens, class 0 is ShortMedium (prompt <= 1024) and class 1 is Long.
struct RoutingConfig {
  bool enabled = true;
  std::vector<int> thresholds{1024};  // ascending, distinct
  // Class served by each prefill worker when routing is enabled. Must cover
  // every class at least once. Ignored (all workers share class 0) when
  // routing is disabled.
  std::vector<int> worker_map{0, 1};

  int n_classes() const { return static_cast<int>(thresholds.size()) + 1; }
  void validate(int n_prefill_workers) const;
};

// Number of thresholds strictly below prompt_tokens; a prompt exactly on a
// threshold stays in the lower class.
int classify(const RoutingConfig& cfg, int prompt_tokens);

// Per-class FIFO queues. With routing disabled everything funnels into a
// single shared FIFO (class 0), which is bit-identical to no router at all.
class Dispatcher {
 public:
  explicit Dispatcher(const RoutingConfig& cfg);

  // Returns the queue index the request was placed in. A request id may be
  // dispatched only once.
  int dispatch(const Request& r);

  int n_queues() const { return static_cast<int>(queues_.size()); }
  bool empty(int queue) const { return queues_[queue].empty(); }
  std::size_t size(int queue) const { return queues_[queue].size(); }
  std::int64_t front(int queue) const { return queues_[queue].front(); }
  std::int64_t pop(int queue);
  const std::deque<std::int64_t>& queue(int q) const { return queues_[q]; }

 private:
  RoutingConfig cfg_;
  std::vector<std::deque<std::int64_t>> queues_;
  std::unordered_set<std::int64_t> seen_;
};

}  // namespace greensim
