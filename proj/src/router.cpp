#include "greensim/router.hpp"

#include <algorithm>

namespace greensim {

void RoutingConfig::validate(int n_prefill_workers) const {
  if (thresholds.empty()) throw RouterError("routing: need at least one threshold");
  for (std::size_t i = 0; i + 1 < thresholds.size(); ++i)
    if (thresholds[i] >= thresholds[i + 1])
      throw RouterError("routing: thresholds must be ascending and distinct");
  for (int t : thresholds)
    if (t < 1) throw RouterError("routing: thresholds must be >= 1");
  if (!enabled) return;
  if (static_cast<int>(worker_map.size()) != n_prefill_workers)
    throw RouterError("routing: worker_map must name a class per prefill worker");
  std::vector<bool> covered(static_cast<std::size_t>(n_classes()), false);
  for (int c : worker_map) {
    if (c < 0 || c >= n_classes()) throw RouterError("routing: worker_map class out of range");
    covered[static_cast<std::size_t>(c)] = true;
  }
  if (!std::all_of(covered.begin(), covered.end(), [](bool b) { return b; }))
    throw RouterError("routing: every class needs at least one worker");
}

int classify(const RoutingConfig& cfg, int prompt_tokens) {
  int c = 0;
  for (int t : cfg.thresholds)
    if (t < prompt_tokens) ++c;
  return c;
}

Dispatcher::Dispatcher(const RoutingConfig& cfg) : cfg_(cfg) {
  queues_.resize(cfg_.enabled ? static_cast<std::size_t>(cfg_.n_classes()) : 1);
}

int Dispatcher::dispatch(const Request& r) {
  if (!seen_.insert(r.id).second)
    throw RouterError("request " + std::to_string(r.id) + " dispatched twice");
  const int q = cfg_.enabled ? classify(cfg_, r.prompt_tokens) : 0;
  queues_[static_cast<std::size_t>(q)].push_back(r.id);
  return q;
}

std::int64_t Dispatcher::pop(int queue) {
  auto& q = queues_[static_cast<std::size_t>(queue)];
  const std::int64_t id = q.front();
  q.pop_front();
  return id;
}

}  // namespace greensim
