#pragma once

#include <algorithm>
#include <string>
#include <thread>

#include "aptness/error.hpp"

namespace aptness::llm {

template <typename Fn>
auto with_retries(const RetryPolicy& policy, const SleepFn& sleep, Fn&& attempt)
    -> decltype(attempt()) {
  auto backoff = policy.initial_backoff;
  const int max_attempts = std::max(1, policy.max_attempts);
  for (int i = 1;; ++i) {
    try {
      return attempt();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kTransport) throw;
      if (i >= max_attempts) {
        throw Error(ErrorKind::kTransport, "giving up after " + std::to_string(i) +
                                               " attempt(s): " + e.what());
      }
    }
    if (sleep) {
      sleep(backoff);
    } else {
      std::this_thread::sleep_for(backoff);
    }
    backoff = std::min(policy.max_backoff,
                       std::chrono::milliseconds(static_cast<long long>(
                           static_cast<double>(backoff.count()) * policy.multiplier)));
  }
}

}  // namespace aptness::llm
