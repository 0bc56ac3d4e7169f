/*
 * Copyright 2026 The AID-MAE Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace aidmae {

/// Counter-based generator: every draw is a pure function of (key, counter),
/// so any stream can be reproduced or skipped ahead without replaying it.
/// Values do not depend on the standard library's distribution code.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  // Derive an independent generator for a sub-task, e.g. (epoch, sample).
  Rng fork(std::uint64_t a, std::uint64_t b = 0) const;

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();
  // Normal truncated to [-2 sd, 2 sd] by resampling.
  double truncated_normal(double sd);
  bool bernoulli(double p);
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }
  void set_counter(std::uint64_t c) { counter_ = c; }

 private:
  std::uint64_t key_ = 0x9E3779B97F4A7C15ULL;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

// FNV-1a, used for content hashes in manifests and checkpoints.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace aidmae
