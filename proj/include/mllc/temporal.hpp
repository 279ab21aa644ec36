// Copyright 2026 The mllc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mllc {

/// Inclusive span [start, end] of fixed-length video segments.
struct Moment {
  int start = 0;
  int end = 0;

  int length() const noexcept { return end - start + 1; }
  bool valid_for(int n_segments) const noexcept { return 0 <= start && start <= end && end < n_segments; }
  bool overlaps(const Moment& o) const noexcept { return start <= o.end && o.start <= end; }

  friend auto operator<=>(const Moment&, const Moment&) = default;
};

std::string to_string(const Moment& m);

/// Every contiguous span of an n-segment video, ordered by (start, end).
std::vector<Moment> enumerate_moments(int n_segments);

/// Position of `m` in `enumerate_moments(n_segments)`.
std::size_t moment_index(const Moment& m, int n_segments);

/// Temporal endpoint feature: start and end as fractions of the video.
struct Tef {
  double start_frac = 0;
  double end_frac = 0;

  friend bool operator==(const Tef&, const Tef&) = default;
};

/// (start / n, (end + 1) / n). Throws ArgumentError when `m` is out of range.
Tef tef(const Moment& m, int n_segments);

/// Endpoint pair written for an absent before/after region.
inline constexpr Tef kPaddedTef{-1.0, -1.0};

enum class ContextMode { global, before_after, latent };

std::string_view to_string(ContextMode mode);
ContextMode parse_context_mode(std::string_view s);

/// One contiguous context region, or the two-slot before/after layout where
/// either slot may be absent (padded).
class ContextMoment {
 public:
  ContextMoment() = default;

  static ContextMoment single(const Moment& m);
  static ContextMoment before_after(std::optional<Moment> before, std::optional<Moment> after);

  bool is_split() const noexcept { return split_; }
  /// 1 for single-region contexts, 2 for the before/after layout.
  int slot_count() const noexcept { return split_ ? 2 : 1; }
  const std::optional<Moment>& slot(int i) const { return slots_.at(static_cast<std::size_t>(i)); }
  bool padded() const noexcept { return split_ && (!slots_[0] || !slots_[1]); }

  /// Present regions in ascending order.
  std::vector<Moment> regions() const;
  /// Smallest moment covering every present region; nullopt when none is present.
  std::optional<Moment> hull() const;

  bool valid_for(int n_segments) const;

  friend bool operator==(const ContextMoment&, const ContextMoment&) = default;

 private:
  bool split_ = false;
  std::array<std::optional<Moment>, 2> slots_{};
};

std::string to_string(const ContextMoment& c);

/// Candidate contexts for `base`:
///  - global: the whole video;
///  - before_after: [0, start-1] and [end+1, n-1], absent sides padded;
///  - latent: every moment of the video, as single-region contexts.
std::vector<ContextMoment> context_set(ContextMode mode, const Moment& base, int n_segments);

/// Segment-level intersection over union.
double iou(const Moment& a, const Moment& b);

}  // namespace mllc
