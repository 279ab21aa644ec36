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

#include "mllc/temporal.hpp"

#include "mllc/error.hpp"

#include <algorithm>

namespace mllc {

std::string to_string(const Moment& m) { return "(" + std::to_string(m.start) + "," + std::to_string(m.end) + ")"; }

std::vector<Moment> enumerate_moments(int n_segments) {
  if (n_segments < 1) throw ArgumentError("enumerate_moments: video needs at least one segment");
  std::vector<Moment> out;
  out.reserve(static_cast<std::size_t>(n_segments * (n_segments + 1) / 2));
  for (int s = 0; s < n_segments; ++s)
    for (int e = s; e < n_segments; ++e) out.push_back({s, e});
  return out;
}

std::size_t moment_index(const Moment& m, int n) {
  if (!m.valid_for(n)) throw ArgumentError("moment " + to_string(m) + " out of range");
  // Moments starting before m.start: n + (n-1) + ... + (n-start+1).
  const int before = m.start * n - m.start * (m.start - 1) / 2;
  return static_cast<std::size_t>(before + (m.end - m.start));
}

Tef tef(const Moment& m, int n_segments) {
  if (!m.valid_for(n_segments))
    throw ArgumentError("tef: moment " + to_string(m) + " invalid for " + std::to_string(n_segments) + " segments");
  const double n = n_segments;
  return {m.start / n, (m.end + 1) / n};
}

std::string_view to_string(ContextMode mode) {
  switch (mode) {
    case ContextMode::global: return "global";
    case ContextMode::before_after: return "before_after";
    case ContextMode::latent: return "latent";
  }
  return "?";
}

ContextMode parse_context_mode(std::string_view s) {
  if (s == "global") return ContextMode::global;
  if (s == "before_after") return ContextMode::before_after;
  if (s == "latent") return ContextMode::latent;
  throw ConfigError("unknown context mode '" + std::string(s) + "'");
}

ContextMoment ContextMoment::single(const Moment& m) {
  ContextMoment c;
  c.slots_[0] = m;
  return c;
}

ContextMoment ContextMoment::before_after(std::optional<Moment> before, std::optional<Moment> after) {
  if (before && after && before->end >= after->start)
    throw ArgumentError("before/after context regions overlap or are out of order");
  ContextMoment c;
  c.split_ = true;
  c.slots_ = {before, after};
  return c;
}

std::vector<Moment> ContextMoment::regions() const {
  std::vector<Moment> out;
  for (const auto& s : slots_)
    if (s) out.push_back(*s);
  return out;
}

std::optional<Moment> ContextMoment::hull() const {
  auto r = regions();
  if (r.empty()) return std::nullopt;
  return Moment{r.front().start, r.back().end};
}

bool ContextMoment::valid_for(int n) const {
  if (!split_) return slots_[0] && slots_[0]->valid_for(n);
  for (const auto& s : slots_)
    if (s && !s->valid_for(n)) return false;
  return !(slots_[0] && slots_[1] && slots_[0]->end >= slots_[1]->start);
}

std::string to_string(const ContextMoment& c) {
  if (!c.is_split()) return to_string(*c.slot(0));
  auto part = [](const std::optional<Moment>& m) { return m ? to_string(*m) : std::string("pad"); };
  return "[" + part(c.slot(0)) + "|" + part(c.slot(1)) + "]";
}

std::vector<ContextMoment> context_set(ContextMode mode, const Moment& base, int n_segments) {
  if (!base.valid_for(n_segments))
    throw ArgumentError("context_set: base " + to_string(base) + " invalid for " + std::to_string(n_segments) +
                        " segments");
  switch (mode) {
    case ContextMode::global:
      return {ContextMoment::single({0, n_segments - 1})};
    case ContextMode::before_after: {
      std::optional<Moment> before, after;
      if (base.start > 0) before = Moment{0, base.start - 1};
      if (base.end < n_segments - 1) after = Moment{base.end + 1, n_segments - 1};
      return {ContextMoment::before_after(before, after)};
    }
    case ContextMode::latent: {
      std::vector<ContextMoment> out;
      for (const Moment& m : enumerate_moments(n_segments)) out.push_back(ContextMoment::single(m));
      return out;
    }
  }
  return {};
}

double iou(const Moment& a, const Moment& b) {
  const int inter = std::min(a.end, b.end) - std::max(a.start, b.start) + 1;
  if (inter <= 0) return 0.0;
  const int uni = std::max(a.end, b.end) - std::min(a.start, b.start) + 1;
  return static_cast<double>(inter) / uni;
}

}  // namespace mllc
