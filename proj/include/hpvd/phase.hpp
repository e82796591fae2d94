#pragma once

#include <array>
#include <string>
#include <vector>

#include "hpvd/error.hpp"

namespace hpvd {

/// Contrast phases of a dynamic CT study, in canonical acquisition order.
/// The numeric values double as indices into per-phase parameter slots.
enum class Phase : int { NC = 0, AP = 1, VP = 2, DP = 3 };

constexpr int kNumPhases = 4;

constexpr std::array<Phase, 4> all_phases() {
  return {Phase::NC, Phase::AP, Phase::VP, Phase::DP};
}

inline int phase_index(Phase p) { return static_cast<int>(p); }

inline const char* phase_name(Phase p) {
  switch (p) {
    case Phase::NC: return "NC";
    case Phase::AP: return "AP";
    case Phase::VP: return "VP";
    case Phase::DP: return "DP";
  }
  fail(ErrorCode::BadArgument, "invalid phase value");
}

inline Phase phase_from_name(const std::string& s) {
  for (Phase p : all_phases())
    if (s == phase_name(p)) return p;
  fail(ErrorCode::BadArgument, "unknown phase name: " + s);
}

/// A nonempty subset of the four phases, kept in canonical order.
/// Bit k of the mask corresponds to phase index k; valid masks are 1..15.
struct PhaseSet {
  unsigned mask = 0;

  static PhaseSet from_mask(unsigned m) {
    require(m >= 1 && m <= 15, ErrorCode::BadArgument, "phase mask out of range");
    return PhaseSet{m};
  }

  static PhaseSet of(std::initializer_list<Phase> ps) {
    PhaseSet s;
    for (Phase p : ps) s.mask |= 1u << phase_index(p);
    require(s.mask != 0, ErrorCode::BadArgument, "empty phase set");
    return s;
  }

  /// Parses "NC,VP" or "NC+VP" style selectors.
  static PhaseSet parse(const std::string& text) {
    PhaseSet s;
    std::string tok;
    auto flush = [&] {
      if (!tok.empty()) {
        s.mask |= 1u << phase_index(phase_from_name(tok));
        tok.clear();
      }
    };
    for (char c : text) {
      if (c == ',' || c == '+' || c == ' ') flush();
      else tok.push_back(c);
    }
    flush();
    require(s.mask != 0, ErrorCode::BadArgument, "empty phase selector: " + text);
    return s;
  }

  bool contains(Phase p) const { return mask & (1u << phase_index(p)); }
  int count() const { return __builtin_popcount(mask); }

  std::vector<Phase> phases() const {
    std::vector<Phase> out;
    for (Phase p : all_phases())
      if (contains(p)) out.push_back(p);
    return out;
  }

  std::string name() const {
    std::string out;
    for (Phase p : phases()) {
      if (!out.empty()) out += '+';
      out += phase_name(p);
    }
    return out;
  }

  bool operator==(const PhaseSet&) const = default;
};

/// All 15 nonempty phase combinations, ordered by mask.
inline std::vector<PhaseSet> all_phase_subsets() {
  std::vector<PhaseSet> out;
  for (unsigned m = 1; m <= 15; ++m) out.push_back(PhaseSet{m});
  return out;
}

}  // namespace hpvd
