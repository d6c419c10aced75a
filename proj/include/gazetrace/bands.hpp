#pragma once

#include <string>
#include <vector>

namespace gazetrace {

/// Half-open frequency band [lo_hz, hi_hz).
struct Band {
  double lo_hz = 0.0;
  double hi_hz = 0.0;
  std::string name;

  bool contains(double f) const { return f >= lo_hz && f < hi_hz; }
  bool operator==(const Band&) const = default;
};

/// delta 0.5-4, theta 4-8, alpha 8-13, beta 13-30, gamma 30-100 Hz.
inline std::vector<Band> default_bands() {
  return {{0.5, 4.0, "delta"}, {4.0, 8.0, "theta"}, {8.0, 13.0, "alpha"}, {13.0, 30.0, "beta"}, {30.0, 100.0, "gamma"}};
}

}  // namespace gazetrace
