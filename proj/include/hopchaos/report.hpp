#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace hopchaos {

enum class TVMethod { exact, pinsker, chi2_upper, hoelder_lower, mc_estimate, gaussian_limit };

inline std::string_view to_string(TVMethod m) noexcept {
  switch (m) {
    case TVMethod::exact: return "exact";
    case TVMethod::pinsker: return "pinsker";
    case TVMethod::chi2_upper: return "chi2-upper";
    case TVMethod::hoelder_lower: return "hoelder-lower";
    case TVMethod::mc_estimate: return "mc-estimate";
    case TVMethod::gaussian_limit: return "gaussian-limit";
  }
  return "unknown";
}

/// A total-variation value or bound. value is clipped to [0, 1]; raw_value is
/// what the method produced (bounds above 1 are kept there).
struct TVReport {
  double value = 0.0;
  double raw_value = 0.0;
  TVMethod method = TVMethod::exact;
  double stderr_ = 0.0;
  std::optional<std::uint64_t> seed;

  bool clipped() const noexcept { return value != raw_value; }

  static TVReport make(double raw, TVMethod method, double stderr_value = 0.0,
                       std::optional<std::uint64_t> seed = std::nullopt) {
    return {std::clamp(raw, 0.0, 1.0), raw, method, stderr_value, seed};
  }
};

enum class MomentMethod { exact_enumeration, quadrature_replica, mc_replica };

inline std::string_view to_string(MomentMethod m) noexcept {
  switch (m) {
    case MomentMethod::exact_enumeration: return "exact-enumeration";
    case MomentMethod::quadrature_replica: return "quadrature-replica";
    case MomentMethod::mc_replica: return "mc-replica";
  }
  return "unknown";
}

struct MomentReport {
  double order = 1.0;
  double value = 0.0;
  MomentMethod method = MomentMethod::exact_enumeration;
  double stderr_ = 0.0;
};

}  // namespace hopchaos
