#pragma once

#include <string>

namespace superlln {

/// Gaussian transition kernels with closed-form densities, optionally times
/// a constant growth factor e^{growth t}.
///   heat:        N(x, v t I)
///   heat_drift:  N(x + c t e_1, v t I)
///   ou:          N(x e^{-g t}, v (1 - e^{-2 g t}) / (2 g) I), g > 0
struct KernelId {
  enum class Kind { heat, heat_drift, ou };

  Kind kind = Kind::heat;
  double drift = 0.0;     // c for heat_drift
  double rate = 0.0;      // g for ou
  double variance = 1.0;  // v, the constant diagonal of a
  double growth = 0.0;

  static KernelId heat(double growth = 0.0) { return {Kind::heat, 0.0, 0.0, 1.0, growth}; }
  static KernelId heat_drift(double c, double growth = 0.0) {
    return {Kind::heat_drift, c, 0.0, 1.0, growth};
  }
  static KernelId ou(double g, double growth = 0.0) { return {Kind::ou, 0.0, g, 1.0, growth}; }

  /// Throws std::invalid_argument on non-finite parameters or g <= 0 for ou.
  void validate() const;
  std::string describe() const;
};

}  // namespace superlln
