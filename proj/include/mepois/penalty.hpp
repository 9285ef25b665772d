#pragma once

// Folded-concave penalties (SCAD, MCP): zero at the origin, slope lambda at 0+,
// weakly convex with constant mu, and flat beyond shape * lambda.

#include "mepois/errors.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace mepois {

enum class PenaltyFamily { Scad, Mcp };

inline const char* to_string(PenaltyFamily f) { return f == PenaltyFamily::Scad ? "scad" : "mcp"; }

inline PenaltyFamily parse_penalty_family(const std::string& s) {
  if (s == "scad" || s == "SCAD") return PenaltyFamily::Scad;
  if (s == "mcp" || s == "MCP") return PenaltyFamily::Mcp;
  throw InvalidArgument("unknown penalty family '" + s + "'");
}

inline constexpr double kDefaultScadShape = 3.7;
inline constexpr double kDefaultMcpShape = 3.0;

inline double default_shape(PenaltyFamily f) {
  return f == PenaltyFamily::Scad ? kDefaultScadShape : kDefaultMcpShape;
}

struct PenaltySpec {
  PenaltyFamily family = PenaltyFamily::Scad;
  double lambda = 1.0;
  double shape = kDefaultScadShape;  // a for SCAD, gamma for MCP

  static PenaltySpec scad(double lambda, double a = kDefaultScadShape) {
    PenaltySpec s{PenaltyFamily::Scad, lambda, a};
    s.validate();
    return s;
  }
  static PenaltySpec mcp(double lambda, double gamma = kDefaultMcpShape) {
    PenaltySpec s{PenaltyFamily::Mcp, lambda, gamma};
    s.validate();
    return s;
  }

  void validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("penalty lambda must be positive");
    if (family == PenaltyFamily::Scad && !(shape > 2.0)) throw InvalidArgument("SCAD requires a > 2");
    if (family == PenaltyFamily::Mcp && !(shape > 1.0)) throw InvalidArgument("MCP requires gamma > 1");
    if (!std::isfinite(shape)) throw InvalidArgument("penalty shape must be finite");
  }

  /// Weak-convexity constant: rho(t) + mu t^2 / 2 is convex.
  double mu() const { return family == PenaltyFamily::Scad ? 1.0 / (shape - 1.0) : 1.0 / shape; }
};

inline double rho(const PenaltySpec& s, double t) {
  const double a = std::abs(t);
  const double l = s.lambda;
  if (s.family == PenaltyFamily::Scad) {
    if (a <= l) return l * a;
    if (a <= s.shape * l) return (2.0 * s.shape * l * a - a * a - l * l) / (2.0 * (s.shape - 1.0));
    return 0.5 * (s.shape + 1.0) * l * l;
  }
  if (a <= s.shape * l) return l * a - a * a / (2.0 * s.shape);
  return 0.5 * s.shape * l * l;
}

/// Derivative for t != 0. At t == 0 returns lambda, the right limit; the
/// subdifferential there is [-lambda, lambda].
inline double rho_prime(const PenaltySpec& s, double t) {
  const double a = std::abs(t);
  const double sign = t < 0.0 ? -1.0 : 1.0;
  const double l = s.lambda;
  if (s.family == PenaltyFamily::Scad) {
    if (a <= l) return sign * l;
    if (a < s.shape * l) return sign * (s.shape * l - a) / (s.shape - 1.0);
    return 0.0;
  }
  if (a < s.shape * l) return sign * (l - a / s.shape);
  return 0.0;
}

/// q(t) = lambda |t| - rho(t).
inline double q_lambda(const PenaltySpec& s, double t) { return s.lambda * std::abs(t) - rho(s, t); }

/// argmin_x rho(x) + weight/2 (x - z)^2. Requires weight > mu so the scalar
/// problem is strictly convex.
inline double prox(const PenaltySpec& s, double z, double weight) {
  if (!(weight > s.mu())) {
    throw NonConvexProx("prox weight " + std::to_string(weight) +
                        " does not exceed penalty mu " + std::to_string(s.mu()));
  }
  const double a = std::abs(z);
  const double sign = z < 0.0 ? -1.0 : 1.0;
  const double l = s.lambda;
  const double soft = std::max(0.0, a - l / weight);
  if (s.family == PenaltyFamily::Scad) {
    if (a <= l * (1.0 + 1.0 / weight)) return sign * soft;
    if (a <= s.shape * l) {
      const double k = weight * (s.shape - 1.0);
      return sign * (k * a - s.shape * l) / (k - 1.0);
    }
    return z;
  }
  if (a <= s.shape * l) return sign * soft / (1.0 - 1.0 / (weight * s.shape));
  return z;
}

}  // namespace mepois
