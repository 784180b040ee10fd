#ifndef FIRE_PENALTIES_HPP
#define FIRE_PENALTIES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "fire/error.hpp"

namespace fire {

enum class PenaltyKind { l1, mcp };

/// Regularization hyperparameters: sparsity level lambda_s, MCP concavity
/// gamma (ignored for L1) and fusion level lambda_f.
struct PenaltyConfig {
  PenaltyKind kind = PenaltyKind::mcp;
  double lambda_s = 0.0;
  double gamma = 1.1;
  double lambda_f = 0.0;

  void validate() const {
    if (!(std::isfinite(lambda_s) && lambda_s >= 0.0))
      throw invalid_input("lambda_s must be finite and >= 0");
    if (!(std::isfinite(lambda_f) && lambda_f >= 0.0))
      throw invalid_input("lambda_f must be finite and >= 0");
    if (kind == PenaltyKind::mcp && !(gamma > 1.0 && std::isfinite(gamma)))
      throw invalid_input("MCP gamma must be finite and > 1, got " + std::to_string(gamma));
  }
};

// ---------------------------------------------------------------------------
// Penalty values

inline double mcp_value(double w, double lambda, double gamma) {
  const double a = std::abs(w);
  if (a <= lambda * gamma) return lambda * a - w * w / (2.0 * gamma);
  return 0.5 * gamma * lambda * lambda;
}

inline double sparsity_value(std::span<const double> w, const PenaltyConfig& cfg) {
  double s = 0.0;
  if (cfg.kind == PenaltyKind::l1) {
    for (double x : w) s += std::abs(x);
    return cfg.lambda_s * s;
  }
  for (double x : w) s += mcp_value(x, cfg.lambda_s, cfg.gamma);
  return s;
}

/// lambda_f * sum_j |w_{j+1} - w_j| over one block in canonical leaf order.
inline double fusion_value(std::span<const double> w_t, double lambda_f) {
  if (lambda_f == 0.0 || w_t.size() < 2) return 0.0;
  double s = 0.0;
  for (std::size_t j = 1; j < w_t.size(); ++j) s += std::abs(w_t[j] - w_t[j - 1]);
  return lambda_f * s;
}

inline double block_penalty(std::span<const double> w_t, const PenaltyConfig& cfg) {
  return sparsity_value(w_t, cfg) + fusion_value(w_t, cfg.lambda_f);
}

/// h(w) + g(w) for a weight vector partitioned by `offsets` (size T+1).
inline double penalty_value(std::span<const double> w, std::span<const std::size_t> offsets,
                            const PenaltyConfig& cfg) {
  double s = 0.0;
  for (std::size_t t = 0; t + 1 < offsets.size(); ++t)
    s += block_penalty(w.subspan(offsets[t], offsets[t + 1] - offsets[t]), cfg);
  return s;
}

// ---------------------------------------------------------------------------
// Scalar thresholding operators

inline double soft_threshold(double theta_hat, double tau) {
  const double a = std::abs(theta_hat) - tau;
  return a > 0.0 ? std::copysign(a, theta_hat) : 0.0;
}

/// MCP thresholding operator for a unit-curvature quadratic:
/// (gamma/(gamma-1)) S_tau(theta_hat) when |theta_hat| <= tau*gamma, else
/// theta_hat. Here tau = lambda / L.
inline double mcp_threshold(double theta_hat, double lambda_over_L, double gamma) {
  if (!(gamma > 1.0)) throw invalid_input("MCP gamma must be > 1, got " + std::to_string(gamma));
  if (std::abs(theta_hat) <= lambda_over_L * gamma)
    return gamma / (gamma - 1.0) * soft_threshold(theta_hat, lambda_over_L);
  return theta_hat;
}

/// Exact argmin_theta (L/2)(theta - z)^2 + P_gamma(theta, lambda).
///
/// Dividing by L gives a unit-curvature problem with penalty
/// P_{gamma L}(theta, lambda / L), so the MCP thresholding operator applies
/// with concavity gamma*L whenever gamma*L > 1. Otherwise the objective is
/// concave on |theta| <= lambda*gamma and the minimizer is either 0 or on
/// the flat part of the penalty.
inline double mcp_prox_scalar(double z, double lambda, double gamma, double L) {
  const double g_eff = gamma * L;
  if (g_eff > 1.0) return mcp_threshold(z, lambda / L, g_eff);
  const double a = std::abs(z);
  const double flat = std::max(a, lambda * gamma);
  const double keep = 0.5 * L * (flat - a) * (flat - a) + 0.5 * gamma * lambda * lambda;
  const double zero = 0.5 * L * z * z;
  return keep < zero ? std::copysign(flat, z) : 0.0;
}

// ---------------------------------------------------------------------------
// Fused lasso signal approximation

/// Caller-owned scratch for flsa(); reuse one per thread.
class FlsaWorkspace {
 public:
  void reserve(std::size_t n) {
    if (x_.size() < 2 * n) {
      x_.resize(2 * n);
      a_.resize(2 * n);
      b_.resize(2 * n);
    }
    if (tm_.size() < n) {
      tm_.resize(n);
      tp_.resize(n);
    }
  }

 private:
  friend void flsa(std::span<const double>, double, std::span<double>, FlsaWorkspace&);
  std::vector<double> x_, a_, b_, tm_, tp_;
};

/// Exact minimizer of 1/2 ||theta - y||^2 + tau * sum_j |theta_{j+1} - theta_j|.
///
/// Linear-time dynamic program: the derivative of each forward message is
/// piecewise linear, stored as knots x with slope/intercept increments (a, b)
/// in a deque laid out in [lo, hi] of x_. Each step clamps the derivative to
/// [-tau, tau], records the two knots (tm, tp) where the clamp engages, and
/// the back pass clips the successor's value into [tm, tp].
inline void flsa(std::span<const double> y, double tau, std::span<double> theta,
                 FlsaWorkspace& ws) {
  const std::size_t n = y.size();
  if (theta.size() != n) throw invalid_input("flsa: output length mismatch");
  if (!(tau >= 0.0)) throw invalid_input("flsa: tau must be >= 0");
  if (n == 0) return;
  if (n == 1 || tau == 0.0) {
    std::copy(y.begin(), y.end(), theta.begin());
    return;
  }
  ws.reserve(n);
  auto& x = ws.x_;
  auto& a = ws.a_;
  auto& b = ws.b_;
  auto& tm = ws.tm_;
  auto& tp = ws.tp_;

  using idx = std::ptrdiff_t;
  const auto at = [](std::vector<double>& v, idx i) -> double& {
    return v[static_cast<std::size_t>(i)];
  };
  const idx len = static_cast<idx>(n);
  idx l = len - 1, r = len;
  tm[0] = y[0] - tau;
  tp[0] = y[0] + tau;
  at(x, l) = tm[0];
  at(x, r) = tp[0];
  at(a, l) = 1.0;
  at(b, l) = -y[0] + tau;
  at(a, r) = -1.0;
  at(b, r) = y[0] + tau;
  double afirst = 1.0, bfirst = -y[1] - tau;
  double alast = -1.0, blast = y[1] - tau;

  idx lo = 0, hi = 0;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    // lowest knot where the clamped derivative rises above -tau
    double alo = afirst, blo = bfirst;
    for (lo = l; lo <= r; ++lo) {
      if (alo * at(x, lo) + blo > -tau) break;
      alo += at(a, lo);
      blo += at(b, lo);
    }
    // highest knot where it stays below tau
    double ahi = alast, bhi = blast;
    for (hi = r; hi >= lo; --hi) {
      if (-ahi * at(x, hi) - bhi < tau) break;
      ahi += at(a, hi);
      bhi += at(b, hi);
    }
    tm[k] = (-tau - blo) / alo;
    l = lo - 1;
    at(x, l) = tm[k];
    tp[k] = (tau + bhi) / (-ahi);
    r = hi + 1;
    at(x, r) = tp[k];

    at(a, l) = alo;
    at(b, l) = blo + tau;
    at(a, r) = ahi;
    at(b, r) = bhi + tau;
    afirst = 1.0;
    bfirst = -y[k + 1] - tau;
    alast = -1.0;
    blast = y[k + 1] - tau;
  }

  double alo = afirst, blo = bfirst;
  for (lo = l; lo <= r; ++lo) {
    if (alo * at(x, lo) + blo > 0.0) break;
    alo += at(a, lo);
    blo += at(b, lo);
  }
  theta[n - 1] = -blo / alo;
  for (std::size_t k = n - 1; k-- > 0;) {
    if (theta[k + 1] > tp[k])
      theta[k] = tp[k];
    else if (theta[k + 1] < tm[k])
      theta[k] = tm[k];
    else
      theta[k] = theta[k + 1];
  }
}

inline std::vector<double> flsa(std::span<const double> y, double tau) {
  FlsaWorkspace ws;
  std::vector<double> out(y.size());
  flsa(y, tau, out, ws);
  return out;
}

// ---------------------------------------------------------------------------
// Block proximal operator

/// argmin_theta (L/2)||theta - theta_hat||^2 + h(theta) + g(theta) for one block.
struct ProxProblem {
  std::span<const double> theta_hat;
  double step_scale = 1.0;  // L_t
  PenaltyConfig config;
};

inline double prox_objective(std::span<const double> theta, std::span<const double> theta_hat,
                             double L, const PenaltyConfig& cfg) {
  double q = 0.0;
  for (std::size_t j = 0; j < theta.size(); ++j)
    q += (theta[j] - theta_hat[j]) * (theta[j] - theta_hat[j]);
  return 0.5 * L * q + block_penalty(theta, cfg);
}

namespace detail {

inline double threshold_for(double z, const PenaltyConfig& cfg, double L) {
  if (cfg.kind == PenaltyKind::l1) return soft_threshold(z, cfg.lambda_s / L);
  return mcp_prox_scalar(z, cfg.lambda_s, cfg.gamma, L);
}

/// min 1/2||theta - y||^2 + tau * (sum |diffs| + [left]|theta_0| + [right]|theta_{m-1}|),
/// i.e. a chain pinned to zero just outside either end. Solved by coordinate
/// descent on the box-constrained dual, which is exact per coordinate.
inline void anchored_flsa(std::span<const double> y, double tau, bool left, bool right,
                          std::span<double> theta) {
  const std::size_t m = y.size();
  std::copy(y.begin(), y.end(), theta.begin());
  // dual variables: m-1 differences, then optional left / right anchors
  std::vector<double> z(m + 1, 0.0);
  for (int sweep = 0; sweep < 200000; ++sweep) {
    double change = 0.0;
    for (std::size_t k = 0; k + 1 < m; ++k) {
      // row: theta_{k+1} - theta_k, squared norm 2
      const double step = (theta[k + 1] - theta[k]) / 2.0;
      const double nz = std::clamp(z[k] + step, -tau, tau);
      const double d = nz - z[k];
      if (d != 0.0) {
        theta[k] += d;
        theta[k + 1] -= d;
        z[k] = nz;
        change = std::max(change, std::abs(d));
      }
    }
    if (left) {
      const double nz = std::clamp(z[m - 1] + theta[0], -tau, tau);
      const double d = nz - z[m - 1];
      theta[0] -= d;
      z[m - 1] = nz;
      change = std::max(change, std::abs(d));
    }
    if (right) {
      const double nz = std::clamp(z[m] - theta[m - 1], -tau, tau);
      const double d = nz - z[m];
      theta[m - 1] += d;
      z[m] = nz;
      change = std::max(change, std::abs(d));
    }
    if (change <= 1e-15 * (1.0 + tau)) break;
  }
}

/// Exact prox for MCP + fusion when gamma*L <= 1 (nonconvex subproblem).
/// Every minimizer has each coordinate either 0 or on the flat part of the
/// penalty, so enumerating zero patterns and solving the pinned FLSA for the
/// rest (with the flat penalty as an upper bound) attains the minimum.
inline void exhaustive_mcp_fused(std::span<const double> theta_hat, double L,
                                 const PenaltyConfig& cfg, std::span<double> best,
                                 double& best_value) {
  const std::size_t n = theta_hat.size();
  const double tau = cfg.lambda_f / L;
  std::vector<double> cand(n), seg(n);
  for (std::size_t mask = 1; mask < (std::size_t{1} << n); ++mask) {
    std::fill(cand.begin(), cand.end(), 0.0);
    std::size_t j = 0;
    while (j < n) {
      if (!(mask >> j & 1)) {
        ++j;
        continue;
      }
      std::size_t e = j;
      while (e + 1 < n && (mask >> (e + 1) & 1)) ++e;
      const std::size_t m = e - j + 1;
      anchored_flsa(theta_hat.subspan(j, m), tau, j > 0, e + 1 < n,
                    std::span<double>(seg).first(m));
      std::copy_n(seg.begin(), m, cand.begin() + static_cast<std::ptrdiff_t>(j));
      j = e + 1;
    }
    const double v = prox_objective(cand, theta_hat, L, cfg);
    if (v < best_value) {
      best_value = v;
      std::copy(cand.begin(), cand.end(), best.begin());
    }
  }
}

}  // namespace detail

/// Largest block for which the nonconvex MCP + fusion prox enumerates zero
/// patterns; larger blocks fall back to the best of the candidate solutions.
inline constexpr std::size_t kExhaustiveProxLimit = 10;

/// Block prox. Without fusion: elementwise soft / MCP thresholding at
/// lambda_s / L. With fusion: FLSA at lambda_f / L followed by the same
/// thresholding. For MCP the result is compared against thresholding
/// theta_hat directly and the lower subproblem objective is kept.
inline void prox(const ProxProblem& p, std::span<double> out, FlsaWorkspace& ws) {
  p.config.validate();
  const double L = p.step_scale;
  if (!(L > 0.0 && std::isfinite(L))) throw invalid_input("prox: step scale must be > 0");
  const auto& cfg = p.config;
  const auto th = p.theta_hat;
  const std::size_t n = th.size();
  if (out.size() != n) throw invalid_input("prox: output length mismatch");

  if (cfg.lambda_f == 0.0 || n < 2) {
    for (std::size_t j = 0; j < n; ++j) out[j] = detail::threshold_for(th[j], cfg, L);
    return;
  }
  flsa(th, cfg.lambda_f / L, out, ws);
  for (auto& v : out) v = detail::threshold_for(v, cfg, L);
  if (cfg.kind == PenaltyKind::l1) return;

  double best = prox_objective(out, th, L, cfg);
  std::vector<double> direct(n);
  for (std::size_t j = 0; j < n; ++j) direct[j] = detail::threshold_for(th[j], cfg, L);
  const double direct_value = prox_objective(direct, th, L, cfg);
  if (direct_value < best) {
    best = direct_value;
    std::copy(direct.begin(), direct.end(), out.begin());
  }
  if (cfg.gamma * L <= 1.0) {
    std::vector<double> zero(n, 0.0);
    const double zero_value = prox_objective(zero, th, L, cfg);
    if (zero_value < best) {
      best = zero_value;
      std::copy(zero.begin(), zero.end(), out.begin());
    }
    if (n <= kExhaustiveProxLimit) detail::exhaustive_mcp_fused(th, L, cfg, out, best);
  }
}

inline std::vector<double> prox(const ProxProblem& p) {
  FlsaWorkspace ws;
  std::vector<double> out(p.theta_hat.size());
  prox(p, out, ws);
  return out;
}

// ---------------------------------------------------------------------------
// Subgradients for greedy selection

struct SubgradientInterval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Differences adjacent to coordinate j of a block, in canonical leaf order.
struct NeighborContext {
  bool has_left = false;
  bool has_right = false;
  double left_diff = 0.0;   // w_j - w_{j-1}
  double right_diff = 0.0;  // w_{j+1} - w_j
};

inline NeighborContext neighbor_context(std::span<const double> w_t, std::size_t j) {
  NeighborContext c;
  if (j > 0) {
    c.has_left = true;
    c.left_diff = w_t[j] - w_t[j - 1];
  }
  if (j + 1 < w_t.size()) {
    c.has_right = true;
    c.right_diff = w_t[j + 1] - w_t[j];
  }
  return c;
}

inline double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Per-coordinate interval: subdifferential of the sparsity term at w_j plus,
/// for each neighbor difference, its decoupled fusion contribution. This
/// over-approximates the joint subdifferential when several differences are
/// zero.
inline SubgradientInterval subgradient_interval(double w_j, const NeighborContext& ctx,
                                                const PenaltyConfig& cfg) {
  SubgradientInterval s;
  const double lam = cfg.lambda_s;
  if (w_j == 0.0) {
    s = {-lam, lam};
  } else if (cfg.kind == PenaltyKind::l1) {
    s.lo = s.hi = lam * sign_of(w_j);
  } else if (std::abs(w_j) <= lam * cfg.gamma) {
    s.lo = s.hi = lam * sign_of(w_j) - w_j / cfg.gamma;
  }
  const double lf = cfg.lambda_f;
  if (lf > 0.0) {
    if (ctx.has_left) {
      if (ctx.left_diff == 0.0) {
        s.lo -= lf;
        s.hi += lf;
      } else {
        s.lo += lf * sign_of(ctx.left_diff);
        s.hi += lf * sign_of(ctx.left_diff);
      }
    }
    if (ctx.has_right) {
      if (ctx.right_diff == 0.0) {
        s.lo -= lf;
        s.hi += lf;
      } else {
        s.lo -= lf * sign_of(ctx.right_diff);
        s.hi -= lf * sign_of(ctx.right_diff);
      }
    }
  }
  return s;
}

/// d_j = argmin over s in [lo, hi] of |grad + s|, returned signed.
inline double steepest_coordinate(double grad, SubgradientInterval s) {
  if (-grad > s.hi) return grad + s.hi;
  if (-grad < s.lo) return grad + s.lo;
  return 0.0;
}

}  // namespace fire

#endif  // FIRE_PENALTIES_HPP
