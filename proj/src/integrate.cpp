#include "nfps/integrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nfps/random.hpp"

namespace nfps {

void IntegratorConfig::validate() const {
  if (!(lambda >= 0.0)) throw Error(ErrorKind::invalid_config, "integrator: lambda must be >= 0");
  if (!(tol > 0.0) || !(admm_tol > 0.0)) {
    throw Error(ErrorKind::invalid_config, "integrator: tolerances must be > 0");
  }
  if (!(admm_penalty > 0.0)) {
    throw Error(ErrorKind::invalid_config, "integrator: admm_penalty must be > 0");
  }
  if (max_iters < 1 || admm_max_iters < 1 || admm_inner_iters < 1) {
    throw Error(ErrorKind::invalid_config, "integrator: iteration limits must be >= 1");
  }
}

LogGradients normals_to_log_gradients(const NormalMap& normals, const CameraIntrinsics& k) {
  k.validate();
  if (normals.width() != k.width || normals.height() != k.height) {
    throw Error(ErrorKind::dimension, "normals_to_log_gradients: normal map does not match intrinsics");
  }
  LogGradients g{Grid<double>(k.width, k.height, 0.0), Grid<double>(k.width, k.height, 0.0),
                 Mask(k.width, k.height, 0)};
  const double cutoff = 1e-6 * k.focal_px;
  for (int row = 0; row < k.height; ++row) {
    for (int col = 0; col < k.width; ++col) {
      if (!normals.mask(row, col)) continue;
      const Vec3& n = normals.vectors(row, col);
      const double d = (col - k.u0) * n.x() + (row - k.v0) * n.y() + k.focal_px * n.z();
      if (!(std::abs(d) >= cutoff) || !n.allFinite()) continue;
      g.p(row, col) = -n.x() / d;
      g.q(row, col) = -n.y() / d;
      g.mask(row, col) = 1;
    }
  }
  return g;
}

namespace detail {

IntegrationDomain::IntegrationDomain(const Mask& mask)
    : width(mask.width()), height(mask.height()), node(mask.size(), -1) {
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    node[i] = static_cast<int>(pixel.size());
    pixel.push_back(static_cast<int>(i));
  }
  const std::size_t n = pixel.size();
  right.assign(n, -1);
  down.assign(n, -1);
  left.assign(n, -1);
  up.assign(n, -1);
  for (std::size_t v = 0; v < n; ++v) {
    const int row = pixel[v] / width;
    const int col = pixel[v] % width;
    if (col + 1 < width) right[v] = node[static_cast<std::size_t>(pixel[v] + 1)];
    if (col > 0) left[v] = node[static_cast<std::size_t>(pixel[v] - 1)];
    if (row + 1 < height) down[v] = node[static_cast<std::size_t>(pixel[v] + width)];
    if (row > 0) up[v] = node[static_cast<std::size_t>(pixel[v] - width)];
  }
}

namespace {

inline double laplacian_row(const IntegrationDomain& d, const std::vector<double>& x,
                            std::size_t v) {
  double acc = 0.0;
  const double xv = x[v];
  for (int nb : {d.left[v], d.right[v], d.up[v], d.down[v]}) {
    if (nb >= 0) acc += xv - x[static_cast<std::size_t>(nb)];
  }
  return acc;
}

constexpr std::size_t kDotBlock = 4096;

}  // namespace

void apply_normal_operator(const IntegrationDomain& d, double alpha, double gamma,
                           const std::vector<double>& x, std::vector<double>& out) {
  out.resize(x.size());
  const auto n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < n; ++v) {
    const auto i = static_cast<std::size_t>(v);
    out[i] = alpha * laplacian_row(d, x, i) + gamma * x[i];
  }
}

namespace reference {
void apply_normal_operator(const IntegrationDomain& d, double alpha, double gamma,
                           const std::vector<double>& x, std::vector<double>& out) {
  out.resize(x.size());
  for (std::size_t v = 0; v < x.size(); ++v) out[v] = alpha * laplacian_row(d, x, v) + gamma * x[v];
}
}  // namespace reference

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t blocks = (a.size() + kDotBlock - 1) / kDotBlock;
  std::vector<double> partial(blocks, 0.0);
  const auto nb = static_cast<std::int64_t>(blocks);
#pragma omp parallel for schedule(static)
  for (std::int64_t blk = 0; blk < nb; ++blk) {
    const std::size_t lo = static_cast<std::size_t>(blk) * kDotBlock;
    const std::size_t hi = std::min(a.size(), lo + kDotBlock);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += a[i] * b[i];
    partial[static_cast<std::size_t>(blk)] = s;
  }
  double total = 0.0;
  for (double s : partial) total += s;
  return total;
}

}  // namespace detail

namespace {

using detail::IntegrationDomain;

struct EdgeField {
  std::vector<double> h;  // edge (v, right[v])
  std::vector<double> v;  // edge (v, down[v])
};

// D x: forward differences along existing edges (0 where no edge).
void apply_gradient(const IntegrationDomain& d, const std::vector<double>& x, EdgeField& out) {
  const std::size_t n = x.size();
  out.h.assign(n, 0.0);
  out.v.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (d.right[i] >= 0) out.h[i] = x[static_cast<std::size_t>(d.right[i])] - x[i];
    if (d.down[i] >= 0) out.v[i] = x[static_cast<std::size_t>(d.down[i])] - x[i];
  }
}

// D^T y.
void apply_divergence(const IntegrationDomain& d, const EdgeField& y, std::vector<double>& out) {
  const std::size_t n = y.h.size();
  out.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    if (d.right[i] >= 0) acc -= y.h[i];
    if (d.down[i] >= 0) acc -= y.v[i];
    if (d.left[i] >= 0) acc += y.h[static_cast<std::size_t>(d.left[i])];
    if (d.up[i] >= 0) acc += y.v[static_cast<std::size_t>(d.up[i])];
    out[i] = acc;
  }
}

struct CgOutcome {
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

// Jacobi-preconditioned CG on (alpha L + gamma I) x = b, warm-started from x.
CgOutcome pcg(const IntegrationDomain& d, double alpha, double gamma,
              const std::vector<double>& b, std::vector<double>& x, double tol, int max_iters) {
  const std::size_t n = b.size();
  CgOutcome out;
  const double b_norm = std::sqrt(detail::dot(b, b));
  if (b_norm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    out.converged = true;
    return out;
  }
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) {
    int degree = 0;
    for (int nb : {d.left[i], d.right[i], d.up[i], d.down[i]}) degree += nb >= 0;
    diag[i] = alpha * degree + gamma;
    if (!(diag[i] > 0.0)) diag[i] = 1.0;
  }
  std::vector<double> r(n), z(n), p(n), ap(n);
  detail::apply_normal_operator(d, alpha, gamma, x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  for (std::size_t i = 0; i < n; ++i) z[i] = r[i] / diag[i];
  p = z;
  double rz = detail::dot(r, z);
  out.residual = std::sqrt(detail::dot(r, r)) / b_norm;
  while (out.residual > tol && out.iterations < max_iters) {
    detail::apply_normal_operator(d, alpha, gamma, p, ap);
    const double pap = detail::dot(p, ap);
    if (!(pap > 0.0)) break;
    const double step = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += step * p[i];
      r[i] -= step * ap[i];
      z[i] = r[i] / diag[i];
    }
    const double rz_next = detail::dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    ++out.iterations;
    out.residual = std::sqrt(detail::dot(r, r)) / b_norm;
  }
  out.converged = out.residual <= tol;
  return out;
}

double l1_objective(const IntegrationDomain& d, const std::vector<double>& w,
                    const EdgeField& g, const std::vector<double>& w0, double lambda) {
  EdgeField dw;
  apply_gradient(d, w, dw);
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (d.right[i] >= 0) total += std::abs(dw.h[i] - g.h[i]);
    if (d.down[i] >= 0) total += std::abs(dw.v[i] - g.v[i]);
    total += lambda * (w[i] - w0[i]) * (w[i] - w0[i]);
  }
  return total;
}

double shrink(double x, double t) {
  return x > t ? x - t : (x < -t ? x + t : 0.0);
}

}  // namespace

IntegrationResult integrate(const LogGradients& gradients, const DepthMap& prior,
                            const IntegratorConfig& config, const Grid<double>* initial) {
  config.validate();
  require_same_shape(gradients.p, gradients.q, "integrate");
  require_same_shape(gradients.p, gradients.mask, "integrate");
  require_same_shape(gradients.p, prior.values, "integrate");
  if (initial != nullptr) require_same_shape(gradients.p, *initial, "integrate");

  const IntegrationDomain d(gradients.mask);
  const std::size_t n = d.nodes();
  if (n == 0) throw Error(ErrorKind::empty_mask, "integrate: empty mask");

  std::vector<double> w0(n), w(n);
  EdgeField g{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto px = static_cast<std::size_t>(d.pixel[i]);
    const double z0 = prior.values[px];
    if (!(z0 > 0.0) || !std::isfinite(z0)) {
      throw Error(ErrorKind::invalid_depth, "integrate: prior depth must be positive on the mask");
    }
    w0[i] = std::log(z0);
    w[i] = initial != nullptr ? (*initial)[px] : w0[i];
    if (d.right[i] >= 0) {
      g.h[i] = 0.5 * (gradients.p[px] + gradients.p[px + 1]);
    }
    if (d.down[i] >= 0) {
      g.v[i] = 0.5 * (gradients.q[px] + gradients.q[px + static_cast<std::size_t>(d.width)]);
    }
  }

  IntegrationResult result;
  std::vector<double> rhs;
  apply_divergence(d, g, rhs);
  for (std::size_t i = 0; i < n; ++i) rhs[i] += config.lambda * w0[i];
  const CgOutcome ls = pcg(d, 1.0, config.lambda, rhs, w, config.tol, config.max_iters);
  result.iterations = ls.iterations;
  result.residual = ls.residual;
  result.converged = ls.converged;

  if (config.mode == IntegrationMode::l1_admm) {
    double beta = config.admm_penalty;
    EdgeField dw, r, u{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)}, rhs_edges;
    apply_gradient(d, w, dw);
    r.h.resize(n);
    r.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      r.h[i] = dw.h[i] - g.h[i];
      r.v[i] = dw.v[i] - g.v[i];
    }
    std::vector<double> best = w;
    double best_objective = l1_objective(d, w, g, w0, config.lambda);
    std::vector<double> div, r_prev_h, r_prev_v;
    result.converged = false;
    result.iterations = 0;
    for (int it = 0; it < config.admm_max_iters; ++it) {
      rhs_edges.h.resize(n);
      rhs_edges.v.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        rhs_edges.h[i] = g.h[i] + r.h[i] - u.h[i];
        rhs_edges.v[i] = g.v[i] + r.v[i] - u.v[i];
      }
      apply_divergence(d, rhs_edges, div);
      const double gamma = 2.0 * config.lambda / beta;
      for (std::size_t i = 0; i < n; ++i) rhs[i] = div[i] + gamma * w0[i];
      pcg(d, 1.0, gamma, rhs, w, config.tol, config.admm_inner_iters);

      apply_gradient(d, w, dw);
      r_prev_h = r.h;
      r_prev_v = r.v;
      double primal = 0.0, scale_dw = 0.0, scale_g = 0.0, scale_r = 0.0, dual_sq = 0.0, scale_u = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double ah = dw.h[i] - g.h[i];
        const double av = dw.v[i] - g.v[i];
        r.h[i] = d.right[i] >= 0 ? shrink(ah + u.h[i], 1.0 / beta) : 0.0;
        r.v[i] = d.down[i] >= 0 ? shrink(av + u.v[i], 1.0 / beta) : 0.0;
        u.h[i] += ah - r.h[i];
        u.v[i] += av - r.v[i];
        primal += (ah - r.h[i]) * (ah - r.h[i]) + (av - r.v[i]) * (av - r.v[i]);
        scale_dw += dw.h[i] * dw.h[i] + dw.v[i] * dw.v[i];
        scale_g += g.h[i] * g.h[i] + g.v[i] * g.v[i];
        scale_r += r.h[i] * r.h[i] + r.v[i] * r.v[i];
        scale_u += u.h[i] * u.h[i] + u.v[i] * u.v[i];
        const double dh = r.h[i] - r_prev_h[i];
        const double dv = r.v[i] - r_prev_v[i];
        dual_sq += dh * dh + dv * dv;
      }
      primal = std::sqrt(primal);
      result.primal_residuals.push_back(primal);
      ++result.iterations;

      const double objective = l1_objective(d, w, g, w0, config.lambda);
      if (objective < best_objective) {
        best_objective = objective;
        best = w;
      }
      const double dual = beta * std::sqrt(dual_sq);
      const double tiny = std::numeric_limits<double>::min();
      const bool primal_ok =
          primal <= config.admm_tol * std::max({std::sqrt(scale_dw), std::sqrt(scale_g), std::sqrt(scale_r), tiny});
      const bool dual_ok = dual <= config.admm_tol * std::max(beta * std::sqrt(scale_u), tiny);
      if (primal_ok && dual_ok) {
        result.converged = true;
        best = w;
        break;
      }
      // Residual balancing; u is the scaled dual and is rescaled with beta.
      double rescale = 1.0;
      if (primal > 10.0 * dual) {
        rescale = 2.0;
      } else if (dual > 10.0 * primal) {
        rescale = 0.5;
      }
      if (rescale != 1.0) {
        beta *= rescale;
        for (std::size_t i = 0; i < n; ++i) {
          u.h[i] /= rescale;
          u.v[i] /= rescale;
        }
      }
    }
    w = std::move(best);
    result.residual = result.primal_residuals.empty() ? 0.0 : result.primal_residuals.back();
  }

  result.depth = DepthMap(gradients.p.width(), gradients.p.height());
  for (std::size_t i = 0; i < n; ++i) {
    const auto px = static_cast<std::size_t>(d.pixel[i]);
    result.depth.values[px] = std::exp(w[i]);
    result.depth.mask[px] = 1;
  }
  return result;
}

RobustnessComparison outlier_robustness_demo(const LogGradients& clean, const DepthMap& truth,
                                             const DepthMap& prior, double fraction,
                                             const IntegratorConfig& config,
                                             std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) {
    throw Error(ErrorKind::invalid_config, "outlier_robustness_demo: fraction must lie in [0, 1)");
  }
  LogGradients corrupted = clean;
  RobustnessComparison out;
  Rng rng(mix_seed(seed, 0x5eed));
  for (std::size_t i = 0; i < corrupted.mask.size(); ++i) {
    if (!corrupted.mask[i] || !bernoulli(rng, fraction)) continue;
    const double sp = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    const double sq = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    corrupted.p[i] += sp * uniform(rng, 0.02, 0.05);
    corrupted.q[i] += sq * uniform(rng, 0.02, 0.05);
    ++out.corrupted;
  }
  auto error_mm = [&](const DepthMap& z) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < z.mask.size(); ++i) {
      if (!z.mask[i] || !truth.mask[i]) continue;
      sum += std::abs(z.values[i] - truth.values[i]);
      ++n;
    }
    return n == 0 ? 0.0 : 1000.0 * sum / static_cast<double>(n);
  };
  IntegratorConfig ls = config;
  ls.mode = IntegrationMode::least_squares;
  IntegratorConfig l1 = config;
  l1.mode = IntegrationMode::l1_admm;
  out.least_squares_mm = error_mm(integrate(corrupted, prior, ls).depth);
  out.l1_mm = error_mm(integrate(corrupted, prior, l1).depth);
  return out;
}

}  // namespace nfps
