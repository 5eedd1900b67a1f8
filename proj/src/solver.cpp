#include "mfe/solver.hpp"

#include "mfe/parallel.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mfe {

void SolveConfig::validate() const {
  if (!(tolerance > 0.0)) throw std::invalid_argument("solver.tolerance must be positive");
  if (max_iterations < 1) throw std::invalid_argument("solver.max_iterations must be >= 1");
  if (!(min_damping > 0.0 && min_damping <= 1.0))
    throw std::invalid_argument("solver.min_damping must be in (0, 1]");
  if (divergence_patience < 1) throw std::invalid_argument("solver.divergence_patience must be >= 1");
  if (!(lambda_step > 0.0)) throw std::invalid_argument("solver.lambda_step must be positive");
  if (!(shrink > 0.0 && shrink < 1.0)) throw std::invalid_argument("solver.shrink must be in (0, 1)");
  if (!(min_lambda_step > 0.0)) throw std::invalid_argument("solver.min_lambda_step must be positive");
  if (!(max_growth > 0.0)) throw std::invalid_argument("solver.max_growth must be positive");
  if (!(resolution_cells >= 0.0)) throw std::invalid_argument("solver.resolution_cells must be >= 0");
}

double DensityTerms::log_denominator() const { return log_shift + std::log(denominator_scaled); }

double DensityTerms::mean_alpha_weight(const DiscreteDomain& domain) const {
  return (domain.weights().dot(g1) + domain.boundary_strip_area() * b1) / denominator_scaled;
}

DensityTerms density_terms(const DiscreteDomain& domain, const Field& u, const IntensityMeasure& measure) {
  domain.check_shape(u);
  const Eigen::Index n = domain.size();
  DensityTerms t;
  Eigen::VectorXd shift(n);
  t.g0.resize(n);
  t.g1.resize(n);
  t.g2.resize(n);
  parallel_for(n, [&](std::ptrdiff_t k) {
    if (!std::isfinite(u.values[k])) throw std::invalid_argument("field value is not finite");
    ExpMoments m = measure.moments(u.values[k]);
    shift[k] = m.log_scale;
    t.g0[k] = m.m0;
    t.g1[k] = m.m1;
    t.g2[k] = m.m2;
  });
  ExpMoments mb = measure.moments(u.boundary_value);
  t.log_shift = std::max(n ? shift.maxCoeff() : mb.log_scale, mb.log_scale);
  for (Eigen::Index k = 0; k < n; ++k) {
    double e = std::exp(shift[k] - t.log_shift);
    t.g0[k] *= e;
    t.g1[k] *= e;
    t.g2[k] *= e;
  }
  double eb = std::exp(mb.log_scale - t.log_shift);
  t.b0 = mb.m0 * eb;
  t.b1 = mb.m1 * eb;
  t.b2 = mb.m2 * eb;
  t.denominator_scaled = domain.weights().dot(t.g0) + domain.boundary_strip_area() * t.b0;
  return t;
}

Field nonlinearity(const DiscreteDomain& domain, const Field& u, double lambda,
                   const IntensityMeasure& measure) {
  DensityTerms t = density_terms(domain, u, measure);
  double c = lambda / t.denominator_scaled;
  return Field{c * t.g1, c * t.b1};
}

namespace {

Eigen::VectorXd residual_from(const DiscreteDomain& d, const Field& u, double lambda, const DensityTerms& t) {
  double c = lambda / (d.h() * d.h() * t.denominator_scaled);
  return d.laplacian() * u.values - c * d.weights().cwiseProduct(t.g1);
}

// Roundoff floor of the residual: the size of the terms that cancel in F.
double residual_floor(const SparseMatrix& abs_a, const DiscreteDomain& d, const Field& u, double lambda,
                      const DensityTerms& t) {
  double c = lambda / (d.h() * d.h() * t.denominator_scaled);
  Eigen::VectorXd mag = abs_a * u.values.cwiseAbs() + c * d.weights().cwiseProduct(t.g1).cwiseAbs();
  return 8.0 * std::numeric_limits<double>::epsilon() * (mag.size() ? mag.maxCoeff() : 0.0);
}

class NewtonSystem {
 public:
  explicit NewtonSystem(const DiscreteDomain& d) : d_(d) { ldlt_.analyzePattern(d.laplacian()); }

  // Solves (S + c v v^T) x = b with S = A - diag(local).
  Eigen::VectorXd solve(const Eigen::VectorXd& local, const Eigen::VectorXd& v, double c,
                        const Eigen::VectorXd& b) {
    SparseMatrix s = d_.laplacian();
    for (Eigen::Index k = 0; k < s.rows(); ++k) s.coeffRef(k, k) -= local[k];
    Eigen::VectorXd x1, x2;
    bool ok = false;
    ldlt_.factorize(s);
    if (ldlt_.info() == Eigen::Success) {
      x1 = ldlt_.solve(b);
      x2 = ldlt_.solve(v);
      ok = x1.allFinite() && x2.allFinite() &&
           (s * x1 - b).norm() <= 1e-8 * std::max(1.0, b.norm()) &&
           (s * x2 - v).norm() <= 1e-8 * std::max(1.0, v.norm());
    }
    if (!ok) {
      Eigen::SparseLU<SparseMatrix> lu;
      lu.compute(s);
      if (lu.info() != Eigen::Success) throw std::runtime_error("newton: singular Jacobian");
      x1 = lu.solve(b);
      x2 = lu.solve(v);
    }
    double denom = 1.0 + c * v.dot(x2);
    if (!std::isfinite(denom) || std::abs(denom) < 1e-300) throw std::runtime_error("newton: singular rank-one update");
    return x1 - (c * v.dot(x1) / denom) * x2;
  }

 private:
  const DiscreteDomain& d_;
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

void fill_summary(const DiscreteDomain& d, SolveResult& r, const IntensityMeasure& measure) {
  DensityTerms t = density_terms(d, r.u, measure);
  r.log_denominator = t.log_denominator();
  r.vortex_mass = r.lambda * t.mean_alpha_weight(d);
  Eigen::Index arg = 0;
  r.u_max = d.size() ? r.u.values.maxCoeff(&arg) : 0.0;
  r.u_max_location = d.size() ? d.position(arg) : Vec2{};
  r.max_density = r.lambda * (d.size() ? t.g1.maxCoeff() : t.b1) / t.denominator_scaled;
}

}  // namespace

Eigen::VectorXd residual(const DiscreteDomain& domain, const Field& u, double lambda,
                         const IntensityMeasure& measure) {
  return residual_from(domain, u, lambda, density_terms(domain, u, measure));
}

Eigen::VectorXd jacobian_apply(const DiscreteDomain& d, const Field& u, double lambda,
                               const IntensityMeasure& measure, const Eigen::VectorXd& direction) {
  DensityTerms t = density_terms(d, u, measure);
  double c = lambda / (d.h() * d.h());
  double inv_i = 1.0 / t.denominator_scaled;
  Eigen::VectorXd v = d.weights().cwiseProduct(t.g1) * inv_i;
  Eigen::VectorXd local = c * inv_i * d.weights().cwiseProduct(t.g2);
  return d.laplacian() * direction - local.cwiseProduct(direction) + c * v.dot(direction) * v;
}

SolveResult newton_solve(const DiscreteDomain& d, const Field& u0, double lambda,
                         const IntensityMeasure& measure, const SolveConfig& config) {
  config.validate();
  d.check_shape(u0);
  if (!u0.values.allFinite()) throw std::invalid_argument("newton: initial field is not finite");
  if (!std::isfinite(lambda)) throw std::invalid_argument("newton: lambda is not finite");

  SolveResult r;
  r.lambda = lambda;
  r.u = Field{u0.values, 0.0};
  const SparseMatrix abs_a = d.laplacian().cwiseAbs();
  const double c = lambda / (d.h() * d.h());
  NewtonSystem system(d);

  DensityTerms t = density_terms(d, r.u, measure);
  Eigen::VectorXd f = residual_from(d, r.u, lambda, t);
  double norm = f.cwiseAbs().maxCoeff();
  Field best = r.u;
  double best_norm = norm;
  int failures = 0;

  for (int it = 0;; ++it) {
    double target = std::max(config.tolerance, residual_floor(abs_a, d, r.u, lambda, t));
    if (norm <= target) {
      r.converged = true;
      r.iterations = it;
      break;
    }
    if (it >= config.max_iterations) {
      r.iterations = it;
      r.diagnostic = "no convergence after " + std::to_string(it) + " iterations";
      break;
    }
    double inv_i = 1.0 / t.denominator_scaled;
    Eigen::VectorXd v = d.weights().cwiseProduct(t.g1) * inv_i;
    Eigen::VectorXd local = c * inv_i * d.weights().cwiseProduct(t.g2);
    Eigen::VectorXd step;
    try {
      step = system.solve(local, v, c, -f);
    } catch (const std::runtime_error& e) {
      r.iterations = it;
      r.diagnostic = e.what();
      break;
    }

    double tau = 1.0;
    bool accepted = false;
    Field trial;
    DensityTerms tt;
    Eigen::VectorXd ft;
    double nt = 0.0;
    for (; tau >= config.min_damping; tau *= 0.5) {
      trial = Field{r.u.values + tau * step, 0.0};
      if (!trial.values.allFinite()) continue;
      tt = density_terms(d, trial, measure);
      ft = residual_from(d, trial, lambda, tt);
      nt = ft.cwiseAbs().maxCoeff();
      if (nt < (1.0 - 1e-4 * tau) * norm || nt <= residual_floor(abs_a, d, trial, lambda, tt)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (++failures >= config.divergence_patience) {
        r.iterations = it + 1;
        r.diagnostic = "diverged: residual did not decrease in " + std::to_string(failures) +
                       " consecutive damped steps";
        break;
      }
      // Take the smallest damped step and try again from there.
      if (!trial.values.allFinite()) {
        r.iterations = it + 1;
        r.diagnostic = "diverged: non-finite iterate";
        break;
      }
    } else {
      failures = 0;
    }
    r.u = std::move(trial);
    t = std::move(tt);
    f = std::move(ft);
    norm = nt;
    if (norm < best_norm) {
      best_norm = norm;
      best = r.u;
    }
  }

  if (!r.converged && best_norm < norm) {
    r.u = best;
    norm = best_norm;
  }
  r.residual = norm;
  fill_summary(d, r, measure);
  return r;
}

ContinuationBranch continue_lambda(const DiscreteDomain& d, double lambda_start, double lambda_end,
                                   const IntensityMeasure& measure, const SolveConfig& config,
                                   std::optional<Field> initial) {
  config.validate();
  if (!(lambda_start < lambda_end)) throw std::invalid_argument("continuation: need lambda_start < lambda_end");
  ContinuationBranch branch;
  Field u0 = initial ? *initial : d.zero_field();
  SolveResult first = newton_solve(d, u0, lambda_start, measure, config);
  if (!first.converged) {
    branch.terminated_early = true;
    branch.flag = "no convergence at lambda_start: " + first.diagnostic;
    branch.last_good_lambda = lambda_start;
    return branch;
  }
  branch.entries.push_back(std::move(first));

  auto unresolved = [&](const SolveResult& r) {
    return r.max_density > 0.0 && std::sqrt(8.0 / r.max_density) < config.resolution_cells * d.h();
  };

  double step = config.lambda_step;
  while (true) {
    const SolveResult& prev = branch.entries.back();
    if (prev.lambda >= lambda_end) break;
    if (unresolved(prev)) {
      branch.terminated_early = true;
      branch.flag = "resolution limit: bubble scale below " + std::to_string(config.resolution_cells) +
                    " cells";
      break;
    }
    double next = std::min(prev.lambda + step, lambda_end);
    SolveResult r = newton_solve(d, prev.u, next, measure, config);
    if (!r.converged || r.u_max - prev.u_max > config.max_growth) {
      step *= config.shrink;
      if (step < config.min_lambda_step) {
        branch.terminated_early = true;
        branch.flag = r.converged ? "step below minimum: max u grows too fast"
                                  : "step below minimum: " + r.diagnostic;
        break;
      }
      continue;
    }
    if (r.u_max - prev.u_max < 0.25 * config.max_growth) step = std::min(config.lambda_step, step / config.shrink);
    branch.entries.push_back(std::move(r));
  }
  branch.last_good_lambda = branch.entries.back().lambda;
  return branch;
}

}  // namespace mfe
