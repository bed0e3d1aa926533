#pragma once

// Mean reference population: the convex combination n = sum_i t_i n_i of the
// study's own structures minimizing the total squared deviation
//
//     f(t) = sum_i (m_i' n - m_i' n_i)^2 = || G t - R ||^2,
//
// with G(i, j) = m_i' n_j and R_i = G(i, i) the crude rates, over the simplex
// t >= 0, sum t = 1. Two solvers: an exact primal active-set method and the
// randomized simplex search with a shrinking sampling box.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "agestd/errors.hpp"
#include "agestd/rates.hpp"

namespace agestd {

enum class SolverMethod { QP, Sampling };

inline const char* to_string(SolverMethod m) {
  return m == SolverMethod::QP ? "qp" : "sampling";
}

/// Simplex weights t over the study populations plus solver diagnostics.
///
/// `lambda` and `mu` are the multipliers of the stationarity system
///     G'G t - G'R = lambda - mu 1,   lambda_i t_i = 0,   lambda >= 0,
/// i.e. half the gradient of f, matching the Lagrangian of the problem.
struct SimplexWeights {
  std::vector<double> weights;
  double objective = 0.0;
  SolverMethod method = SolverMethod::QP;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  std::vector<double> lambda;
  double mu = 0.0;
};

struct SamplingConfig {
  std::uint64_t max_samples = 1'000'000;  // candidate draws, accepted or rejected
  std::uint64_t seed = 42;
  unsigned shrink_rounds = 5;
  double shrink_factor = 0.2;
  double target_tolerance = 0.0;
  // Expected number of coordinates redrawn per candidate in shrink rounds.
  double coordinates_per_draw = 2.0;

  void validate() const {
    if (max_samples < 1) throw DomainError("sampling needs max_samples >= 1");
    if (!(shrink_factor > 0.0 && shrink_factor < 1.0))
      throw DomainError("shrink_factor must lie strictly between 0 and 1");
    if (!(target_tolerance >= 0.0)) throw DomainError("target_tolerance must be nonnegative");
    if (!(coordinates_per_draw > 0.0)) throw DomainError("coordinates_per_draw must be positive");
  }
};

struct QpOptions {
  std::size_t max_iterations = 0;  // 0: 50 p + 100
  // Singular values of the Gram matrix G'G at or below this fraction of the
  // largest are treated as zero (flat directions).
  double rank_threshold = 1e-10;
};

/// The quadratic f(t) = ||G t - R||^2 assembled once from a study.
class TotalDeviation {
 public:
  explicit TotalDeviation(const StudyMatrix& study) : p_(study.size()) {
    const std::size_t A = study.age_groups();
    Eigen::MatrixXd M(A, p_), N(A, p_);
    for (std::size_t j = 0; j < p_; ++j) {
      for (std::size_t a = 0; a < A; ++a) {
        M(a, j) = study[j].rates()[a];
        N(a, j) = study[j].structure()[a];
      }
    }
    G_.resize(p_, p_);
    for (std::size_t i = 0; i < p_; ++i)
      for (std::size_t j = 0; j < p_; ++j)
        G_(i, j) = weighted_rate(study[i].rates(), study[j].structure().values());
    R_ = G_.diagonal();
    if (!G_.allFinite()) throw DomainError("study rates produce non-finite deviations");
  }

  std::size_t size() const noexcept { return p_; }
  const Eigen::MatrixXd& design() const noexcept { return G_; }
  const Eigen::VectorXd& crude() const noexcept { return R_; }

  double operator()(std::span<const double> t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < p_; ++i) {
      double b = -R_(i);
      for (std::size_t j = 0; j < p_; ++j) b += G_(i, j) * t[j];
      s += b * b;
    }
    return s;
  }

  double operator()(const Eigen::VectorXd& t) const { return (G_ * t - R_).squaredNorm(); }

  Eigen::VectorXd gradient(const Eigen::VectorXd& t) const {
    return 2.0 * G_.transpose() * (G_ * t - R_);
  }

 private:
  std::size_t p_;
  Eigen::MatrixXd G_;
  Eigen::VectorXd R_;
};

namespace detail {

inline constexpr double kNegativeClip = 1e-12;

// Checks t against the simplex and clips tiny negatives to zero.
inline std::vector<double> checked_simplex_point(std::span<const double> t, std::size_t p,
                                                 double sum_tolerance) {
  if (t.size() != p)
    throw AlignmentError("weights have " + std::to_string(t.size()) + " entries for " +
                         std::to_string(p) + " populations");
  std::vector<double> out(t.begin(), t.end());
  double sum = 0.0;
  for (auto& v : out) {
    if (!std::isfinite(v) || v < -kNegativeClip) throw DomainError("weights must be nonnegative");
    v = std::max(v, 0.0);
    sum += v;
  }
  if (std::abs(sum - 1.0) > sum_tolerance)
    throw DomainError("weights sum to " + std::to_string(sum) + ", not 1");
  return out;
}

struct KktReport {
  double residual;
  std::vector<double> lambda;
  double mu;
};

// Scaled KKT violation at t for the support {i : free[i]}.
inline KktReport kkt_report(const TotalDeviation& f, const Eigen::VectorXd& t,
                            const std::vector<bool>& free) {
  const std::size_t p = f.size();
  const Eigen::VectorXd hessian_part = 2.0 * f.design().transpose() * (f.design() * t);
  const Eigen::VectorXd linear_part = 2.0 * f.design().transpose() * f.crude();
  const Eigen::VectorXd g = hessian_part - linear_part;
  double scale = hessian_part.cwiseAbs().maxCoeff() + linear_part.cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) scale = 1.0;

  double nu = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < p; ++i)
    if (free[i]) nu += g(i), ++k;
  nu = k > 0 ? nu / static_cast<double>(k) : g.minCoeff();

  double worst = std::abs(t.sum() - 1.0);
  std::vector<double> lambda(p, 0.0);
  for (std::size_t i = 0; i < p; ++i) {
    worst = std::max(worst, std::max(0.0, -t(i)));
    if (free[i]) {
      worst = std::max(worst, std::abs(g(i) - nu) / scale);
    } else {
      lambda[i] = 0.5 * (g(i) - nu);
      worst = std::max(worst, std::max(0.0, nu - g(i)) / scale);
      worst = std::max(worst, std::abs(t(i)));
    }
  }
  return {worst, std::move(lambda), -0.5 * nu};
}

// Orthonormal basis of the complement of the all-ones vector in R^k.
inline Eigen::MatrixXd ones_complement_basis(Eigen::Index k) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd::Ones(k, 1));
  Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(k, k);
  return Q.rightCols(k - 1);
}

// Minimizes ||G s - R|| over s with support `free` and sum 1; minimum-norm
// among minimizers when the reduced operator is rank deficient.
inline Eigen::VectorXd solve_on_support(const TotalDeviation& f, const std::vector<bool>& free,
                                        double singular_cutoff) {
  const auto p = static_cast<Eigen::Index>(f.size());
  std::vector<Eigen::Index> idx;
  for (Eigen::Index i = 0; i < p; ++i)
    if (free[static_cast<std::size_t>(i)]) idx.push_back(i);
  const auto k = static_cast<Eigen::Index>(idx.size());
  Eigen::VectorXd s = Eigen::VectorXd::Zero(p);
  if (k == 1) {
    s(idx[0]) = 1.0;
    return s;
  }
  Eigen::MatrixXd A(p, k);
  for (Eigen::Index c = 0; c < k; ++c) A.col(c) = f.design().col(idx[static_cast<std::size_t>(c)]);
  const Eigen::VectorXd center = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(k));
  const Eigen::MatrixXd Z = ones_complement_basis(k);
  const Eigen::MatrixXd B = A * Z;
  const Eigen::VectorXd rhs = f.crude() - A * center;

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sv = svd.singularValues();
  Eigen::VectorXd coeff = svd.matrixU().transpose() * rhs;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    coeff(i) = sv(i) > singular_cutoff ? coeff(i) / sv(i) : 0.0;
  const Eigen::VectorXd local = center + Z * (svd.matrixV() * coeff);
  for (Eigen::Index c = 0; c < k; ++c) s(idx[static_cast<std::size_t>(c)]) = local(c);
  return s;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace detail

/// f(t) for weights on the simplex. `sum_tolerance` bounds |sum t - 1|;
/// entries down to -1e-12 are clipped to zero.
inline double objective(const StudyMatrix& study, std::span<const double> t,
                        double sum_tolerance = 1e-10) {
  const auto w = detail::checked_simplex_point(t, study.size(), sum_tolerance);
  return TotalDeviation(study)(std::span<const double>(w));
}

/// Exact minimizer of f over the simplex by a primal active-set method.
///
/// Starts at the best vertex. Each iteration solves the sum-constrained
/// least-squares problem on the current support (min-norm when degenerate);
/// if that point leaves the simplex, steps to the first blocking bound and
/// drops the blocking index. Otherwise the multipliers of the zero weights are
/// checked and the most negative one is released. Stops when all are
/// nonnegative.
inline SimplexWeights solve_qp(const StudyMatrix& study, const QpOptions& options = {}) {
  const TotalDeviation f(study);
  const std::size_t p = f.size();
  const auto P = static_cast<Eigen::Index>(p);
  const std::size_t max_iter = options.max_iterations ? options.max_iterations : 50 * p + 100;

  const Eigen::JacobiSVD<Eigen::MatrixXd> g_svd(f.design());
  const double sigma_max = g_svd.singularValues().size() ? g_svd.singularValues()(0) : 0.0;
  const double cutoff = std::sqrt(options.rank_threshold) * sigma_max;

  // Best vertex as the starting point.
  Eigen::Index start = 0;
  double start_val = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < P; ++i) {
    const double v = (f.design().col(i) - f.crude()).squaredNorm();
    if (v < start_val) start_val = v, start = i;
  }
  Eigen::VectorXd t = Eigen::VectorXd::Zero(P);
  t(start) = 1.0;
  std::vector<bool> free(p, false);
  free[static_cast<std::size_t>(start)] = true;

  Eigen::VectorXd best_t = t;
  double best_val = start_val;

  for (std::size_t iter = 1; iter <= max_iter; ++iter) {
    const Eigen::VectorXd s = detail::solve_on_support(f, free, cutoff);

    // Blocking bound along t -> s.
    double alpha = 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < P; ++i) {
      if (!free[static_cast<std::size_t>(i)] || s(i) >= 0.0) continue;
      const double step = t(i) / (t(i) - s(i));
      if (step < alpha) alpha = step, blocking = i;
    }

    if (blocking >= 0) {
      t += alpha * (s - t);
      for (Eigen::Index i = 0; i < P; ++i) {
        if (free[static_cast<std::size_t>(i)] && (i == blocking || t(i) <= 0.0)) {
          free[static_cast<std::size_t>(i)] = false;
          t(i) = 0.0;
        }
      }
      t /= t.sum();
    } else {
      t = s;
    }

    const double val = f(t);
    if (val < best_val) best_val = val, best_t = t;
    if (blocking >= 0) continue;

    // Stationary on the support: inspect multipliers of the zero weights.
    const Eigen::VectorXd g = f.gradient(t);
    double nu = 0.0;
    std::size_t k = 0;
    for (std::size_t i = 0; i < p; ++i)
      if (free[i]) nu += g(static_cast<Eigen::Index>(i)), ++k;
    nu /= static_cast<double>(k);
    const double tol = 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff());

    Eigen::Index enter = -1;
    double most_negative = -tol;
    for (Eigen::Index i = 0; i < P; ++i) {
      if (free[static_cast<std::size_t>(i)]) continue;
      const double lambda = g(i) - nu;
      if (lambda < most_negative) most_negative = lambda, enter = i;
    }
    if (enter < 0) {
      auto kkt = detail::kkt_report(f, t, free);
      SimplexWeights out;
      out.weights = detail::to_std(t);
      out.objective = f(t);
      out.method = SolverMethod::QP;
      out.kkt_residual = kkt.residual;
      out.iterations = iter;
      out.lambda = std::move(kkt.lambda);
      out.mu = kkt.mu;
      return out;
    }
    free[static_cast<std::size_t>(enter)] = true;
  }
  throw ConvergenceError("active-set solver did not converge in " + std::to_string(max_iter) +
                             " iterations",
                         detail::to_std(best_t), best_val);
}

/// Counter-based 64-bit generator: output k is the SplitMix64 finalizer
/// applied to seed + k * golden gamma, so any draw can be regenerated from
/// (seed, k) alone.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t next() noexcept { return at(counter_++); }

  std::uint64_t at(std::uint64_t k) const noexcept {
    std::uint64_t z = seed_ + (k + 1) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Randomized simplex search.
///
/// Starts from the uniform weights as incumbent. Round 0 draws t_1..t_{p-1}
/// i.i.d. uniform on [0, 1], rejects draws whose sum exceeds 1, sets t_p to
/// the complement and keeps any improvement. Round r >= 1 samples a box of
/// half-width 0.5 * shrink_factor^r around the incumbent, clipped to [0, 1];
/// each coordinate is redrawn from its box with probability
/// min(1, coordinates_per_draw / (p - 1)) and otherwise keeps the incumbent
/// value. The box follows the incumbent as it improves.
inline SimplexWeights solve_sampling(const StudyMatrix& study, const SamplingConfig& config = {}) {
  config.validate();
  const TotalDeviation f(study);
  const std::size_t p = f.size();

  std::vector<double> incumbent(p, 1.0 / static_cast<double>(p));
  double best = f(std::span<const double>(incumbent));
  std::size_t accepted = 0;

  if (p > 1) {
    CounterRng rng(config.seed);
    const std::uint64_t rounds = config.shrink_rounds + 1ULL;
    const std::uint64_t per_round = config.max_samples / rounds;
    std::vector<double> t(p);
    const double redraw = std::min(1.0, config.coordinates_per_draw / static_cast<double>(p - 1));

    double half_width = 0.5;
    for (std::uint64_t r = 0; r < rounds; ++r) {
      const std::uint64_t budget =
          r + 1 == rounds ? config.max_samples - per_round * (rounds - 1) : per_round;
      const double round_start = best;
      for (std::uint64_t k = 0; k < budget; ++k) {
        double sum = 0.0;
        for (std::size_t i = 0; i + 1 < p; ++i) {
          if (r == 0) {
            t[i] = rng.uniform();
          } else if (redraw >= 1.0 || rng.uniform() < redraw) {
            const double lo = std::max(incumbent[i] - half_width, 0.0);
            const double hi = std::min(incumbent[i] + half_width, 1.0);
            t[i] = lo + (hi - lo) * rng.uniform();
          } else {
            t[i] = incumbent[i];
          }
          sum += t[i];
        }
        if (sum > 1.0) continue;
        ++accepted;
        t[p - 1] = 1.0 - sum;
        const double v = f(std::span<const double>(t));
        if (v < best) {
          best = v;
          incumbent = t;
        }
      }
      if (round_start - best < config.target_tolerance * round_start) break;
      half_width *= config.shrink_factor;
    }
    if (accepted == 0)
      throw SamplingStarvationError("no candidate weight vector fell inside the simplex after " +
                                    std::to_string(config.max_samples) + " draws");
  }

  Eigen::VectorXd tv = Eigen::Map<const Eigen::VectorXd>(incumbent.data(), static_cast<Eigen::Index>(p));
  std::vector<bool> free(p);
  for (std::size_t i = 0; i < p; ++i) free[i] = incumbent[i] > 0.0;
  auto kkt = detail::kkt_report(f, tv, free);
  SimplexWeights out;
  out.weights = std::move(incumbent);
  out.objective = best;
  out.method = SolverMethod::Sampling;
  out.kkt_residual = kkt.residual;
  out.iterations = accepted;
  out.lambda = std::move(kkt.lambda);
  out.mu = kkt.mu;
  return out;
}

/// Independent sampling runs, one per seed, reduced to the lowest objective
/// (ties go to the earlier seed). Runs concurrently on up to `threads`
/// workers; the result does not depend on the thread count.
inline SimplexWeights solve_sampling_restarts(const StudyMatrix& study, SamplingConfig config,
                                              std::span<const std::uint64_t> seeds,
                                              unsigned threads = 1) {
  if (seeds.empty()) throw DomainError("need at least one seed");
  std::vector<SimplexWeights> results(seeds.size());
  const std::size_t workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(seeds.size())));
  auto run_slice = [&](std::size_t w) {
    for (std::size_t i = w; i < seeds.size(); i += workers) {
      SamplingConfig c = config;
      c.seed = seeds[i];
      results[i] = solve_sampling(study, c);
    }
  };
  std::vector<std::future<void>> jobs;
  for (std::size_t w = 1; w < workers; ++w) jobs.push_back(std::async(std::launch::async, run_slice, w));
  run_slice(0);
  for (auto& j : jobs) j.get();

  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i)
    if (results[i].objective < results[best].objective) best = i;
  return results[best];
}

/// n = sum_i t_i n_i. The result is a valid structure whenever t is on the
/// simplex; `sum_tolerance` bounds |sum t - 1|.
inline PopulationStructure compose_reference(const StudyMatrix& study, std::span<const double> t,
                                             double sum_tolerance = 1e-10) {
  const auto w = detail::checked_simplex_point(t, study.size(), sum_tolerance);
  std::vector<double> n(study.age_groups(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] == 0.0) continue;
    const auto ni = study[i].structure().values();
    for (std::size_t a = 0; a < n.size(); ++a) n[a] += w[i] * ni[a];
  }
  return PopulationStructure::from_weights(study.schedule(), std::move(n), sum_tolerance + 1e-12);
}

inline PopulationStructure compose_reference(const StudyMatrix& study, const SimplexWeights& t) {
  return compose_reference(study, t.weights);
}

struct UniquenessDiagnosis {
  bool strictly_convex = false;
  std::size_t flat_directions = 0;
  std::vector<double> singular_values;  // of the Gram matrix G'G, descending
};

/// Whether G'G is positive definite (unique minimizer) or has flat
/// directions; rank cut at 1e-10 of the largest singular value.
inline UniquenessDiagnosis verify_uniqueness(const StudyMatrix& study, double threshold = 1e-10) {
  const TotalDeviation f(study);
  const Eigen::MatrixXd gram = f.design().transpose() * f.design();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(gram);
  const Eigen::VectorXd& sv = svd.singularValues();
  UniquenessDiagnosis d;
  d.singular_values = detail::to_std(sv);
  const double cut = threshold * (sv.size() ? sv(0) : 0.0);
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (!(sv(i) > cut)) ++d.flat_directions;
  d.strictly_convex = d.flat_directions == 0;
  return d;
}

}  // namespace agestd
