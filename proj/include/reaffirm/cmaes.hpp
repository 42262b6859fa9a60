#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "reaffirm/rng.hpp"

namespace reaffirm {

inline std::size_t default_population(std::size_t n) {
  return 4 + static_cast<std::size_t>(std::floor(3.0 * std::log(static_cast<double>(std::max<std::size_t>(n, 1)))));
}

struct CmaesOptions {
  double sigma0 = 0.3;
  std::size_t population = 0;  // 0 picks 4 + floor(3 ln n)
  /// Generations without improvement of the best value before a restart.
  std::size_t stall_generations = 0;  // 0 picks 10 + 30n / lambda
  double min_sigma = 1e-7;
};

/// CMA-ES over the unit cube [0,1]^n. Samples are clamped onto the box and
/// the clamped points drive the update. Restarts from a random mean when the
/// step size collapses or the best value stalls.
class Cmaes {
 public:
  using Vec = Eigen::VectorXd;
  using Mat = Eigen::MatrixXd;

  Cmaes(std::size_t n, std::uint64_t seed, CmaesOptions opt = {}) : n_(n), opt_(opt), rng_(seed) {
    if (n == 0) throw std::invalid_argument("CMA-ES needs at least one dimension");
    lambda_ = opt_.population ? opt_.population : default_population(n);
    mu_ = lambda_ / 2;
    weights_.resize(static_cast<Eigen::Index>(mu_));
    for (std::size_t i = 0; i < mu_; ++i) {
      weights_[static_cast<Eigen::Index>(i)] = std::log(static_cast<double>(mu_) + 0.5) - std::log(static_cast<double>(i) + 1.0);
    }
    weights_ /= weights_.sum();
    mueff_ = 1.0 / weights_.squaredNorm();
    const double nd = static_cast<double>(n);
    cc_ = (4.0 + mueff_ / nd) / (nd + 4.0 + 2.0 * mueff_ / nd);
    cs_ = (mueff_ + 2.0) / (nd + mueff_ + 5.0);
    c1_ = 2.0 / ((nd + 1.3) * (nd + 1.3) + mueff_);
    cmu_ = std::min(1.0 - c1_, 2.0 * (mueff_ - 2.0 + 1.0 / mueff_) / ((nd + 2.0) * (nd + 2.0) + mueff_));
    damps_ = 1.0 + 2.0 * std::max(0.0, std::sqrt((mueff_ - 1.0) / (nd + 1.0)) - 1.0) + cs_;
    chin_ = std::sqrt(nd) * (1.0 - 1.0 / (4.0 * nd) + 1.0 / (21.0 * nd * nd));
    stall_limit_ = opt_.stall_generations ? opt_.stall_generations
                                          : 10 + static_cast<std::size_t>(std::ceil(30.0 * nd / static_cast<double>(lambda_)));
    reset(Vec::Constant(static_cast<Eigen::Index>(n), 0.5));
  }

  std::size_t dimension() const { return n_; }
  std::size_t population() const { return lambda_; }
  std::size_t restarts() const { return restarts_; }
  double sigma() const { return sigma_; }
  const Vec& mean() const { return mean_; }

  /// Next generation of candidate points, already inside the unit cube.
  const std::vector<std::vector<double>>& ask() {
    const auto n = static_cast<Eigen::Index>(n_);
    points_.assign(lambda_, std::vector<double>(n_));
    samples_.resize(n, static_cast<Eigen::Index>(lambda_));
    Vec z(n);
    for (std::size_t k = 0; k < lambda_; ++k) {
      for (Eigen::Index i = 0; i < n; ++i) z[i] = rng_.normal();
      Vec x = mean_ + sigma_ * (b_ * d_.cwiseProduct(z));
      for (Eigen::Index i = 0; i < n; ++i) {
        x[i] = std::clamp(x[i], 0.0, 1.0);
        points_[k][static_cast<std::size_t>(i)] = x[i];
      }
      samples_.col(static_cast<Eigen::Index>(k)) = x;
    }
    return points_;
  }

  /// Objective values (lower is better) for the points of the last ask().
  void tell(const std::vector<double>& values) {
    if (values.size() != lambda_) throw std::invalid_argument("tell() expects one value per candidate");
    std::vector<std::size_t> order(lambda_);
    std::iota(order.begin(), order.end(), 0);
    auto key = [&](std::size_t i) { return std::isnan(values[i]) ? std::numeric_limits<double>::infinity() : values[i]; };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

    const double gen_best = key(order.front());
    const bool improved = std::isinf(best_since_restart_)
                              ? gen_best < best_since_restart_
                              : gen_best < best_since_restart_ - 1e-12 * std::max(1.0, std::abs(best_since_restart_));
    if (improved) {
      best_since_restart_ = gen_best;
      stall_ = 0;
    } else {
      ++stall_;
    }

    const auto n = static_cast<Eigen::Index>(n_);
    const Vec old = mean_;
    mean_.setZero();
    Mat art(n, static_cast<Eigen::Index>(mu_));
    for (std::size_t i = 0; i < mu_; ++i) {
      const Vec& x = samples_.col(static_cast<Eigen::Index>(order[i]));
      mean_ += weights_[static_cast<Eigen::Index>(i)] * x;
      art.col(static_cast<Eigen::Index>(i)) = (x - old) / sigma_;
    }
    const Vec step = (mean_ - old) / sigma_;
    ++generation_;
    const Vec inv_sqrt_step = b_ * (b_.transpose() * step).cwiseQuotient(d_);
    ps_ = (1.0 - cs_) * ps_ + std::sqrt(cs_ * (2.0 - cs_) * mueff_) * inv_sqrt_step;
    const double ps_norm = ps_.norm();
    const double decay = 1.0 - std::pow(1.0 - cs_, 2.0 * static_cast<double>(generation_));
    const bool hsig = ps_norm / std::sqrt(std::max(decay, 1e-300)) / chin_ < 1.4 + 2.0 / (static_cast<double>(n_) + 1.0);
    pc_ = (1.0 - cc_) * pc_ + (hsig ? std::sqrt(cc_ * (2.0 - cc_) * mueff_) : 0.0) * step;
    Mat rank_mu = art * weights_.asDiagonal() * art.transpose();
    c_ = (1.0 - c1_ - cmu_) * c_ + c1_ * (pc_ * pc_.transpose() + (hsig ? 0.0 : cc_ * (2.0 - cc_)) * c_) + cmu_ * rank_mu;
    sigma_ *= std::exp((cs_ / damps_) * (ps_norm / chin_ - 1.0));
    sigma_ = std::min(sigma_, 1.0);
    decompose();

    const double spread = sigma_ * d_.maxCoeff();
    if (spread < opt_.min_sigma || stall_ >= stall_limit_ || !std::isfinite(spread)) restart();
  }

 private:
  void reset(const Vec& mean) {
    const auto n = static_cast<Eigen::Index>(n_);
    mean_ = mean;
    sigma_ = opt_.sigma0;
    c_ = Mat::Identity(n, n);
    b_ = Mat::Identity(n, n);
    d_ = Vec::Ones(n);
    ps_ = Vec::Zero(n);
    pc_ = Vec::Zero(n);
    generation_ = 0;
    stall_ = 0;
    best_since_restart_ = std::numeric_limits<double>::infinity();
  }

  void restart() {
    Vec m(static_cast<Eigen::Index>(n_));
    for (Eigen::Index i = 0; i < m.size(); ++i) m[i] = rng_.uniform();
    ++restarts_;
    reset(m);
  }

  void decompose() {
    c_ = 0.5 * (c_ + c_.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> eig(c_);
    b_ = eig.eigenvectors();
    d_ = eig.eigenvalues().cwiseMax(1e-20).cwiseSqrt();
    // Keep the condition number bounded; a degenerate C means the search is done.
    if (d_.maxCoeff() > 1e7 * d_.minCoeff()) stall_ = stall_limit_;
  }

  std::size_t n_;
  CmaesOptions opt_;
  CounterRng rng_;
  std::size_t lambda_ = 0;
  std::size_t mu_ = 0;
  Vec weights_;
  double mueff_ = 0, cc_ = 0, cs_ = 0, c1_ = 0, cmu_ = 0, damps_ = 0, chin_ = 0;
  std::size_t stall_limit_ = 0;

  Vec mean_, d_, ps_, pc_;
  Mat c_, b_;
  double sigma_ = 0.3;
  std::size_t generation_ = 0;
  std::size_t stall_ = 0;
  std::size_t restarts_ = 0;
  double best_since_restart_ = 0.0;

  Mat samples_;
  std::vector<std::vector<double>> points_;
};

}  // namespace reaffirm
