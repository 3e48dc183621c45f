#include "kcal/bdf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace kcal {

namespace {

constexpr int kMaxOrder = 5;
constexpr int kMaxNewtonIterations = 4;
constexpr double kEps = std::numeric_limits<double>::epsilon();

// G_k = sum_{j=1..k} 1/j; the corrector is
//   (y_{n+1} - pred) G_k = h f(t_{n+1}, y_{n+1}) - sum_j G_j dif_j.
constexpr std::array<double, kMaxOrder> kG = {1.0, 3.0 / 2.0, 11.0 / 6.0, 25.0 / 12.0, 137.0 / 60.0};

// Local truncation error constant for order k (index k-1): 1/(k+1).
constexpr std::array<double, kMaxOrder + 1> kErrConst = {1.0 / 2, 1.0 / 3, 1.0 / 4, 1.0 / 5, 1.0 / 6, 1.0 / 7};

// U(i,j) = (-1)^i C(j,i) (1-based); it is its own inverse.
Eigen::Matrix<double, kMaxOrder, kMaxOrder> difference_u() {
  Eigen::Matrix<double, kMaxOrder, kMaxOrder> U;
  U.setZero();
  for (int i = 1; i <= kMaxOrder; ++i) {
    for (int j = i; j <= kMaxOrder; ++j) {
      double c = 1.0;
      for (int m = 0; m < i; ++m) c = c * (j - m) / (m + 1);
      U(i - 1, j - 1) = (i % 2 ? -1.0 : 1.0) * c;
    }
  }
  return U;
}

bool all_finite(const Eigen::VectorXd& v) { return v.allFinite(); }

} // namespace

const char* to_string(BdfStatus s) noexcept {
  switch (s) {
    case BdfStatus::ok: return "ok";
    case BdfStatus::too_many_steps: return "too many steps";
    case BdfStatus::step_size_underflow: return "step size underflow";
    case BdfStatus::nonfinite: return "non-finite state";
  }
  return "unknown";
}

BdfSolver::BdfSolver(std::size_t n, Rhs rhs, BdfOptions options, Jacobian jacobian)
    : n_(n), rhs_(std::move(rhs)), jacobian_(std::move(jacobian)), opt_(std::move(options)) {
  if (!(opt_.rtol > 0.0)) throw std::invalid_argument("rtol must be positive");
  if (opt_.atol.size() != n_) throw std::invalid_argument("atol size does not match the system size");
  if (opt_.max_order < 1 || opt_.max_order > kMaxOrder) throw std::invalid_argument("max_order must be in [1, 5]");
  threshold_.resize(static_cast<Eigen::Index>(n_));
  for (std::size_t i = 0; i < n_; ++i) {
    if (!(opt_.atol[i] > 0.0)) throw std::invalid_argument("atol must be positive");
    threshold_[static_cast<Eigen::Index>(i)] = opt_.atol[i] / opt_.rtol;
  }
  const auto N = static_cast<Eigen::Index>(n_);
  y_.resize(N);
  f_.resize(N);
  scratch_.resize(N);
  J_.resize(N, N);
  dif_.resize(N, kMaxOrder + 2);
}

void BdfSolver::reset(double t0, std::span<const double> y0) {
  if (y0.size() != n_) throw std::invalid_argument("initial state has the wrong size");
  t_ = t0;
  for (std::size_t i = 0; i < n_; ++i) y_[static_cast<Eigen::Index>(i)] = y0[i];
  started_ = false;
  have_jacobian_ = false;
  jacobian_current_ = false;
  have_rate_ = false;
  need_lu_ = true;
  stats_ = {};
}

void BdfSolver::evaluate(double t, const Eigen::VectorXd& y, Eigen::VectorXd& f) {
  rhs_(t, {y.data(), n_}, {f.data(), n_});
  ++stats_.rhs_evals;
}

double BdfSolver::weighted_norm(const Eigen::VectorXd& v, const Eigen::VectorXd& inv_weight) const {
  return (v.array() * inv_weight.array()).abs().maxCoeff();
}

void BdfSolver::compute_jacobian() {
  evaluate(t_, y_, f_);
  if (jacobian_) {
    jacobian_(t_, {y_.data(), n_}, {f_.data(), n_}, J_);
  } else {
    Eigen::VectorXd yp = y_;
    Eigen::VectorXd fp(static_cast<Eigen::Index>(n_));
    const double sq = std::sqrt(kEps);
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(n_); ++j) {
      const double yj = yp[j];
      double del = sq * std::max(std::abs(yj), threshold_[j]);
      yp[j] = yj + del;
      del = yp[j] - yj;
      evaluate(t_, yp, fp);
      J_.col(j) = (fp - f_) / del;
      yp[j] = yj;
    }
  }
  ++stats_.jacobian_evals;
  have_jacobian_ = true;
  jacobian_current_ = true;
  need_lu_ = true;
}

void BdfSolver::start(double t_stop) {
  evaluate(t_, y_, f_);
  double absh = opt_.initial_step;
  if (!(absh > 0.0)) {
    const Eigen::VectorXd wt = y_.cwiseAbs().cwiseMax(threshold_);
    const double rh = 1.25 * (f_.array() / wt.array()).abs().maxCoeff() / std::sqrt(opt_.rtol);
    absh = std::min(opt_.max_step, t_stop - t_);
    if (absh * rh > 1.0) absh = 1.0 / rh;
  }
  const double hmin = 16.0 * kEps * std::max(std::abs(t_), std::numeric_limits<double>::min());
  absh = std::max(absh, hmin);
  k_ = 1;
  dif_.setZero();
  dif_.col(0) = absh * f_;
  h_dif_ = absh;
  absh_ = absh;
  steps_at_hk_ = 0;
  need_lu_ = true;
  started_ = true;
}

void BdfSolver::set_step(double absh, int k) {
  if (absh != h_dif_) {
    static const auto U = difference_u();
    const double ratio = absh / h_dif_;
    Eigen::Matrix<double, kMaxOrder, kMaxOrder> R;
    for (int j = 1; j <= kMaxOrder; ++j) {
      double prod = 1.0;
      for (int i = 1; i <= kMaxOrder; ++i) {
        prod *= (i - 1 - j * ratio) / i;
        R(i - 1, j - 1) = prod;
      }
    }
    const Eigen::MatrixXd RU = (R * U).topLeftCorner(k, k);
    dif_.leftCols(k) = (dif_.leftCols(k) * RU).eval();
    h_dif_ = absh;
    steps_at_hk_ = 0;
  }
  if (k != k_lu_ || absh != h_lu_) {
    need_lu_ = true;
    if (k != k_lu_) steps_at_hk_ = 0;
  }
  k_ = k;
}

BdfStatus BdfSolver::step(double t_stop) {
  if (!(t_stop > t_)) throw std::invalid_argument("t_stop must lie ahead of the current time");
  if (!started_) start(t_stop);
  if (stats_.steps >= opt_.max_steps) return BdfStatus::too_many_steps;

  const auto N = static_cast<Eigen::Index>(n_);
  const double rtol = opt_.rtol;
  Eigen::VectorXd pred(N), psi(N), difkp1(N), ynew(N), del(N), rhs(N), invwt(N);
  int failures = 0;

  for (;;) {
    const double hmin = 16.0 * kEps * std::max(std::abs(t_), std::numeric_limits<double>::min());
    double absh = std::clamp(absh_, hmin, std::max(hmin, opt_.max_step));
    bool last = false;
    if (1.1 * absh >= t_stop - t_) {
      absh = t_stop - t_;
      last = true;
    }
    set_step(absh, k_);
    absh_ = absh;
    const int k = k_;

    if (!have_jacobian_) compute_jacobian();
    const double hinv_gk = absh / kG[k - 1];
    if (need_lu_) {
      lu_.compute(Eigen::MatrixXd::Identity(N, N) - hinv_gk * J_);
      ++stats_.factorizations;
      need_lu_ = false;
      have_rate_ = false;
      k_lu_ = k;
      h_lu_ = absh;
    }

    pred = y_ + dif_.leftCols(k).rowwise().sum();
    psi.setZero();
    for (int j = 0; j < k; ++j) psi += dif_.col(j) * (kG[j] / kG[k - 1]);
    const double t_new = last ? t_stop : t_ + absh;
    ynew = pred;
    difkp1.setZero();
    invwt = (y_.cwiseAbs().cwiseMax(pred.cwiseAbs())).cwiseMax(threshold_).cwiseInverse();
    const double minnrm = 100.0 * kEps * weighted_norm(ynew, invwt);

    bool converged = false;
    bool too_slow = false;
    double oldnrm = 0.0;
    for (int iter = 1; iter <= kMaxNewtonIterations; ++iter) {
      evaluate(t_new, ynew, scratch_);
      if (!all_finite(scratch_)) {
        too_slow = true;
        break;
      }
      rhs = hinv_gk * scratch_ - (psi + difkp1);
      del = lu_.solve(rhs);
      const double newnrm = weighted_norm(del, invwt);
      difkp1 += del;
      ynew = pred + difkp1;
      if (!std::isfinite(newnrm)) {
        too_slow = true;
        break;
      }
      if (newnrm <= minnrm) {
        converged = true;
        break;
      }
      if (iter == 1) {
        if (have_rate_) {
          const double errit = newnrm * rate_ / (1.0 - rate_);
          if (errit <= 0.05 * rtol) {
            converged = true;
            break;
          }
        } else {
          rate_ = 0.0;
        }
      } else if (newnrm > 0.9 * oldnrm) {
        too_slow = true;
        break;
      } else {
        rate_ = std::max(0.9 * rate_, newnrm / oldnrm);
        have_rate_ = true;
        const double errit = newnrm * rate_ / (1.0 - rate_);
        if (errit <= 0.5 * rtol) {
          converged = true;
          break;
        }
        if (iter == kMaxNewtonIterations || 0.5 * rtol < errit * std::pow(rate_, kMaxNewtonIterations - iter)) {
          too_slow = true;
          break;
        }
      }
      oldnrm = newnrm;
    }
    if (!converged && !too_slow) too_slow = true;

    if (too_slow) {
      ++stats_.failed_steps;
      if (!jacobian_current_) {
        compute_jacobian();
        continue;
      }
      if (absh <= hmin) return ynew.allFinite() ? BdfStatus::step_size_underflow : BdfStatus::nonfinite;
      absh_ = std::max(0.3 * absh, hmin);
      continue;
    }

    const double err = weighted_norm(difkp1, invwt) * kErrConst[k - 1];
    if (!(err <= rtol)) {
      ++stats_.failed_steps;
      if (absh <= hmin) return std::isfinite(err) ? BdfStatus::step_size_underflow : BdfStatus::nonfinite;
      ++failures;
      if (!jacobian_current_) compute_jacobian();
      if (failures == 1 && std::isfinite(err)) {
        absh_ = std::max(hmin, absh * std::max(0.1, 0.833 * std::pow(rtol / err, 1.0 / (k + 1))));
      } else {
        absh_ = std::max(hmin, 0.5 * absh);
        if (k > 1) k_ = k - 1;
      }
      continue;
    }

    // Accepted: roll the differences forward.
    dif_.col(k + 1) = difkp1 - dif_.col(k);
    dif_.col(k) = difkp1;
    for (int j = k - 1; j >= 0; --j) dif_.col(j) += dif_.col(j + 1);
    invwt = (y_.cwiseAbs().cwiseMax(ynew.cwiseAbs())).cwiseMax(threshold_).cwiseInverse();
    t_ = t_new;
    y_ = ynew;
    ++stats_.steps;
    jacobian_current_ = false;

    steps_at_hk_ = std::min(steps_at_hk_ + 1, kMaxOrder + 2);
    if (steps_at_hk_ >= k + 2) {
      double temp = 1.2 * std::pow(err / rtol, 1.0 / (k + 1));
      double hopt = temp > 0.1 ? absh / temp : 10.0 * absh;
      int kopt = k;
      if (k > 1) {
        const double errkm1 = weighted_norm(dif_.col(k - 1), invwt) * kErrConst[k - 2];
        temp = 1.3 * std::pow(errkm1 / rtol, 1.0 / k);
        const double hkm1 = temp > 0.1 ? absh / temp : 10.0 * absh;
        if (hkm1 > hopt) {
          hopt = std::min(absh, hkm1);
          kopt = k - 1;
        }
      }
      if (k < opt_.max_order) {
        const double errkp1 = weighted_norm(dif_.col(k + 1), invwt) * kErrConst[k];
        temp = 1.4 * std::pow(errkp1 / rtol, 1.0 / (k + 2));
        const double hkp1 = temp > 0.1 ? absh / temp : 10.0 * absh;
        if (hkp1 > hopt) {
          hopt = hkp1;
          kopt = k + 1;
        }
      }
      if (hopt > absh) {
        absh_ = hopt;
        k_ = kopt;
      }
    }
    return BdfStatus::ok;
  }
}

} // namespace kcal
