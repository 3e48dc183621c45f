#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace kcal {

struct BdfOptions {
  double rtol = 1e-6;
  std::vector<double> atol; // per component; size must match the system
  double initial_step = 0.0; // 0 = estimate from y'(t0)
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 100000;
  int max_order = 5;
};

enum class BdfStatus { ok, too_many_steps, step_size_underflow, nonfinite };

const char* to_string(BdfStatus s) noexcept;

struct BdfStats {
  std::size_t steps = 0;
  std::size_t failed_steps = 0;
  std::size_t rhs_evals = 0;
  std::size_t jacobian_evals = 0;
  std::size_t factorizations = 0;
};

/// Variable-order, variable-step backward differentiation formula solver for
/// stiff systems y' = f(t, y).
///
/// The history is kept as backward differences at a quasi-constant step;
/// changing h interpolates the differences onto the new grid. Each step
/// solves the implicit corrector with a simplified Newton iteration on
/// (I - h/G_k J), reusing J until convergence stalls. The local error test is
/// a weighted max-norm against rtol with weights max(|y|, atol/rtol), so
/// components below atol/rtol are controlled absolutely.
class BdfSolver {
 public:
  using Rhs = std::function<void(double t, std::span<const double> y, std::span<double> ydot)>;
  /// Fills J = df/dy at (t, y); f is f(t, y), already evaluated.
  using Jacobian = std::function<void(double t, std::span<const double> y, std::span<const double> f,
                                      Eigen::Ref<Eigen::MatrixXd> J)>;

  BdfSolver(std::size_t n, Rhs rhs, BdfOptions options, Jacobian jacobian = {});

  void reset(double t0, std::span<const double> y0);

  /// Advances by one accepted step without passing t_stop; lands exactly on
  /// t_stop when it is within reach.
  BdfStatus step(double t_stop);

  double t() const noexcept { return t_; }
  std::span<const double> y() const noexcept { return {y_.data(), static_cast<std::size_t>(y_.size())}; }
  int order() const noexcept { return k_; }
  double step_size() const noexcept { return absh_; }
  const BdfStats& stats() const noexcept { return stats_; }

 private:
  void start(double t_stop);
  void evaluate(double t, const Eigen::VectorXd& y, Eigen::VectorXd& f);
  void compute_jacobian();
  void set_step(double absh, int k);
  double weighted_norm(const Eigen::VectorXd& v, const Eigen::VectorXd& inv_weight) const;

  std::size_t n_;
  Rhs rhs_;
  Jacobian jacobian_;
  BdfOptions opt_;
  Eigen::VectorXd threshold_;

  double t_ = 0.0;
  Eigen::VectorXd y_;
  Eigen::MatrixXd dif_; // backward differences, n x (max_order + 2)
  Eigen::MatrixXd J_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  Eigen::VectorXd f_, scratch_;

  bool started_ = false;
  int k_ = 1;
  double absh_ = 0.0;    // step to attempt next
  double h_dif_ = 0.0;   // step the differences are currently scaled for
  int k_lu_ = 0;         // order the iteration matrix was built for
  double h_lu_ = 0.0;
  bool need_lu_ = true;
  bool have_jacobian_ = false;
  bool jacobian_current_ = false;
  bool have_rate_ = false;
  double rate_ = 0.0;
  int steps_at_hk_ = 0;
  BdfStats stats_;
};

} // namespace kcal
