#pragma once

// Levenberg-Marquardt for cost(x) = ||r(x)||^2 with Marquardt diagonal
// scaling. Works with dense (Eigen::MatrixXd) or sparse
// (Eigen::SparseMatrix<double>) Jacobians.

#include <capref/error.hpp>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>
#include <string>
#include <type_traits>

namespace capref {

struct LmOptions {
  int max_iterations = 100;
  double initial_damping = 1e-3;
  double damping_up = 10.0;
  double damping_down = 0.1;
  double gradient_tolerance = 1e-10;
  double step_tolerance = 1e-10;
  double cost_tolerance = 1e-12;

  void validate() const {
    if (max_iterations < 0) throw InvalidInput("max_iterations must be non-negative");
    if (!(initial_damping > 0) || !(damping_up > 1) || !(damping_down > 0 && damping_down < 1))
      throw InvalidInput("damping factors must satisfy initial > 0, up > 1, 0 < down < 1");
    if (!(gradient_tolerance > 0) || !(step_tolerance > 0) || !(cost_tolerance > 0))
      throw InvalidInput("LM tolerances must be positive");
  }
};

enum class LmStatus { GradientTolerance, StepTolerance, CostTolerance, MaxIterations };

inline const char* to_string(LmStatus s) {
  switch (s) {
    case LmStatus::GradientTolerance: return "gradient_tolerance";
    case LmStatus::StepTolerance: return "step_tolerance";
    case LmStatus::CostTolerance: return "cost_tolerance";
    case LmStatus::MaxIterations: return "max_iterations";
  }
  return "?";
}

struct LmResult {
  Eigen::VectorXd x;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  int accepted = 0;
  LmStatus status = LmStatus::MaxIterations;
};

namespace detail {

inline constexpr double kMaxDamping = 1e32;

inline Eigen::VectorXd damping_diagonal(const Eigen::VectorXd& diag) {
  const double floor = 1e-9 * std::max(diag.maxCoeff(), 1e-12);
  return diag.cwiseMax(floor);
}

/// Solves (A + lambda D) dx = -g; returns false if the system is singular.
inline bool damped_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& d, const Eigen::VectorXd& g,
                         double lambda, Eigen::VectorXd& dx) {
  Eigen::MatrixXd m = a;
  m.diagonal() += lambda * d;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) return false;
  dx = -ldlt.solve(g);
  return dx.allFinite();
}

inline bool damped_solve(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& d, const Eigen::VectorXd& g,
                         double lambda, Eigen::VectorXd& dx) {
  Eigen::SparseMatrix<double> m = a;
  for (Eigen::Index i = 0; i < m.rows(); ++i) m.coeffRef(i, i) += lambda * d[i];
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(m);
  if (ldlt.info() != Eigen::Success) return false;
  if ((ldlt.vectorD().array() <= 0.0).any()) return false;
  dx = -ldlt.solve(g);
  return ldlt.info() == Eigen::Success && dx.allFinite();
}

}  // namespace detail

/// `residual(x)` returns r; `jacobian(x)` returns dr/dx, dense or sparse.
/// A step is accepted only if it lowers the cost, so the final cost never
/// exceeds the initial one.
template <class ResidualFn, class JacobianFn>
LmResult levenberg_marquardt(ResidualFn&& residual, JacobianFn&& jacobian, Eigen::VectorXd x0,
                             const LmOptions& opts = {}) {
  opts.validate();
  using JacType = std::decay_t<decltype(jacobian(x0))>;
  constexpr bool kSparse = std::is_base_of_v<Eigen::SparseMatrixBase<JacType>, JacType>;
  using Normal = std::conditional_t<kSparse, Eigen::SparseMatrix<double>, Eigen::MatrixXd>;

  LmResult res;
  res.x = std::move(x0);
  Eigen::VectorXd r = residual(res.x);
  if (!r.allFinite()) throw NumericFailure("LM: non-finite residual at the starting point");
  double cost = r.squaredNorm();
  res.initial_cost = cost;
  double lambda = opts.initial_damping;

  bool need_jacobian = true;
  Normal a;
  Eigen::VectorXd g, d;
  while (true) {
    if (need_jacobian) {
      const JacType j = jacobian(res.x);
      if (j.rows() != r.size() || j.cols() != res.x.size()) throw InvalidInput("LM: Jacobian shape mismatch");
      if constexpr (kSparse) {
        const Eigen::SparseMatrix<double> jt = j.transpose();
        a = (jt * j).pruned();
        g = jt * r;
        d = detail::damping_diagonal(a.diagonal());
      } else {
        a = j.transpose() * j;
        g = j.transpose() * r;
        d = detail::damping_diagonal(a.diagonal());
      }
      if (!g.allFinite()) throw NumericFailure("LM: non-finite Jacobian");
      need_jacobian = false;
    }
    if (g.lpNorm<Eigen::Infinity>() <= opts.gradient_tolerance) {
      res.status = LmStatus::GradientTolerance;
      break;
    }
    if (res.iterations >= opts.max_iterations) {
      res.status = LmStatus::MaxIterations;
      break;
    }
    ++res.iterations;
    Eigen::VectorXd dx;
    if (!detail::damped_solve(a, d, g, lambda, dx)) {
      lambda *= opts.damping_up;
      if (lambda > detail::kMaxDamping) {
        res.status = LmStatus::StepTolerance;
        break;
      }
      continue;
    }
    if (dx.norm() <= opts.step_tolerance * (res.x.norm() + opts.step_tolerance)) {
      res.status = LmStatus::StepTolerance;
      break;
    }
    const Eigen::VectorXd x_new = res.x + dx;
    const Eigen::VectorXd r_new = residual(x_new);
    const double cost_new = r_new.allFinite() ? r_new.squaredNorm() : INFINITY;
    if (cost_new < cost) {
      const double drop = cost - cost_new;
      res.x = x_new;
      r = r_new;
      cost = cost_new;
      ++res.accepted;
      lambda = std::max(lambda * opts.damping_down, 1e-15);
      need_jacobian = true;
      if (drop <= opts.cost_tolerance * cost) {
        res.status = LmStatus::CostTolerance;
        break;
      }
    } else {
      lambda *= opts.damping_up;
      if (lambda > detail::kMaxDamping) {
        res.status = LmStatus::StepTolerance;
        break;
      }
    }
  }
  res.final_cost = cost;
  return res;
}

}  // namespace capref
