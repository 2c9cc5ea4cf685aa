#pragma once

#include <memory>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "purc/network.hpp"

namespace purc {

/**
 * Unit-scale link perturbation shape f with f(0) = f'(0) = 0, f'' > 0 on
 * x >= 0. A link perturbation is F_ij(x) = s_ij * f(x).
 *
 * New families are added by implementing this interface.
 */
class PerturbationShape {
 public:
  virtual ~PerturbationShape() = default;
  virtual std::string name() const = 0;
  virtual double value(double x) const = 0;
  virtual double derivative(double x) const = 0;
  virtual double second_derivative(double x) const = 0;
  /// (f')^{-1}(y), extended by 0 for y < 0.
  virtual double inverse_derivative(double y) const = 0;
  /// Convex conjugate restricted to x >= 0: sup_{x>=0} (x y - f(x)).
  virtual double conjugate(double y) const = 0;
};

/// f(x) = (1 + x) ln(1 + x) - x
class EntropicShape final : public PerturbationShape {
 public:
  std::string name() const override { return "entropic"; }
  double value(double x) const override;
  double derivative(double x) const override;
  double second_derivative(double x) const override;
  double inverse_derivative(double y) const override;
  double conjugate(double y) const override;
};

/// f(x) = x^2
class QuadraticShape final : public PerturbationShape {
 public:
  std::string name() const override { return "quadratic"; }
  double value(double x) const override;
  double derivative(double x) const override;
  double second_derivative(double x) const override;
  double inverse_derivative(double y) const override;
  double conjugate(double y) const override;
};

enum class PerturbationFamily { entropic, quadratic };

/// Where the per-link scale s_ij comes from.
enum class ScaleSource { length, one, free_flow_time, per_link };

PerturbationFamily parse_family(std::string_view name);
std::string to_string(PerturbationFamily family);
ScaleSource parse_scale_source(std::string_view name);
std::string to_string(ScaleSource source);

/**
 * Link-separable perturbation F(x) = sum_ij s_ij f(x_ij).
 *
 * All vector operations work link-wise over the network's link order.
 */
class Perturbation {
 public:
  Perturbation(PerturbationFamily family, Eigen::VectorXd scale);

  /// Builds the scale vector from network attributes (not for per_link).
  static Perturbation for_network(const Network& network, PerturbationFamily family,
                                  ScaleSource source = ScaleSource::length);

  PerturbationFamily family() const { return family_; }
  const PerturbationShape& shape() const { return *shape_; }
  const Eigen::VectorXd& scale() const { return scale_; }
  Eigen::Index size() const { return scale_.size(); }

  double link_value(Eigen::Index k, double x) const { return scale_(k) * shape_->value(x); }
  double link_derivative(Eigen::Index k, double x) const {
    return scale_(k) * shape_->derivative(x);
  }
  double link_second_derivative(Eigen::Index k, double x) const {
    return scale_(k) * shape_->second_derivative(x);
  }
  double link_inverse_derivative(Eigen::Index k, double y) const {
    return shape_->inverse_derivative(y / scale_(k));
  }
  double link_conjugate(Eigen::Index k, double y) const {
    return scale_(k) * shape_->conjugate(y / scale_(k));
  }

  /// F(x); throws InputError on a negative component.
  double value(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  Eigen::VectorXd hessian_diagonal(const Eigen::VectorXd& x) const;
  Eigen::VectorXd inverse_gradient(const Eigen::VectorXd& y) const;

 private:
  void check_flows(const Eigen::VectorXd& x) const;

  PerturbationFamily family_;
  Eigen::VectorXd scale_;
  std::shared_ptr<const PerturbationShape> shape_;
};

}  // namespace purc
