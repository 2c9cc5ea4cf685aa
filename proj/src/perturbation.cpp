#include "purc/perturbation.hpp"

#include <cmath>

namespace purc {

double EntropicShape::value(double x) const { return (1.0 + x) * std::log1p(x) - x; }
double EntropicShape::derivative(double x) const { return std::log1p(x); }
double EntropicShape::second_derivative(double x) const { return 1.0 / (1.0 + x); }
double EntropicShape::inverse_derivative(double y) const {
  return y > 0.0 ? std::expm1(y) : 0.0;
}
double EntropicShape::conjugate(double y) const {
  return y > 0.0 ? std::expm1(y) - y : 0.0;
}

double QuadraticShape::value(double x) const { return x * x; }
double QuadraticShape::derivative(double x) const { return 2.0 * x; }
double QuadraticShape::second_derivative(double) const { return 2.0; }
double QuadraticShape::inverse_derivative(double y) const { return y > 0.0 ? 0.5 * y : 0.0; }
double QuadraticShape::conjugate(double y) const { return y > 0.0 ? 0.25 * y * y : 0.0; }

PerturbationFamily parse_family(std::string_view name) {
  if (name == "entropic") return PerturbationFamily::entropic;
  if (name == "quadratic") return PerturbationFamily::quadratic;
  throw InputError("unknown perturbation family '" + std::string(name) + "'");
}

std::string to_string(PerturbationFamily family) {
  return family == PerturbationFamily::entropic ? "entropic" : "quadratic";
}

ScaleSource parse_scale_source(std::string_view name) {
  if (name == "length") return ScaleSource::length;
  if (name == "one") return ScaleSource::one;
  if (name == "t0") return ScaleSource::free_flow_time;
  if (name == "per_link") return ScaleSource::per_link;
  throw InputError("unknown perturbation scale '" + std::string(name) + "'");
}

std::string to_string(ScaleSource source) {
  switch (source) {
    case ScaleSource::length: return "length";
    case ScaleSource::one: return "one";
    case ScaleSource::free_flow_time: return "t0";
    case ScaleSource::per_link: return "per_link";
  }
  return "length";
}

Perturbation::Perturbation(PerturbationFamily family, Eigen::VectorXd scale)
    : family_(family), scale_(std::move(scale)) {
  for (Eigen::Index k = 0; k < scale_.size(); ++k) {
    if (!(scale_(k) > 0.0) || !std::isfinite(scale_(k))) {
      throw InputError("perturbation scale must be positive and finite");
    }
  }
  if (family == PerturbationFamily::entropic) {
    shape_ = std::make_shared<EntropicShape>();
  } else {
    shape_ = std::make_shared<QuadraticShape>();
  }
}

Perturbation Perturbation::for_network(const Network& network, PerturbationFamily family,
                                       ScaleSource source) {
  switch (source) {
    case ScaleSource::length:
      return Perturbation(family, network.lengths());
    case ScaleSource::one:
      return Perturbation(family,
                          Eigen::VectorXd::Ones(static_cast<Eigen::Index>(network.num_links())));
    case ScaleSource::free_flow_time:
      return Perturbation(family, network.free_flow_times());
    case ScaleSource::per_link:
      break;
  }
  throw InputError("per-link perturbation scales must be given explicitly");
}

void Perturbation::check_flows(const Eigen::VectorXd& x) const {
  if (x.size() != scale_.size()) throw InputError("flow vector has wrong length");
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (x(k) < 0.0) throw InputError("perturbation evaluated at a negative flow");
  }
}

double Perturbation::value(const Eigen::VectorXd& x) const {
  check_flows(x);
  double total = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) total += link_value(k, x(k));
  return total;
}

Eigen::VectorXd Perturbation::gradient(const Eigen::VectorXd& x) const {
  check_flows(x);
  Eigen::VectorXd g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) g(k) = link_derivative(k, x(k));
  return g;
}

Eigen::VectorXd Perturbation::hessian_diagonal(const Eigen::VectorXd& x) const {
  check_flows(x);
  Eigen::VectorXd h(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) h(k) = link_second_derivative(k, x(k));
  return h;
}

Eigen::VectorXd Perturbation::inverse_gradient(const Eigen::VectorXd& y) const {
  if (y.size() != scale_.size()) throw InputError("vector has wrong length");
  Eigen::VectorXd x(y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) x(k) = link_inverse_derivative(k, y(k));
  return x;
}

}  // namespace purc
