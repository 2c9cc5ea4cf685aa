#include <doctest.h>

#include <cmath>

#include <Eigen/LU>

#include "oracles.hpp"
#include "purc/analysis.hpp"
#include "purc/errors.hpp"

using namespace purc;

namespace {

EquilibriumProblem single_link(double t0, double kappa, double q) {
  auto net = std::make_shared<const Network>(
      std::vector<std::string>{"o", "d"}, std::vector<Link>{{"a", "o", "d", {1, t0, kappa}}});
  return EquilibriumProblem{net,
                            {{unit_demand(*net, "o", "d"), q}},
                            Perturbation::for_network(*net, PerturbationFamily::entropic),
                            BprFunction::for_network(*net),
                            {},
                            std::nullopt};
}

// Two OD pairs sharing a five-link network with every link carrying flow.
EquilibriumProblem two_od() {
  auto net = std::make_shared<const Network>(
      std::vector<std::string>{"1", "2", "3", "4"},
      std::vector<Link>{{"12", "1", "2", {1, 2, 10}},
                        {"13", "1", "3", {1, 3, 12}},
                        {"23", "2", "3", {1, 1, 8}},
                        {"24", "2", "4", {1, 4, 10}},
                        {"34", "3", "4", {1, 2, 9}}});
  return EquilibriumProblem{
      net,
      {{unit_demand(*net, "1", "4"), 12.0}, {unit_demand(*net, "2", "3"), 5.0}},
      Perturbation::for_network(*net, PerturbationFamily::entropic),
      BprFunction::for_network(*net),
      {},
      std::nullopt};
}

}  // namespace

TEST_CASE("single link: dc/dt0 equals c/t0") {
  const EquilibriumProblem p = single_link(3.0, 30.0, 30.0);
  const EquilibriumSolution s = solve_equilibrium(p);
  const CostJacobian j = equilibrium_cost_jacobian(p, s, ParameterFamily::free_flow_time);
  CHECK(j.matrix(0, 0) == doctest::Approx(1.15).epsilon(1e-9));
  const EquilibriumJacobians fj = equilibrium_flow_jacobian(p, j);
  CHECK(std::abs(fj.aggregate_flow(0, 0)) < 1e-12);
  // Literal form: -(d zeta^-1/dc)^-1 d zeta^-1/dt0.
  const auto d = bpr_inverse_derivs(p.link_costs, s.costs);
  CHECK(-d.d_free_flow_time(0) / d.d_cost(0) == doctest::Approx(1.15).epsilon(1e-8));
}

TEST_CASE("huge capacity decouples costs from flows") {
  const EquilibriumProblem p = single_link(3.0, 1e9, 30.0);
  const EquilibriumSolution s = solve_equilibrium(p);
  const CostJacobian j = equilibrium_cost_jacobian(p, s, ParameterFamily::capacity);
  CHECK(std::abs(j.matrix(0, 0)) < 1e-20);
}

TEST_CASE("cost Jacobian matches the literal inverse-cost formula and finite differences") {
  const EquilibriumProblem p = two_od();
  const EquilibriumSolution s = solve_equilibrium(p);
  REQUIRE(s.converged);
  REQUIRE(s.aggregate_flows.minCoeff() > 1e-3);
  for (const auto family : {ParameterFamily::capacity, ParameterFamily::free_flow_time}) {
    const CostJacobian j = equilibrium_cost_jacobian(p, s, family);
    const auto d = bpr_inverse_derivs(p.link_costs, s.costs);
    const Eigen::VectorXd dtheta =
        family == ParameterFamily::capacity ? d.d_capacity : d.d_free_flow_time;
    const Eigen::MatrixXd lhs = Eigen::MatrixXd(d.d_cost.asDiagonal()) - j.aggregate_flow_cost;
    const Eigen::MatrixXd literal = -lhs.inverse() * Eigen::MatrixXd(dtheta.asDiagonal());
    CHECK(testing::relative_mismatch(j.matrix, literal, 1e-6) < 1e-8);

    const auto fd = testing::fd_equilibrium(p, s, family, 1e-4);
    CHECK(testing::relative_mismatch(j.matrix, fd.cost, 1e-6) < 1e-3);
    const EquilibriumJacobians fj = equilibrium_flow_jacobian(p, j);
    CHECK(testing::relative_mismatch(fj.aggregate_flow, fd.flow, 1e-6) < 1e-3);
    // Derivative flows are conserved for each type.
    const Eigen::MatrixXd A = build_incidence(*p.network);
    for (const auto& tf : fj.type_flow) CHECK((A * tf).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("shift estimate with zero shift returns the solution") {
  const EquilibriumProblem p = two_od();
  const EquilibriumSolution s = solve_equilibrium(p);
  const auto fj = equilibrium_flow_jacobian(
      p, equilibrium_cost_jacobian(p, s, ParameterFamily::capacity));
  const ShiftEstimate e = estimate_shifted_solution(s, fj, Eigen::VectorXd::Zero(5));
  CHECK((e.flows - s.aggregate_flows).norm() == 0.0);
  CHECK_FALSE(e.clamped);
  CHECK_THROWS_AS(estimate_shifted_solution(s, fj, Eigen::VectorXd::Zero(3)), InputError);
}

TEST_CASE("delta method moments") {
  Eigen::MatrixXd J(2, 1);
  J << 2.0, 0.0;
  UncertaintyInput in{Eigen::VectorXd::Constant(1, 10.0), Eigen::MatrixXd::Constant(1, 1, 9.0),
                      0.9};
  const UncertaintyResult r = propagate_uncertainty(Eigen::Vector2d(5.0, 0.0), J, in);
  CHECK(r.variance(0, 0) == doctest::Approx(36.0));
  CHECK(r.std_dev(0) == doctest::Approx(6.0));
  CHECK(r.cv(0) == doctest::Approx(1.2));
  CHECK(std::isnan(r.cv(1)));
  CHECK(r.correlation(0, 0) == doctest::Approx(1.0));
  CHECK(std::isnan(r.correlation(1, 0)));
  CHECK(r.covariance_with_parameters(0, 0) == doctest::Approx(18.0));

  in.covariance.setZero();
  const UncertaintyResult zero = propagate_uncertainty(Eigen::Vector2d(5.0, 1.0), J, in);
  CHECK(zero.variance.cwiseAbs().maxCoeff() == 0.0);
  CHECK(zero.cv(0) == 0.0);
  CHECK(zero.intervals[0].lower == 5.0);
  CHECK(zero.intervals[0].upper == 5.0);

  in.covariance(0, 0) = -1.0;
  CHECK_THROWS_AS(propagate_uncertainty(Eigen::Vector2d(5.0, 1.0), J, in), InputError);
  Eigen::Matrix2d asym;
  asym << 1, 0.5, 0.4, 1;
  CHECK_THROWS_AS(propagate_uncertainty(Eigen::Vector2d(1, 1), Eigen::Matrix2d::Identity(),
                                        {Eigen::Vector2d(1, 1), asym, 0.9}),
                  InputError);
}

TEST_CASE("normal quantile and confidence intervals") {
  CHECK(two_sided_normal_quantile(0.90) == doctest::Approx(1.6448536).epsilon(1e-7));
  CHECK(two_sided_normal_quantile(0.95) == doctest::Approx(1.9599640).epsilon(1e-7));
  const auto ci = confidence_intervals(Eigen::VectorXd::Constant(1, 27.127),
                                       Eigen::VectorXd::Constant(1, 3.287), 0.90);
  CHECK(ci[0].lower == doctest::Approx(21.721).epsilon(1e-4));
  CHECK(ci[0].upper == doctest::Approx(32.534).epsilon(1e-4));
  const auto ci95 = confidence_intervals(Eigen::VectorXd::Constant(1, 27.127),
                                         Eigen::VectorXd::Constant(1, 3.287), 0.95);
  CHECK(ci95[0].lower == doctest::Approx(20.68).epsilon(1e-3));
  CHECK(ci95[0].upper == doctest::Approx(33.57).epsilon(1e-3));
  CHECK_THROWS_AS(two_sided_normal_quantile(1.0), InputError);
}

TEST_CASE("substitution classification") {
  Eigen::Matrix3d J;
  J << -0.25, 0.25, 0.0, 0.25, -0.25, -1e-7, 2e-6, -0.3, -0.5;
  const auto pairs = substitution_report(J);
  CHECK(pairs.size() == 6);
  CHECK(pairs[0].affected == 0);
  CHECK(pairs[0].changed == 1);
  CHECK(pairs[0].relation == Relation::substitute);
  CHECK(pairs[1].relation == Relation::independent);
  CHECK(pairs[3].relation == Relation::independent);
  CHECK(pairs[4].relation == Relation::substitute);
  CHECK(pairs[5].relation == Relation::complement);
  CHECK(to_string(Relation::complement) == "complement");
}

TEST_CASE("parameter family parsing") {
  CHECK(parse_parameter_family("kappa") == ParameterFamily::capacity);
  CHECK(parse_parameter_family("t0") == ParameterFamily::free_flow_time);
  CHECK_THROWS_AS(parse_parameter_family("alpha"), InputError);
}
