#include <doctest.h>

#include <atomic>
#include <cmath>

#include "purc/equilibrium.hpp"
#include "purc/errors.hpp"

using namespace purc;

namespace {

EquilibriumProblem single_link(double q) {
  auto net = std::make_shared<const Network>(
      std::vector<std::string>{"o", "d"}, std::vector<Link>{{"a", "o", "d", {1, 3, 30}}});
  return EquilibriumProblem{net,
                            {{unit_demand(*net, "o", "d"), q}},
                            Perturbation::for_network(*net, PerturbationFamily::entropic),
                            BprFunction::for_network(*net),
                            {},
                            std::nullopt};
}

}  // namespace

TEST_CASE("BPR cost, slope and inverse") {
  const BprFunction f(Eigen::VectorXd::Constant(1, 3.0), Eigen::VectorXd::Constant(1, 30.0));
  CHECK(f.cost(0, 30.0) == doctest::Approx(3.45));
  CHECK(f.cost(0, 0.0) == 3.0);
  CHECK(f.inverse(0, 3.45) == doctest::Approx(30.0));
  CHECK(f.inverse(0, 2.0) == 0.0);
  const double h = 1e-6;
  CHECK(f.slope(0, 20.0) == doctest::Approx((f.cost(0, 20 + h) - f.cost(0, 20 - h)) / (2 * h)));
  CHECK(f.d_cost_d_capacity(0, 20.0) ==
        doctest::Approx((f.with_capacity(Eigen::VectorXd::Constant(1, 30 + h)).cost(0, 20) -
                         f.with_capacity(Eigen::VectorXd::Constant(1, 30 - h)).cost(0, 20)) /
                        (2 * h)));
  CHECK_THROWS_AS(bpr_eval(f, Eigen::VectorXd::Constant(1, -1.0)), InputError);
  CHECK_THROWS_AS(BprFunction(Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Ones(1)),
                  InputError);
}

TEST_CASE("BPR inverse derivatives against finite differences") {
  const BprFunction f(Eigen::Vector2d(3.0, 2.0), Eigen::Vector2d(30.0, 10.0));
  const Eigen::Vector2d c(3.6, 2.0);
  const BprInverseDerivatives d = bpr_inverse_derivs(f, c);
  const double h = 1e-6;
  const auto inv = [&](const BprFunction& g, double cost) { return g.inverse(0, cost); };
  CHECK(d.d_cost(0) == doctest::Approx((inv(f, 3.6 + h) - inv(f, 3.6 - h)) / (2 * h)));
  CHECK(d.d_free_flow_time(0) ==
        doctest::Approx((inv(f.with_free_flow_time(Eigen::Vector2d(3 + h, 2)), 3.6) -
                         inv(f.with_free_flow_time(Eigen::Vector2d(3 - h, 2)), 3.6)) /
                        (2 * h)));
  CHECK(d.d_capacity(0) ==
        doctest::Approx((inv(f.with_capacity(Eigen::Vector2d(30 + h, 10)), 3.6) -
                         inv(f.with_capacity(Eigen::Vector2d(30 - h, 10)), 3.6)) /
                        (2 * h)));
  CHECK(d.singular[1]);
  CHECK(std::isinf(d.d_cost(1)));
}

TEST_CASE("single link equilibrium cost is the BPR cost at full demand") {
  const EquilibriumSolution s = solve_equilibrium(single_link(30.0));
  CHECK(s.converged);
  CHECK(s.residual <= 1e-8);
  CHECK(s.costs(0) == doctest::Approx(3.45).epsilon(1e-10));
  CHECK(s.aggregate_flows(0) == doctest::Approx(30.0).epsilon(1e-12));
}

TEST_CASE("symmetric parallel links split demand evenly") {
  auto net = std::make_shared<const Network>(
      std::vector<std::string>{"o", "d"},
      std::vector<Link>{{"a", "o", "d", {1, 2, 10}}, {"b", "o", "d", {1, 2, 10}}});
  EquilibriumProblem p{net,
                       {{unit_demand(*net, "o", "d"), 12.0}},
                       Perturbation::for_network(*net, PerturbationFamily::entropic),
                       BprFunction::for_network(*net),
                       {},
                       std::nullopt};
  const EquilibriumSolution s = solve_equilibrium(p);
  CHECK(s.converged);
  CHECK(s.aggregate_flows(0) == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(s.costs(0) == doctest::Approx(s.costs(1)).epsilon(1e-12));
  // Fixed point: costs equal BPR of the induced flows.
  CHECK((bpr_eval(p.link_costs, s.aggregate_flows) - s.costs).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("stiff capacities converge from a distant warm start") {
  auto net = std::make_shared<const Network>(
      std::vector<std::string>{"1", "2"},
      std::vector<Link>{{"a", "1", "2", {1, 2, 0.731}}, {"b", "1", "2", {1, 2.5, 1.347}}});
  EquilibriumProblem p{net,
                       {{unit_demand(*net, "1", "2"), 10.0}},
                       Perturbation::for_network(*net, PerturbationFamily::entropic),
                       BprFunction::for_network(*net),
                       {},
                       Eigen::Vector2d(2.2, 2.5)};
  const EquilibriumSolution s = solve_equilibrium(p);
  CHECK(s.converged);
  CHECK(s.aggregate_flows.sum() == doctest::Approx(10.0).epsilon(1e-9));
  CHECK(s.costs(0) > 100.0);
}

TEST_CASE("large networks fall back to Anderson mixing") {
  auto net = std::make_shared<const Network>(
      std::vector<std::string>{"o", "d"},
      std::vector<Link>{{"a", "o", "d", {1, 2, 10}}, {"b", "o", "d", {1, 3, 8}}});
  EquilibriumProblem p{net,
                       {{unit_demand(*net, "o", "d"), 12.0}},
                       Perturbation::for_network(*net, PerturbationFamily::entropic),
                       BprFunction::for_network(*net),
                       {},
                       std::nullopt};
  const EquilibriumSolution newton = solve_equilibrium(p);
  p.options.newton_max_links = 0;
  const EquilibriumSolution mixing = solve_equilibrium(p);
  CHECK(newton.converged);
  CHECK(mixing.converged);
  CHECK((newton.costs - mixing.costs).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("thread count does not change the result") {
  auto net = std::make_shared<const Network>(
      std::vector<std::string>{"1", "2", "3"},
      std::vector<Link>{{"12", "1", "2", {1, 2, 10}},
                        {"13", "1", "3", {1, 4, 10}},
                        {"23", "2", "3", {1, 1, 5}},
                        {"21", "2", "1", {1, 1, 5}}});
  EquilibriumProblem p{net,
                       {{unit_demand(*net, "1", "3"), 8.0}, {unit_demand(*net, "2", "3"), 5.0},
                        {unit_demand(*net, "1", "2"), 3.0}},
                       Perturbation::for_network(*net, PerturbationFamily::quadratic),
                       BprFunction::for_network(*net),
                       {},
                       std::nullopt};
  const EquilibriumSolution one = solve_equilibrium(p);
  p.options.threads = 3;
  const EquilibriumSolution three = solve_equilibrium(p);
  CHECK(one.converged);
  CHECK((one.costs - three.costs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("parallel_for visits every index and propagates errors") {
  std::atomic<int> sum{0};
  parallel_for(100, 4, [&](std::size_t i) { sum += static_cast<int>(i); });
  CHECK(sum == 4950);
  CHECK_THROWS_AS(parallel_for(10, 3,
                               [](std::size_t i) {
                                 if (i == 7) throw InputError("boom");
                               }),
                  InputError);
}

TEST_CASE("equilibrium input validation") {
  EquilibriumProblem p = single_link(10.0);
  p.types[0].q = 0.0;
  CHECK_THROWS_AS(solve_equilibrium(p), InputError);
  p = single_link(10.0);
  p.types.clear();
  CHECK_THROWS_AS(solve_equilibrium(p), InputError);
}
