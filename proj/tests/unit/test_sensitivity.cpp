#include <doctest.h>

#include <random>

#include <Eigen/Eigenvalues>

#include "oracles.hpp"
#include "purc/errors.hpp"
#include "purc/sensitivity.hpp"
#include "random_networks.hpp"

using namespace purc;

namespace {

PurcProblem parallel(double c1, double c2) {
  auto net = std::make_shared<const Network>(
      std::vector<std::string>{"o", "d"},
      std::vector<Link>{{"a", "o", "d", {1, 1, 1}}, {"b", "o", "d", {1, 1, 1}}});
  return PurcProblem{net, Eigen::Vector2d(c1, c2), unit_demand(*net, "o", "d"), 1.0,
                     Perturbation(PerturbationFamily::quadratic, Eigen::Vector2d(1, 1)), {},
                     std::nullopt};
}

}  // namespace

TEST_CASE("parallel links Jacobian") {
  const PurcProblem p = parallel(1.0, 1.0);
  const PurcSolution s = solve_purc(p);
  const PurcJacobian j = purc_jacobian(p, s);
  CHECK(j.matrix(0, 0) == doctest::Approx(-0.25));
  CHECK(j.matrix(0, 1) == doctest::Approx(0.25));
  CHECK(j.matrix(1, 0) == doctest::Approx(0.25));
  CHECK(j.matrix(1, 1) == doctest::Approx(-0.25));
  CHECK_FALSE(j.near_boundary);
}

TEST_CASE("series path has a zero Jacobian") {
  auto net = std::make_shared<const Network>(
      std::vector<std::string>{"a", "b", "c"},
      std::vector<Link>{{"ab", "a", "b", {1, 1, 1}}, {"bc", "b", "c", {1, 1, 1}}});
  const PurcProblem p{net, Eigen::Vector2d(1, 2), unit_demand(*net, "a", "c"), 1.0,
                      Perturbation(PerturbationFamily::entropic, Eigen::Vector2d(1, 1)), {},
                      std::nullopt};
  const PurcSolution s = solve_purc(p);
  const PurcJacobian j = purc_jacobian(p, s);
  CHECK(j.matrix.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("projection properties and both projection formulas agree") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    auto inst = testing::random_instance(rng, 5, 25, PerturbationFamily::entropic);
    const IncidenceMatrix A = build_incidence(*inst.network);
    std::bernoulli_distribution coin(0.7);
    std::vector<bool> mask(static_cast<std::size_t>(A.cols()));
    for (auto&& b : mask) b = coin(rng);
    const ActiveSet active = ActiveSet::from_mask(mask);
    const Eigen::MatrixXd P = projection(A, active).matrix;
    const Eigen::MatrixXd B = active.diagonal();
    CHECK((P * P - P).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((P - P.transpose()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((P * Eigen::MatrixXd(A).transpose()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((P * B - P).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((projection_transposed_form(A, active) - P).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((testing::nullspace_projection(Eigen::MatrixXd(A), mask) - P).cwiseAbs().maxCoeff() <
          1e-9);
  }
}

TEST_CASE("Jacobian matches the KKT oracle and is symmetric negative semidefinite") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto family = t % 2 ? PerturbationFamily::entropic : PerturbationFamily::quadratic;
    auto inst = testing::random_instance(rng, 5, 30, family);
    const PurcSolution s = solve_purc(inst.problem);
    const PurcJacobian j = purc_jacobian(inst.problem, s);
    const Eigen::MatrixXd kkt = testing::kkt_flow_jacobian(inst.problem, s);
    CHECK((j.matrix - kkt).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((j.matrix - j.matrix.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(j.matrix);
    CHECK(eig.eigenvalues().maxCoeff() < 1e-8);
    // Derivative flows are conserved.
    CHECK((Eigen::MatrixXd(build_incidence(*inst.network)) * j.matrix).cwiseAbs().maxCoeff() <
          1e-9);
  }
}

TEST_CASE("boundary check flags a link about to activate") {
  // With c = (1, 3) the second link has reduced cost exactly 0 at x = (1, 0).
  const PurcProblem p = parallel(1.0, 3.0);
  const PurcSolution s = solve_purc(p);
  const BoundaryReport r = boundary_check(p, s);
  CHECK(r.near_boundary());
  CHECK(r.near_activation.size() == 1);
  CHECK(r.near_activation[0] == 1);
  const PurcJacobian j = purc_jacobian(p, s);
  CHECK(j.near_boundary);
  CHECK_FALSE(boundary_check(parallel(1.0, 3.5), solve_purc(parallel(1.0, 3.5))).near_boundary());
}

TEST_CASE("directional sensitivity equals the dense product") {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 20; ++t) {
    const auto family = t % 2 ? PerturbationFamily::entropic : PerturbationFamily::quadratic;
    auto inst = testing::random_instance(rng, 5, 60, family);
    inst.problem.demand_scale = 2.5;
    const PurcSolution s = solve_purc(inst.problem);
    const PurcJacobian j = purc_jacobian(inst.problem, s);
    std::normal_distribution<double> z;
    Eigen::VectorXd delta(inst.problem.cost.size());
    for (auto& v : delta) v = z(rng);
    const DirectionalResult r = directional_sensitivity(inst.problem, s, delta);
    CHECK((r.flow_change - 2.5 * j.matrix * delta).lpNorm<Eigen::Infinity>() < 1e-8);
  }
  const PurcProblem p = parallel(1, 1);
  CHECK_THROWS_AS(directional_sensitivity(p, solve_purc(p), Eigen::VectorXd::Ones(3)), InputError);
}
