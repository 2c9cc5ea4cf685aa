#include <doctest.h>

#include "purc/errors.hpp"
#include "purc/network.hpp"

using namespace purc;

namespace {

Network triangle() {
  return Network({"a", "b", "c"}, {{"ab", "a", "b", {1, 1, 1}},
                                   {"bc", "b", "c", {2, 1, 1}},
                                   {"ac", "a", "c", {3, 1, 1}}});
}

}  // namespace

TEST_CASE("incidence matrix has -1 at the tail and +1 at the head") {
  const Network net = triangle();
  const Eigen::MatrixXd A = build_incidence(net);
  CHECK(A.rows() == 3);
  CHECK(A.cols() == 3);
  CHECK(A(0, 0) == -1);
  CHECK(A(1, 0) == 1);
  CHECK(A(2, 0) == 0);
  CHECK(A(1, 1) == -1);
  CHECK(A(2, 1) == 1);
  CHECK(A.colwise().sum().cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("unit demand leaves the origin and enters the destination") {
  const Network net = triangle();
  const DemandVector d = unit_demand(net, "a", "c");
  CHECK(d.b(0) == -1);
  CHECK(d.b(1) == 0);
  CHECK(d.b(2) == 1);
  CHECK_THROWS_AS(unit_demand(net, "a", "a"), InputError);
  CHECK_THROWS_AS(unit_demand(net, "a", "zz"), InputError);
}

TEST_CASE("network construction rejects malformed input") {
  CHECK_THROWS_AS(Network({}, {}), InputError);
  CHECK_THROWS_AS(Network({"a", "a"}, {{"x", "a", "a", {}}}), InputError);
  CHECK_THROWS_AS(Network({"a", "b"}, {{"x", "a", "a", {}}}), InputError);
  CHECK_THROWS_AS(Network({"a", "b"}, {{"x", "a", "q", {}}}), InputError);
  CHECK_THROWS_AS(Network({"a", "b"}, {{"x", "a", "b", {}}, {"x", "b", "a", {}}}), InputError);
  CHECK_THROWS_AS(Network({"a", "b"}, {{"x", "a", "b", {-1, 1, 1}}}), InputError);
  CHECK_THROWS_AS(Network({"a", "b"}, {{"x", "a", "b", {1, 1, 0}}}), InputError);
}

TEST_CASE("connectivity report lists unreachable ordered pairs") {
  const Network net = triangle();
  const auto report = validate_connected(net);
  CHECK_FALSE(report.strongly_connected);
  CHECK(report.unreachable.size() == 3);
  CHECK(has_path(net, 0, 2));
  CHECK_FALSE(has_path(net, 2, 0));
  const auto from_b = reachable_from(net, 1);
  CHECK_FALSE(from_b[0]);
  CHECK(from_b[2]);
  const auto to_b = reaching(net, 1);
  CHECK(to_b[0]);
  CHECK_FALSE(to_b[2]);
}

TEST_CASE("reduced constraints keep the feasible set and have full row rank") {
  const Network net = triangle();
  const IncidenceMatrix A = build_incidence(net);
  const DemandVector d = unit_demand(net, "a", "c");
  const ReducedConstraints rc = reduce_constraints(A, d.b);
  CHECK(rc.rank == 2);
  CHECK(rc.C.rows() == 2);
  // Path a-b-c and the direct link are both feasible under either system.
  for (const Eigen::Vector3d x : {Eigen::Vector3d(1, 1, 0), Eigen::Vector3d(0, 0, 1),
                                  Eigen::Vector3d(0.25, 0.25, 0.75)}) {
    CHECK((Eigen::MatrixXd(A) * x - d.b).norm() < 1e-12);
    CHECK((rc.C * x - rc.d).norm() < 1e-12);
  }
  const Eigen::Vector3d bad(1, 0, 0);
  CHECK((rc.C * bad - rc.d).norm() > 1e-3);
  Eigen::VectorXd off(3);
  off << -1, 0, 2;
  CHECK_THROWS_AS(reduce_constraints(A, off), InputError);
}
