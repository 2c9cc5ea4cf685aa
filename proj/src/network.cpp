#include "purc/network.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include <Eigen/SVD>

#include "purc/linalg.hpp"

namespace purc {

Network::Network(std::vector<std::string> nodes, std::vector<Link> links)
    : nodes_(std::move(nodes)), links_(std::move(links)) {
  if (nodes_.empty()) throw InputError("network has no nodes");
  if (links_.empty()) throw InputError("network has no links");

  for (std::size_t v = 0; v < nodes_.size(); ++v) {
    if (!node_lookup_.emplace(nodes_[v], v).second) {
      throw InputError("duplicate node id '" + nodes_[v] + "'");
    }
  }
  out_.resize(nodes_.size());
  in_.resize(nodes_.size());
  tails_.reserve(links_.size());
  heads_.reserve(links_.size());

  for (std::size_t k = 0; k < links_.size(); ++k) {
    const Link& l = links_[k];
    if (!link_lookup_.emplace(l.id, k).second) {
      throw InputError("duplicate link id '" + l.id + "'");
    }
    auto tail = find_node(l.from);
    auto head = find_node(l.to);
    if (!tail) throw InputError("link '" + l.id + "' has unknown tail node '" + l.from + "'");
    if (!head) throw InputError("link '" + l.id + "' has unknown head node '" + l.to + "'");
    if (*tail == *head) throw InputError("link '" + l.id + "' is a self-loop");
    const auto& a = l.attributes;
    if (!(a.length > 0.0) || !(a.free_flow_time > 0.0) || !(a.capacity > 0.0)) {
      throw InputError("link '" + l.id + "' must have positive length, t0 and capacity");
    }
    tails_.push_back(*tail);
    heads_.push_back(*head);
    out_[*tail].push_back(k);
    in_[*head].push_back(k);
  }
}

std::optional<std::size_t> Network::find_node(std::string_view id) const {
  auto it = node_lookup_.find(std::string(id));
  if (it == node_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Network::find_link(std::string_view id) const {
  auto it = link_lookup_.find(std::string(id));
  if (it == link_lookup_.end()) return std::nullopt;
  return it->second;
}

std::size_t Network::node_index(std::string_view id) const {
  auto v = find_node(id);
  if (!v) throw InputError("node '" + std::string(id) + "' not found");
  return *v;
}

std::size_t Network::link_index(std::string_view id) const {
  auto k = find_link(id);
  if (!k) throw InputError("link '" + std::string(id) + "' not found");
  return *k;
}

Eigen::VectorXd Network::lengths() const {
  Eigen::VectorXd v(links_.size());
  for (std::size_t k = 0; k < links_.size(); ++k) v(k) = links_[k].attributes.length;
  return v;
}

Eigen::VectorXd Network::free_flow_times() const {
  Eigen::VectorXd v(links_.size());
  for (std::size_t k = 0; k < links_.size(); ++k) v(k) = links_[k].attributes.free_flow_time;
  return v;
}

Eigen::VectorXd Network::capacities() const {
  Eigen::VectorXd v(links_.size());
  for (std::size_t k = 0; k < links_.size(); ++k) v(k) = links_[k].attributes.capacity;
  return v;
}

IncidenceMatrix build_incidence(const Network& network) {
  const auto n = static_cast<Eigen::Index>(network.num_nodes());
  const auto m = static_cast<Eigen::Index>(network.num_links());
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(2 * network.num_links());
  for (std::size_t k = 0; k < network.num_links(); ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    entries.emplace_back(static_cast<Eigen::Index>(network.tail(k)), col, -1.0);
    entries.emplace_back(static_cast<Eigen::Index>(network.head(k)), col, 1.0);
  }
  IncidenceMatrix A(n, m);
  A.setFromTriplets(entries.begin(), entries.end());
  A.makeCompressed();
  return A;
}

DemandVector unit_demand(const Network& network, std::size_t origin,
                         std::size_t destination) {
  if (origin >= network.num_nodes() || destination >= network.num_nodes()) {
    throw InputError("demand node index out of range");
  }
  if (origin == destination) {
    throw InputError("origin and destination must differ ('" + network.nodes()[origin] + "')");
  }
  DemandVector d;
  d.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(network.num_nodes()));
  d.b(static_cast<Eigen::Index>(origin)) = -1.0;
  d.b(static_cast<Eigen::Index>(destination)) = 1.0;
  d.origin = origin;
  d.destination = destination;
  return d;
}

DemandVector unit_demand(const Network& network, std::string_view origin,
                         std::string_view destination) {
  return unit_demand(network, network.node_index(origin), network.node_index(destination));
}

namespace {

std::vector<bool> bfs(const Network& network, std::size_t start, bool forward) {
  std::vector<bool> seen(network.num_nodes(), false);
  std::deque<std::size_t> queue{start};
  seen[start] = true;
  const auto& adjacency = forward ? network.out_links() : network.in_links();
  while (!queue.empty()) {
    const std::size_t v = queue.front();
    queue.pop_front();
    for (std::size_t k : adjacency[v]) {
      const std::size_t w = forward ? network.head(k) : network.tail(k);
      if (!seen[w]) {
        seen[w] = true;
        queue.push_back(w);
      }
    }
  }
  return seen;
}

}  // namespace

std::vector<bool> reachable_from(const Network& network, std::size_t source) {
  return bfs(network, source, true);
}

std::vector<bool> reaching(const Network& network, std::size_t target) {
  return bfs(network, target, false);
}

bool has_path(const Network& network, std::size_t origin, std::size_t destination) {
  return reachable_from(network, origin)[destination];
}

ConnectivityReport validate_connected(const Network& network) {
  ConnectivityReport report;
  for (std::size_t s = 0; s < network.num_nodes(); ++s) {
    const auto seen = reachable_from(network, s);
    for (std::size_t t = 0; t < network.num_nodes(); ++t) {
      if (t != s && !seen[t]) report.unreachable.emplace_back(s, t);
    }
  }
  report.strongly_connected = report.unreachable.empty();
  std::ostringstream os;
  if (report.strongly_connected) {
    os << "every ordered node pair is joined by a directed path";
  } else {
    os << report.unreachable.size() << " unreachable ordered pair(s):";
    const std::size_t shown = std::min<std::size_t>(report.unreachable.size(), 20);
    for (std::size_t i = 0; i < shown; ++i) {
      const auto [s, t] = report.unreachable[i];
      os << ' ' << network.nodes()[s] << "->" << network.nodes()[t];
    }
    if (shown < report.unreachable.size()) os << " ...";
  }
  report.diagnostic = os.str();
  return report;
}

ReducedConstraints reduce_constraints(const Eigen::MatrixXd& A, const Eigen::VectorXd& b) {
  if (A.rows() != b.size()) throw InputError("reduce_constraints: dimension mismatch");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double cutoff = kRelativeRankCutoff * (s.size() > 0 ? s(0) : 0.0);
  Eigen::Index r = 0;
  while (r < s.size() && s(r) > cutoff && s(r) > 0.0) ++r;

  ReducedConstraints out;
  out.rank = r;
  const Eigen::MatrixXd U = svd.matrixU().leftCols(r);
  const Eigen::MatrixXd V = svd.matrixV().leftCols(r);
  out.C = s.head(r).asDiagonal() * V.transpose();
  out.d = U.transpose() * b;

  // Ax = b must be consistent: b has to lie in the range of A.
  const Eigen::VectorXd projected = U * out.d;
  const double scale = std::max(1.0, b.lpNorm<Eigen::Infinity>());
  if ((projected - b).lpNorm<Eigen::Infinity>() > 1e-9 * scale) {
    throw InputError("reduce_constraints: Ax = b has no solution");
  }
  return out;
}

ReducedConstraints reduce_constraints(const IncidenceMatrix& A, const Eigen::VectorXd& b) {
  return reduce_constraints(Eigen::MatrixXd(A), b);
}

}  // namespace purc
