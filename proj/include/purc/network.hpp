#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "purc/errors.hpp"

namespace purc {

struct LinkAttributes {
  double length = 1.0;
  double free_flow_time = 1.0;
  double capacity = 1.0;
};

struct Link {
  std::string id;
  std::string from;
  std::string to;
  LinkAttributes attributes;
};

/**
 * Directed network with per-link attributes.
 *
 * Node and link order are taken verbatim from the input and define the row
 * and column order of every vector and matrix built from the network.
 * Construction validates the input; a constructed Network is immutable.
 */
class Network {
 public:
  Network(std::vector<std::string> nodes, std::vector<Link> links);

  std::size_t num_nodes() const { return nodes_.size(); }
  std::size_t num_links() const { return links_.size(); }

  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<Link>& links() const { return links_; }
  const Link& link(std::size_t k) const { return links_[k]; }

  std::optional<std::size_t> find_node(std::string_view id) const;
  std::optional<std::size_t> find_link(std::string_view id) const;

  /// Throws InputError when the node does not exist.
  std::size_t node_index(std::string_view id) const;
  /// Throws InputError when the link does not exist.
  std::size_t link_index(std::string_view id) const;

  std::size_t tail(std::size_t k) const { return tails_[k]; }
  std::size_t head(std::size_t k) const { return heads_[k]; }

  /// Links leaving / entering each node, as link indices.
  const std::vector<std::vector<std::size_t>>& out_links() const { return out_; }
  const std::vector<std::vector<std::size_t>>& in_links() const { return in_; }

  Eigen::VectorXd lengths() const;
  Eigen::VectorXd free_flow_times() const;
  Eigen::VectorXd capacities() const;

 private:
  std::vector<std::string> nodes_;
  std::vector<Link> links_;
  std::vector<std::size_t> tails_;
  std::vector<std::size_t> heads_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::vector<std::size_t>> in_;
  std::unordered_map<std::string, std::size_t> node_lookup_;
  std::unordered_map<std::string, std::size_t> link_lookup_;
};

/// Node-link incidence matrix: -1 at the tail row, +1 at the head row.
using IncidenceMatrix = Eigen::SparseMatrix<double>;

IncidenceMatrix build_incidence(const Network& network);

struct DemandVector {
  Eigen::VectorXd b;
  std::size_t origin = 0;
  std::size_t destination = 0;
};

DemandVector unit_demand(const Network& network, std::string_view origin,
                         std::string_view destination);
DemandVector unit_demand(const Network& network, std::size_t origin,
                         std::size_t destination);

struct ConnectivityReport {
  bool strongly_connected = false;
  /// Ordered (from, to) node-index pairs with no directed path.
  std::vector<std::pair<std::size_t, std::size_t>> unreachable;
  std::string diagnostic;
};

/// Checks every ordered node pair for a directed path (BFS from each node).
ConnectivityReport validate_connected(const Network& network);

/// Nodes reachable from `source` along link directions.
std::vector<bool> reachable_from(const Network& network, std::size_t source);
/// Nodes from which `target` is reachable along link directions.
std::vector<bool> reaching(const Network& network, std::size_t target);

bool has_path(const Network& network, std::size_t origin, std::size_t destination);

/// Full-row-rank equivalent of Ax = b built from the compact SVD of A.
struct ReducedConstraints {
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
  Eigen::Index rank = 0;
};

ReducedConstraints reduce_constraints(const IncidenceMatrix& A, const Eigen::VectorXd& b);
ReducedConstraints reduce_constraints(const Eigen::MatrixXd& A, const Eigen::VectorXd& b);

}  // namespace purc
