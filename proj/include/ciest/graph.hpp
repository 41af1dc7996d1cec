#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ciest/rng.hpp"

namespace ciest {

/// Unordered node pair, stored with first < second.
using Edge = std::pair<std::size_t, std::size_t>;

/// Symmetric positive-semidefinite graph Laplacian L = D - A.
///
/// Simple graphs come from `from_edges` (unit weights). Weighted Laplacians,
/// such as the mean of a link-failure model, come from `from_matrix`. The
/// stored matrix is exactly symmetric, which the blockwise kernels rely on.
class LaplacianMatrix {
 public:
  static LaplacianMatrix from_edges(std::size_t n_nodes, std::vector<Edge> edges);
  static LaplacianMatrix from_matrix(const Eigen::MatrixXd& entries);

  std::size_t n_nodes() const { return static_cast<std::size_t>(entries_.rows()); }
  const Eigen::MatrixXd& matrix() const { return entries_; }
  double operator()(std::size_t r, std::size_t c) const { return entries_(r, c); }

  /// Sorted support of the off-diagonal part.
  const std::vector<Edge>& edges() const { return edges_; }
  bool is_simple() const { return simple_; }
  bool has_edge(std::size_t a, std::size_t b) const;

  /// Ascending eigenvalues, computed on each call.
  Eigen::VectorXd eigenvalues() const;

 private:
  LaplacianMatrix(Eigen::MatrixXd entries, std::vector<Edge> edges, bool simple)
      : entries_(std::move(entries)), edges_(std::move(edges)), simple_(simple) {}

  Eigen::MatrixXd entries_;
  std::vector<Edge> edges_;
  bool simple_;
};

/// Second-smallest eigenvalue. Reported as exactly 0 when it falls below
/// 1e-9 * lambda_max (disconnected) and for graphs with fewer than 2 nodes.
double algebraic_connectivity(const LaplacianMatrix& L);

enum class Topology { complete, ring, path, star };
Topology parse_topology(const std::string& name);
std::string topology_name(Topology t);
std::vector<Edge> topology_edges(Topology t, std::size_t n_nodes);

/// y = (L (x) I_m) x without forming the Kronecker product.
void apply_kron(const LaplacianMatrix& L, std::size_t m, std::span<const double> x,
                std::span<double> y);
Eigen::VectorXd apply_kron(const LaplacianMatrix& L, std::size_t m, const Eigen::VectorXd& x);

/// Random network: a distribution over subgraphs of `base`, drawn i.i.d. in time.
class LinkFailureModel {
 public:
  struct Fixed {};
  /// Each base edge fails independently with probability p.
  struct Erasure {
    double p;
  };
  /// Exactly one base edge, chosen uniformly, is active per draw.
  struct Gossip {};
  /// User-supplied sampler; spatially correlated failures go here.
  struct Custom {
    std::function<std::vector<Edge>(RngStream&)> sampler;
    std::optional<Eigen::MatrixXd> declared_mean;
  };
  using Kind = std::variant<Fixed, Erasure, Gossip, Custom>;

  LinkFailureModel(LaplacianMatrix base, Kind kind);
  static LinkFailureModel fixed(LaplacianMatrix base) { return {std::move(base), Fixed{}}; }
  static LinkFailureModel erasure(LaplacianMatrix base, double p) {
    return {std::move(base), Erasure{p}};
  }
  static LinkFailureModel gossip(LaplacianMatrix base) { return {std::move(base), Gossip{}}; }

  const LaplacianMatrix& base() const { return base_; }
  const Kind& kind() const { return kind_; }
  std::size_t n_nodes() const { return base_.n_nodes(); }
  /// Probability that base edge e is active in a draw; nullopt for custom.
  std::optional<double> edge_activation(std::size_t edge_index) const;

 private:
  LaplacianMatrix base_;
  Kind kind_;
};

/// Active edges of one draw, sorted. Consumes rng only for random kinds.
std::vector<Edge> sample_active_edges(const LinkFailureModel& model, RngStream& rng);
LaplacianMatrix sample_laplacian(const LinkFailureModel& model, RngStream& rng);

/// E[L(i)] in closed form (or the declared mean for custom models).
LaplacianMatrix mean_laplacian(const LinkFailureModel& model);

/// Orthogonal projection onto the consensus subspace {1_N (x) y}.
class ConsensusProjector {
 public:
  ConsensusProjector(std::size_t n_nodes, std::size_t param_dim);

  std::size_t n_nodes() const { return n_; }
  std::size_t param_dim() const { return m_; }

  /// Average block y_avg = (1/N) sum_n x_n.
  Eigen::VectorXd block_average(const Eigen::VectorXd& x) const;
  /// 1_N (x) y_avg
  Eigen::VectorXd project(const Eigen::VectorXd& x) const;
  /// (consensus part, disagreement part); they sum to x.
  std::pair<Eigen::VectorXd, Eigen::VectorXd> split(const Eigen::VectorXd& x) const;
  /// Norm of the disagreement part.
  double disagreement_norm(const Eigen::VectorXd& x) const;

 private:
  void check(const Eigen::VectorXd& x) const;
  std::size_t n_;
  std::size_t m_;
};

/// 1_N (x) y
Eigen::VectorXd stack_copies(const Eigen::VectorXd& y, std::size_t n_nodes);

}  // namespace ciest
