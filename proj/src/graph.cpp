#include "ciest/graph.hpp"

#include <algorithm>
#include <cmath>

#include "ciest/error.hpp"
#include "ciest/simd/kernels.hpp"

namespace ciest {

namespace {

std::string edge_str(const Edge& e) {
  return "(" + std::to_string(e.first) + "," + std::to_string(e.second) + ")";
}

}  // namespace

LaplacianMatrix LaplacianMatrix::from_edges(std::size_t n_nodes, std::vector<Edge> edges) {
  if (n_nodes == 0) throw InvalidArgument("graph needs at least one node");
  for (auto& e : edges) {
    if (e.first >= n_nodes || e.second >= n_nodes)
      throw InvalidArgument("edge " + edge_str(e) + " references a node outside [0, " +
                            std::to_string(n_nodes) + ")");
    if (e.first == e.second) throw InvalidArgument("edge " + edge_str(e) + " is a self-loop");
    if (e.first > e.second) std::swap(e.first, e.second);
  }
  std::sort(edges.begin(), edges.end());
  if (auto dup = std::adjacent_find(edges.begin(), edges.end()); dup != edges.end())
    throw InvalidArgument("edge " + edge_str(*dup) + " appears more than once");

  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n_nodes, n_nodes);
  for (const auto& [a, b] : edges) {
    L(a, b) = -1.0;
    L(b, a) = -1.0;
    L(a, a) += 1.0;
    L(b, b) += 1.0;
  }
  return LaplacianMatrix(std::move(L), std::move(edges), true);
}

LaplacianMatrix LaplacianMatrix::from_matrix(const Eigen::MatrixXd& entries) {
  const auto n = static_cast<std::size_t>(entries.rows());
  if (n == 0 || entries.cols() != entries.rows())
    throw InvalidArgument("Laplacian must be a non-empty square matrix");
  if (!entries.allFinite()) throw InvalidArgument("Laplacian has non-finite entries");
  const double scale = std::max(1.0, entries.cwiseAbs().maxCoeff());
  if ((entries - entries.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidArgument("Laplacian is not symmetric");
  Eigen::MatrixXd sym = 0.5 * (entries + entries.transpose());
  for (std::size_t r = 0; r < n; ++r) {
    if (std::abs(sym.row(r).sum()) > 1e-12 * scale)
      throw InvalidArgument("Laplacian row " + std::to_string(r) + " does not sum to zero");
  }
  std::vector<Edge> support;
  bool simple = true;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = r + 1; c < n; ++c) {
      const double v = sym(r, c);
      if (v > 0.0) throw InvalidArgument("Laplacian has a positive off-diagonal entry");
      if (v != 0.0) support.emplace_back(r, c);
      if (v != 0.0 && v != -1.0) simple = false;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues()(0) < -1e-10 * scale)
    throw InvalidArgument("Laplacian is not positive semidefinite");
  return LaplacianMatrix(std::move(sym), std::move(support), simple);
}

bool LaplacianMatrix::has_edge(std::size_t a, std::size_t b) const {
  if (a > b) std::swap(a, b);
  return std::binary_search(edges_.begin(), edges_.end(), Edge{a, b});
}

Eigen::VectorXd LaplacianMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(entries_, Eigen::EigenvaluesOnly);
  return eig.eigenvalues();
}

double algebraic_connectivity(const LaplacianMatrix& L) {
  if (L.n_nodes() < 2) return 0.0;
  const Eigen::VectorXd ev = L.eigenvalues();
  const double top = ev(ev.size() - 1);
  if (top <= 0.0 || ev(1) <= 1e-9 * top) return 0.0;
  return ev(1);
}

Topology parse_topology(const std::string& name) {
  if (name == "complete") return Topology::complete;
  if (name == "ring") return Topology::ring;
  if (name == "path") return Topology::path;
  if (name == "star") return Topology::star;
  throw InvalidArgument("unknown topology '" + name + "' (complete|ring|path|star)");
}

std::string topology_name(Topology t) {
  switch (t) {
    case Topology::complete: return "complete";
    case Topology::ring: return "ring";
    case Topology::path: return "path";
    case Topology::star: return "star";
  }
  return "?";
}

std::vector<Edge> topology_edges(Topology t, std::size_t n) {
  std::vector<Edge> edges;
  switch (t) {
    case Topology::complete:
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) edges.emplace_back(a, b);
      break;
    case Topology::ring:
      for (std::size_t a = 0; a + 1 < n; ++a) edges.emplace_back(a, a + 1);
      if (n > 2) edges.emplace_back(0, n - 1);
      break;
    case Topology::path:
      for (std::size_t a = 0; a + 1 < n; ++a) edges.emplace_back(a, a + 1);
      break;
    case Topology::star:
      for (std::size_t b = 1; b < n; ++b) edges.emplace_back(0, b);
      break;
  }
  return edges;
}

void apply_kron(const LaplacianMatrix& L, std::size_t m, std::span<const double> x,
                std::span<double> y) {
  const std::size_t n = L.n_nodes();
  if (x.size() != n * m || y.size() != n * m)
    throw InvalidArgument("stacked vector length does not match N*M");
  simd::active().kron_laplacian_apply(L.matrix().data(), n, m, x.data(), y.data());
}

Eigen::VectorXd apply_kron(const LaplacianMatrix& L, std::size_t m, const Eigen::VectorXd& x) {
  Eigen::VectorXd y(x.size());
  apply_kron(L, m, std::span<const double>(x.data(), x.size()), std::span<double>(y.data(), y.size()));
  return y;
}

LinkFailureModel::LinkFailureModel(LaplacianMatrix base, Kind kind)
    : base_(std::move(base)), kind_(std::move(kind)) {
  if (!base_.is_simple())
    throw InvalidArgument("link-failure base graph must be a simple unweighted graph");
  if (const auto* e = std::get_if<Erasure>(&kind_)) {
    if (!(e->p >= 0.0 && e->p <= 1.0))
      throw InvalidArgument("erasure probability must lie in [0, 1]");
  } else if (std::holds_alternative<Gossip>(kind_)) {
    if (base_.edges().empty()) throw InvalidArgument("gossip model needs at least one base edge");
  } else if (const auto* c = std::get_if<Custom>(&kind_)) {
    if (!c->sampler) throw InvalidArgument("custom link model needs a sampler");
  }
}

std::optional<double> LinkFailureModel::edge_activation(std::size_t) const {
  return std::visit(
      [&](const auto& k) -> std::optional<double> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, Fixed>) return 1.0;
        if constexpr (std::is_same_v<K, Erasure>) return 1.0 - k.p;
        if constexpr (std::is_same_v<K, Gossip>) return 1.0 / static_cast<double>(base_.edges().size());
        return std::nullopt;
      },
      kind_);
}

std::vector<Edge> sample_active_edges(const LinkFailureModel& model, RngStream& rng) {
  const auto& base = model.base().edges();
  return std::visit(
      [&](const auto& k) -> std::vector<Edge> {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, LinkFailureModel::Fixed>) {
          return base;
        } else if constexpr (std::is_same_v<K, LinkFailureModel::Erasure>) {
          std::vector<Edge> out;
          out.reserve(base.size());
          // One draw per base edge in sorted order, also when p is 0 or 1.
          for (const auto& e : base)
            if (uniform01(rng) >= k.p) out.push_back(e);
          return out;
        } else if constexpr (std::is_same_v<K, LinkFailureModel::Gossip>) {
          const auto idx = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(base.size()));
          return {base[std::min(idx, base.size() - 1)]};
        } else {
          std::vector<Edge> out = k.sampler(rng);
          for (auto& e : out) {
            if (e.first > e.second) std::swap(e.first, e.second);
            if (!model.base().has_edge(e.first, e.second))
              throw InvalidArgument("custom link sampler returned " + edge_str(e) +
                                    ", which is not a base edge");
          }
          std::sort(out.begin(), out.end());
          if (std::adjacent_find(out.begin(), out.end()) != out.end())
            throw InvalidArgument("custom link sampler returned a duplicate edge");
          return out;
        }
      },
      model.kind());
}

LaplacianMatrix sample_laplacian(const LinkFailureModel& model, RngStream& rng) {
  return LaplacianMatrix::from_edges(model.n_nodes(), sample_active_edges(model, rng));
}

LaplacianMatrix mean_laplacian(const LinkFailureModel& model) {
  const auto& base = model.base().matrix();
  return std::visit(
      [&](const auto& k) -> LaplacianMatrix {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, LinkFailureModel::Fixed>) {
          return model.base();
        } else if constexpr (std::is_same_v<K, LinkFailureModel::Erasure>) {
          return LaplacianMatrix::from_matrix((1.0 - k.p) * base);
        } else if constexpr (std::is_same_v<K, LinkFailureModel::Gossip>) {
          return LaplacianMatrix::from_matrix(base / static_cast<double>(model.base().edges().size()));
        } else {
          if (!k.declared_mean)
            throw InvalidArgument(
                "custom link model has no declared mean Laplacian; estimate it empirically by "
                "averaging sample_laplacian draws and declare it");
          return LaplacianMatrix::from_matrix(*k.declared_mean);
        }
      },
      model.kind());
}

ConsensusProjector::ConsensusProjector(std::size_t n_nodes, std::size_t param_dim)
    : n_(n_nodes), m_(param_dim) {
  if (n_ == 0 || m_ == 0) throw InvalidArgument("projector dimensions must be positive");
}

void ConsensusProjector::check(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != n_ * m_)
    throw InvalidArgument("stacked vector has length " + std::to_string(x.size()) + ", expected " +
                          std::to_string(n_ * m_));
}

Eigen::VectorXd ConsensusProjector::block_average(const Eigen::VectorXd& x) const {
  check(x);
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(m_);
  for (std::size_t n = 0; n < n_; ++n) avg += x.segment(n * m_, m_);
  return avg / static_cast<double>(n_);
}

Eigen::VectorXd ConsensusProjector::project(const Eigen::VectorXd& x) const {
  return stack_copies(block_average(x), n_);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> ConsensusProjector::split(const Eigen::VectorXd& x) const {
  Eigen::VectorXd c = project(x);
  Eigen::VectorXd perp = x - c;
  return {std::move(c), std::move(perp)};
}

double ConsensusProjector::disagreement_norm(const Eigen::VectorXd& x) const {
  return split(x).second.norm();
}

Eigen::VectorXd stack_copies(const Eigen::VectorXd& y, std::size_t n_nodes) {
  return y.replicate(static_cast<Eigen::Index>(n_nodes), 1);
}

}  // namespace ciest
