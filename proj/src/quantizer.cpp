#include "ciest/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "ciest/error.hpp"
#include "ciest/simd/kernels.hpp"

namespace ciest {

namespace {

void check_batch(double max_index) {
  if (std::isnan(max_index)) throw InvalidArgument("quantizer input is not finite");
  if (max_index > kLatticeIndexGuard)
    throw QuantizerOverflow("quantizer lattice index exceeds 2^60");
}

void require_enabled(const QuantizerSpec& spec) {
  spec.validate();
  if (!spec.enabled) throw InvalidArgument("quantizer is disabled");
}

}  // namespace

void QuantizerSpec::validate() const {
  if (enabled && !(step > 0.0 && std::isfinite(step)))
    throw InvalidArgument("quantizer step must be a positive finite number");
}

std::int64_t lattice_index(double y, double step) {
  double q = 0.0;
  check_batch(simd::scalar::table.quantize_lattice(&y, nullptr, step, &q, 1));
  return static_cast<std::int64_t>(std::llround(q / step));
}

std::vector<double> quantize(std::span<const double> y, const QuantizerSpec& spec) {
  require_enabled(spec);
  std::vector<double> out(y.size());
  check_batch(simd::active().quantize_lattice(y.data(), nullptr, spec.step, out.data(), y.size()));
  return out;
}

DitheredSample dithered_quantize(std::span<const double> y, const QuantizerSpec& spec,
                                 std::span<const double> dither) {
  require_enabled(spec);
  if (dither.size() != y.size()) throw InvalidArgument("dither length must match input length");
  DitheredSample s;
  s.dither.assign(dither.begin(), dither.end());
  s.quantized.resize(y.size());
  check_batch(simd::active().quantize_lattice(y.data(), dither.data(), spec.step,
                                              s.quantized.data(), y.size()));
  s.error.resize(y.size());
  for (std::size_t j = 0; j < y.size(); ++j) s.error[j] = s.quantized[j] - (y[j] + dither[j]);
  return s;
}

DitheredSample dithered_quantize(std::span<const double> y, const QuantizerSpec& spec,
                                 RngStream& rng) {
  require_enabled(spec);
  std::vector<double> nu(y.size());
  for (auto& v : nu) v = uniform_symmetric(rng, 0.5 * spec.step);
  return dithered_quantize(y, spec, nu);
}

QuantNoiseAggregate aggregate_quant_noise(const LaplacianMatrix& active, std::size_t param_dim,
                                          const std::vector<LinkExchange>& links) {
  const std::size_t n = active.n_nodes();
  std::vector<std::pair<std::size_t, std::size_t>> seen;
  seen.reserve(links.size());
  QuantNoiseAggregate agg{Eigen::VectorXd::Zero(n * param_dim), Eigen::VectorXd::Zero(n * param_dim)};
  for (const auto& link : links) {
    if (link.receiver >= n || link.sender >= n || !active.has_edge(link.receiver, link.sender))
      throw InvalidArgument("link " + std::to_string(link.receiver) + "<-" +
                            std::to_string(link.sender) + " is not an edge of the active graph");
    if (static_cast<std::size_t>(link.dither.size()) != param_dim ||
        static_cast<std::size_t>(link.error.size()) != param_dim)
      throw InvalidArgument("link dither/error length must equal the parameter dimension");
    seen.emplace_back(link.receiver, link.sender);
    agg.upsilon.segment(link.receiver * param_dim, param_dim) -= link.dither;
    agg.psi.segment(link.receiver * param_dim, param_dim) -= link.error;
  }
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
    throw InvalidArgument("link set lists an ordered link twice");
  if (seen.size() != 2 * active.edges().size())
    throw InvalidArgument("link set does not cover both directions of every active edge");
  return agg;
}

double quant_noise_second_moment_bound(std::size_t n_nodes, std::size_t param_dim, double step) {
  const auto n = static_cast<double>(n_nodes);
  return n * (n - 1.0) * static_cast<double>(param_dim) * step * step / 3.0;
}

NeighborExchange::NeighborExchange(const LaplacianMatrix& base, std::size_t param_dim,
                                   QuantizerSpec spec, std::uint64_t seed)
    : base_edges_(base.edges()), n_(base.n_nodes()), m_(param_dim), spec_(spec) {
  spec_.validate();
  if (spec_.enabled) {
    streams_.reserve(2 * base_edges_.size());
    for (const auto& [a, b] : base_edges_) {
      streams_.push_back(make_stream(seed, "dither", {a, b}));
      streams_.push_back(make_stream(seed, "dither", {b, a}));
    }
  }
}

std::size_t NeighborExchange::stream_index(std::size_t receiver, std::size_t sender) const {
  const Edge key{std::min(receiver, sender), std::max(receiver, sender)};
  auto it = std::lower_bound(base_edges_.begin(), base_edges_.end(), key);
  if (it == base_edges_.end() || *it != key)
    throw InvalidArgument("active link " + std::to_string(receiver) + "<-" +
                          std::to_string(sender) + " is not in the base graph");
  const auto e = static_cast<std::size_t>(it - base_edges_.begin());
  return 2 * e + (receiver == key.first ? 0 : 1);
}

void NeighborExchange::consensus_term(const LaplacianMatrix& active, std::span<const double> v,
                                      std::span<double> c, std::vector<LinkExchange>* audit) {
  if (active.n_nodes() != n_ || v.size() != n_ * m_ || c.size() != n_ * m_)
    throw InvalidArgument("exchange dimensions do not match the network");
  if (audit) audit->clear();

  if (!spec_.enabled) {
    simd::active().kron_laplacian_apply(active.matrix().data(), n_, m_, v.data(), c.data());
    if (audit) {
      for (const auto& [a, b] : active.edges()) {
        audit->push_back({a, b, Eigen::VectorXd::Zero(m_), Eigen::VectorXd::Zero(m_)});
        audit->push_back({b, a, Eigen::VectorXd::Zero(m_), Eigen::VectorXd::Zero(m_)});
      }
      std::sort(audit->begin(), audit->end(), [](const auto& x, const auto& y) {
        return std::tie(x.receiver, x.sender) < std::tie(y.receiver, y.sender);
      });
    }
    return;
  }
  if (!active.is_simple())
    throw InvalidArgument("quantized exchange needs an unweighted sampled graph");

  links_.clear();
  for (const auto& [a, b] : active.edges()) {
    links_.emplace_back(a, b);
    links_.emplace_back(b, a);
  }
  std::sort(links_.begin(), links_.end());

  const std::size_t total = links_.size() * m_;
  sent_.resize(total);
  dither_.resize(total);
  received_.resize(total);
  for (std::size_t k = 0; k < links_.size(); ++k) {
    const auto [receiver, sender] = links_[k];
    std::copy_n(v.data() + sender * m_, m_, sent_.data() + k * m_);
    auto& rng = streams_[stream_index(receiver, sender)];
    for (std::size_t j = 0; j < m_; ++j)
      dither_[k * m_ + j] = spec_.dithered ? uniform_symmetric(rng, 0.5 * spec_.step) : 0.0;
  }
  check_batch(simd::active().quantize_lattice(sent_.data(), spec_.dithered ? dither_.data() : nullptr,
                                              spec_.step, received_.data(), total));

  std::fill(c.begin(), c.end(), 0.0);
  for (std::size_t k = 0; k < links_.size(); ++k) {
    const std::size_t receiver = links_[k].first;
    for (std::size_t j = 0; j < m_; ++j)
      c[receiver * m_ + j] += v[receiver * m_ + j] - received_[k * m_ + j];
  }

  if (audit) {
    audit->reserve(links_.size());
    for (std::size_t k = 0; k < links_.size(); ++k) {
      LinkExchange link{links_[k].first, links_[k].second, Eigen::VectorXd(m_), Eigen::VectorXd(m_)};
      for (std::size_t j = 0; j < m_; ++j) {
        const std::size_t idx = k * m_ + j;
        link.dither(j) = dither_[idx];
        link.error(j) = received_[idx] - (sent_[idx] + dither_[idx]);
      }
      audit->push_back(std::move(link));
    }
  }
}

}  // namespace ciest
