#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "ciest/graph.hpp"
#include "ciest/rng.hpp"

namespace ciest {

/// Uniform quantizer on the lattice {k * step : k integer}, unbounded range.
struct QuantizerSpec {
  bool enabled = false;  // false: ideal real-valued exchange
  double step = 0.0;
  /// Add uniform dither before quantizing. Turning this off reproduces the
  /// input-correlated error that makes the recursions drift; debugging only.
  bool dithered = true;

  void validate() const;
};

/// |k| above this aborts; saturating would silently bias the statistics.
inline constexpr double kLatticeIndexGuard = 0x1p60;

/// Index k with (k - 1/2) step <= y < (k + 1/2) step.
std::int64_t lattice_index(double y, double step);

/// Componentwise q(y). Throws on non-finite input or index overflow.
std::vector<double> quantize(std::span<const double> y, const QuantizerSpec& spec);

struct DitheredSample {
  std::vector<double> quantized;  // q(y + nu)
  std::vector<double> error;      // q(y + nu) - (y + nu)
  std::vector<double> dither;     // nu
};

/// q(y + nu) with caller-supplied dither (deterministic test entry point).
DitheredSample dithered_quantize(std::span<const double> y, const QuantizerSpec& spec,
                                 std::span<const double> dither);
/// q(y + nu) with nu drawn uniform on [-step/2, step/2), one per component.
DitheredSample dithered_quantize(std::span<const double> y, const QuantizerSpec& spec,
                                 RngStream& rng);

/// Dither and error carried on ordered link receiver <- sender in one round.
struct LinkExchange {
  std::size_t receiver;
  std::size_t sender;
  Eigen::VectorXd dither;
  Eigen::VectorXd error;
};

/// Stacked quantization-noise terms: upsilon_n = -sum nu_nl, psi_n = -sum eps_nl.
struct QuantNoiseAggregate {
  Eigen::VectorXd upsilon;
  Eigen::VectorXd psi;
};

/// Aggregates per-link dither/error. `links` must contain both orientations
/// of every edge of `active` and nothing else.
QuantNoiseAggregate aggregate_quant_noise(const LaplacianMatrix& active, std::size_t param_dim,
                                          const std::vector<LinkExchange>& links);

/// N(N-1) M step^2 / 3, the bound on E||upsilon + psi||^2.
double quant_noise_second_moment_bound(std::size_t n_nodes, std::size_t param_dim, double step);

/// Per-round neighbor exchange for the consensus term.
///
/// For node n, returns c_n = sum over active neighbors l of (v_n - r_nl) where
/// r_nl = q(v_l + nu_nl) is what n receives from l (or v_l exactly when
/// quantization is off, in which case c = (L (x) I) v). Each ordered link
/// draws its dither from its own stream keyed by (seed, n, l), and links are
/// visited in lexicographic (receiver, sender) order.
class NeighborExchange {
 public:
  NeighborExchange(const LaplacianMatrix& base, std::size_t param_dim, QuantizerSpec spec,
                   std::uint64_t seed);

  const QuantizerSpec& spec() const { return spec_; }

  /// `active` must be a subgraph of the base (weighted Laplacians are only
  /// accepted with quantization off). `audit`, when given, receives one entry
  /// per ordered link.
  void consensus_term(const LaplacianMatrix& active, std::span<const double> v,
                      std::span<double> c, std::vector<LinkExchange>* audit = nullptr);

 private:
  std::size_t stream_index(std::size_t receiver, std::size_t sender) const;

  std::vector<Edge> base_edges_;
  std::size_t n_;
  std::size_t m_;
  QuantizerSpec spec_;
  std::vector<RngStream> streams_;  // 2 per base edge: (a<-b), (b<-a)
  std::vector<std::pair<std::size_t, std::size_t>> links_;
  std::vector<double> sent_, dither_, received_;
};

}  // namespace ciest
