#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library's numerical code paths.

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

/// Dense L (x) I_m.
inline Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& L, Eigen::Index m) {
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(L.rows() * m, L.cols() * m);
  for (Eigen::Index r = 0; r < L.rows(); ++r)
    for (Eigen::Index c = 0; c < L.cols(); ++c)
      for (Eigen::Index k = 0; k < m; ++k) K(r * m + k, c * m + k) = L(r, c);
  return K;
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, ascending.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd A) {
  const Eigen::Index n = A.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
    if (off < 1e-30) break;
    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (std::abs(A(p, q)) < 1e-300) continue;
        const double theta = (A(q, q) - A(p, p)) / (2.0 * A(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = A(k, p), akq = A(k, q);
          A(k, p) = c * akp - s * akq;
          A(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = A(p, k), aqk = A(q, k);
          A(p, k) = c * apk - s * aqk;
          A(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) ev[static_cast<std::size_t>(k)] = A(k, k);
  std::sort(ev.begin(), ev.end());
  return ev;
}

/// sum_{k=j}^{i-1} prod_{l=k+1}^{i-1} (1 - r1(l)) r2(k), by explicit products.
inline long double nested_tail_sum(const std::function<double(std::uint64_t)>& r1,
                                   const std::function<double(std::uint64_t)>& r2, std::uint64_t j,
                                   std::uint64_t i) {
  long double total = 0.0L;
  for (std::uint64_t k = j; k < i; ++k) {
    long double prod = 1.0L;
    for (std::uint64_t l = k + 1; l < i; ++l) prod *= 1.0L - static_cast<long double>(r1(l));
    total += prod * static_cast<long double>(r2(k));
  }
  return total;
}

namespace detail {

// Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
inline constexpr std::array<double, 8> kXk = {0.991455371120812639, 0.949107912342758525, 0.864864423359769073,
                                              0.741531185599394440, 0.586087235467691130, 0.405845151377397167,
                                              0.207784955007898468, 0.000000000000000000};
inline constexpr std::array<double, 8> kWk = {0.022935322010529225, 0.063092092629978553, 0.104790010322250184,
                                              0.140653259715525919, 0.169004726639267903, 0.190350578064785410,
                                              0.204432940075298892, 0.209482141084727828};
inline constexpr std::array<double, 4> kWg = {0.129484966168869693, 0.279705391489276668, 0.381830050505118945,
                                              0.417959183673469388};

template <class F>
Eigen::MatrixXd gk15(const F& f, double lo, double hi, Eigen::MatrixXd& gauss) {
  const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
  Eigen::MatrixXd fc = f(c);
  Eigen::MatrixXd kron = kWk[7] * fc;
  gauss = kWg[3] * fc;
  for (int k = 0; k < 7; ++k) {
    const Eigen::MatrixXd s = f(c - h * kXk[k]) + f(c + h * kXk[k]);
    kron += kWk[k] * s;
    if (k % 2 == 1) gauss += kWg[k / 2] * s;
  }
  gauss *= h;
  return kron * h;
}

template <class F>
Eigen::MatrixXd adaptive(const F& f, double lo, double hi, double tol, int depth = 0) {
  Eigen::MatrixXd gauss;
  Eigen::MatrixXd kron = gk15(f, lo, hi, gauss);
  if ((kron - gauss).norm() <= tol || depth > 30) return kron;
  const double mid = 0.5 * (lo + hi);
  return adaptive(f, lo, mid, 0.5 * tol, depth + 1) + adaptive(f, mid, hi, 0.5 * tol, depth + 1);
}

}  // namespace detail

/// a^2 int_0^inf e^{Sigma v} S0 e^{Sigma^T v} dv by adaptive Gauss-Kronrod on
/// successive panels, stopping once the integrand norm falls below 1e-14.
inline Eigen::MatrixXd lyapunov_quadrature(const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& s0, double a,
                                           double rel_tol = 1e-11) {
  auto f = [&](double v) -> Eigen::MatrixXd {
    const Eigen::MatrixXd E = (sigma * v).exp();
    return E * s0 * E.transpose();
  };
  const double scale = std::max(1.0, s0.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (sigma + sigma.transpose()), Eigen::EigenvaluesOnly);
  const double width = 0.5 / std::max(1e-3, std::abs(eig.eigenvalues().maxCoeff()));
  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(sigma.rows(), sigma.cols());
  double lo = 0.0;
  for (int panel = 0; panel < 100000; ++panel) {
    const double hi = lo + width;
    total += detail::adaptive(f, lo, hi, rel_tol * scale * width);
    lo = hi;
    if (f(lo).norm() < 1e-14) break;
  }
  return a * a * total;
}

/// Kolmogorov-Smirnov statistic of a sample against Uniform[lo, hi).
inline double ks_uniform(std::vector<double> x, double lo, double hi) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double F = std::clamp((x[k] - lo) / (hi - lo), 0.0, 1.0);
    d = std::max({d, (static_cast<double>(k) + 1.0) / n - F, F - static_cast<double>(k) / n});
  }
  return d;
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

}  // namespace oracle
