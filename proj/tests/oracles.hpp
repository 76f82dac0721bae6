#pragma once

// Independent reference computations for the test suites. Nothing here calls
// into the library except to read dataset shapes.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "localgd/dataset.hpp"
#include "localgd/types.hpp"

namespace oracle {

using localgd::FederatedDataset;
using localgd::Matrix;
using localgd::Vector;

inline long double ell(long double z) { return std::log1p(std::exp(-z)); }
inline long double ell_prime(long double z) { return -1.0L / (std::exp(z) + 1.0L); }
inline long double ell_double_prime(long double z) {
  const long double e = std::exp(z);
  return e / ((e + 1.0L) * (e + 1.0L));
}

/// Root of w + ln w = u by plain bisection in long double.
inline long double w_of_exp(long double u) {
  long double lo = 1e-300L, hi = std::max(1.0L, u) + 1.0L;
  for (int i = 0; i < 400; ++i) {
    const long double mid = 0.5L * (lo + hi);
    if (mid + std::log(mid) < u) lo = mid; else hi = mid;
  }
  return 0.5L * (lo + hi);
}

/// log Phi(b, x) through the defining Lambert W expression.
inline long double log_phi(long double b, long double x) {
  const long double u = b + std::exp(x) + x;
  return u - w_of_exp(u) - x;
}

inline double objective(const FederatedDataset& ds, const Vector& w) {
  long double total = 0.0L;
  for (const auto& z : ds.clients) {
    long double s = 0.0L;
    for (Eigen::Index i = 0; i < z.cols(); ++i) s += ell(static_cast<long double>(z.col(i).dot(w)));
    total += s / z.cols();
  }
  return static_cast<double>(total / ds.clients.size());
}

inline Vector fd_gradient(const FederatedDataset& ds, const Vector& w, double h) {
  Vector g(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    Vector p = w, m = w;
    p[i] += h;
    m[i] -= h;
    g[i] = (oracle::objective(ds, p) - oracle::objective(ds, m)) / (2.0 * h);
  }
  return g;
}

/// Dense Hessian of F (or of client m when m >= 0).
inline Matrix dense_hessian(const FederatedDataset& ds, const Vector& w, int only = -1) {
  Matrix H = Matrix::Zero(ds.d, ds.d);
  int used = 0;
  for (int m = 0; m < ds.num_clients(); ++m) {
    if (only >= 0 && m != only) continue;
    const Matrix& z = ds.client(m);
    Matrix Hm = Matrix::Zero(ds.d, ds.d);
    for (Eigen::Index i = 0; i < z.cols(); ++i)
      Hm += static_cast<double>(ell_double_prime(z.col(i).dot(w))) * z.col(i) * z.col(i).transpose();
    H += Hm / static_cast<double>(z.cols());
    ++used;
  }
  return H / used;
}

/// Largest eigenvalue of a symmetric 2x2 matrix.
inline double eig2_max(double a, double b, double d) {
  return 0.5 * (a + d) + std::sqrt(0.25 * (a - d) * (a - d) + b * b);
}

/// max over unit w of min <w, z> by scanning angles, d = 2 only.
inline double grid_margin(const FederatedDataset& ds, double step) {
  double best = -1e300;
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (double t = 0.0; t < two_pi; t += step) {
    const double c = std::cos(t), s = std::sin(t);
    double worst = 1e300;
    for (const auto& z : ds.clients)
      for (Eigen::Index i = 0; i < z.cols(); ++i) worst = std::min(worst, c * z(0, i) + s * z(1, i));
    best = std::max(best, worst);
  }
  return best;
}

/// Header fields and the first image of an IDX3 file, read byte by byte.
struct IdxHead {
  std::uint32_t magic = 0, count = 0, rows = 0, cols = 0;
  std::vector<unsigned char> first;
};

inline IdxHead read_idx3_head(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  auto be = [&] {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
  };
  IdxHead h;
  h.magic = be();
  h.count = be();
  h.rows = be();
  h.cols = be();
  h.first.resize(h.rows * h.cols);
  in.read(reinterpret_cast<char*>(h.first.data()), static_cast<std::streamsize>(h.first.size()));
  return h;
}

/// Random folded dataset with max norm exactly 1.
inline FederatedDataset random_dataset(std::mt19937_64& gen, int d, int M, int n) {
  std::normal_distribution<double> normal;
  FederatedDataset ds;
  ds.d = d;
  double max_norm = 0.0;
  for (int m = 0; m < M; ++m) {
    Matrix z(d, n);
    for (Eigen::Index j = 0; j < z.cols(); ++j)
      for (Eigen::Index i = 0; i < z.rows(); ++i) z(i, j) = normal(gen);
    max_norm = std::max(max_norm, z.colwise().norm().maxCoeff());
    ds.clients.push_back(z);
  }
  for (auto& z : ds.clients) z /= max_norm;
  return ds;
}

/// Random separable dataset: points pushed to have <u, z> >= margin for a random unit u.
inline FederatedDataset random_separable(std::mt19937_64& gen, int d, int M, int n, double margin) {
  std::normal_distribution<double> normal;
  Vector u(d);
  for (int i = 0; i < d; ++i) u[i] = normal(gen);
  u.normalize();
  FederatedDataset ds;
  ds.d = d;
  double max_norm = 0.0;
  for (int m = 0; m < M; ++m) {
    Matrix z(d, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      Vector p(d);
      for (int i = 0; i < d; ++i) p[i] = normal(gen);
      p -= p.dot(u) * u;
      p += (margin + std::abs(normal(gen))) * u;
      z.col(j) = p;
    }
    max_norm = std::max(max_norm, z.colwise().norm().maxCoeff());
    ds.clients.push_back(z);
  }
  for (auto& z : ds.clients) z /= max_norm;
  return ds;
}

}  // namespace oracle
