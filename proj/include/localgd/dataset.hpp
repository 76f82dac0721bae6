#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "localgd/types.hpp"

namespace localgd {

/// Certified max-margin solution of the combined dataset.
struct Margin {
  double gamma = 0.0;
  Vector w_star;
  /// Natural residual of the dual complementarity problem at the solution.
  double kkt_residual = 0.0;
  /// min_{m,i} <v, z_mi> for the unnormalized primal solution v (should be >= 1 - 1e-8).
  double min_constraint = 0.0;
};

/// M clients of folded points z_mi = y_mi x_mi. Client m is stored as a d x n_m
/// matrix whose columns are its samples, in sample order.
struct FederatedDataset {
  int d = 0;
  std::vector<Matrix> clients;
  std::optional<Margin> margin;

  int num_clients() const { return static_cast<int>(clients.size()); }
  int client_size(int m) const { return static_cast<int>(clients[static_cast<std::size_t>(m)].cols()); }
  const Matrix& client(int m) const { return clients[static_cast<std::size_t>(m)]; }

  std::size_t total_samples() const {
    std::size_t total = 0;
    for (const auto& c : clients) total += static_cast<std::size_t>(c.cols());
    return total;
  }

  /// Common per-client sample count, or nullopt when clients differ in size.
  std::optional<int> uniform_client_size() const {
    if (clients.empty()) return std::nullopt;
    const auto n = clients.front().cols();
    for (const auto& c : clients)
      if (c.cols() != n) return std::nullopt;
    return static_cast<int>(n);
  }

  bool single_sample_clients() const {
    const auto n = uniform_client_size();
    return n && *n == 1;
  }
};

}  // namespace localgd
