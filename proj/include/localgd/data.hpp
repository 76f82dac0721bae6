#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "localgd/dataset.hpp"
#include "localgd/types.hpp"

namespace localgd {

struct RawSample {
  Vector features;
  int label = 1;  ///< -1 or +1
};

struct ClientSample {
  RawSample sample;
  int client = 0;
};

/// Folds labels into the points (z = y x) and divides everything by the largest
/// norm. Client ids must cover 0..M-1 with no empty client.
FederatedDataset prepare(const std::vector<ClientSample>& raw);

/// Same normalization applied to an existing dataset (already folded). A dataset
/// whose max norm is already 1 to within a few ulps is returned unchanged.
FederatedDataset prepare(FederatedDataset dataset);

struct SyntheticSpec {
  double delta = 0.1;
  double g = 5.0;
};

/// Two clients with one point each in the plane: x_1 = w1 and x_2 = w2 / g with
/// w1 = (1, delta) / sqrt(1 + delta^2), w2 = (-1, delta) / sqrt(1 + delta^2).
FederatedDataset gen_synthetic(const SyntheticSpec& spec);

/// One IDX image with its original digit label.
struct DigitImage {
  Vector pixels;  ///< row-major, scaled to [0, 1]
  int digit = 0;
};

std::vector<DigitImage> load_mnist_idx(const std::string& images_path,
                                       const std::string& labels_path);

struct PartitionSpec {
  int n_total = 1000;
  int M = 5;
  int n_per_client = 200;
  double similarity_s = 0.05;
  std::uint64_t seed = 1;
};

/// Draws n_total images, gives each client round(s n) uniformly drawn images and a
/// contiguous block of the digit-sorted remainder (client 0 gets the lowest
/// digits), then labels even digits +1 and odd digits -1 and prepares the result.
FederatedDataset partition_heterogeneous(const std::vector<DigitImage>& raw,
                                         const PartitionSpec& spec);

struct MarginOptions {
  double tolerance = 1e-8;
  long long max_sweeps = 2000000;
};

/// Hard-margin solution min ||v||^2 s.t. <v, z> >= 1 by dual coordinate ascent,
/// certified by constraint satisfaction and the KKT residual. Throws
/// SeparabilityError when no certified solution is found.
Margin solve_margin(const FederatedDataset& dataset, const MarginOptions& options = {});

/// solve_margin and cache the result on the dataset.
Margin compute_margin(FederatedDataset& dataset, const MarginOptions& options = {});

/// FNV-1a 64 over d, M, client sizes and the IEEE-754 bit patterns of all points,
/// rendered as 16 hex digits. The cached margin is not part of the hash.
std::string dataset_fingerprint(const FederatedDataset& dataset);

}  // namespace localgd
