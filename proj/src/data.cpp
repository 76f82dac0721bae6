#include "localgd/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include "localgd/errors.hpp"
#include "localgd/rng.hpp"

namespace localgd {

namespace {

constexpr double kUnitSlack = 4.0 * std::numeric_limits<double>::epsilon();

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::string& path) {
  if (bytes.size() < offset + 4)
    throw FormatError(path + ": truncated header at offset " + std::to_string(offset));
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void fnv_mix(std::uint64_t& hash, std::uint64_t word) {
  for (int byte = 0; byte < 8; ++byte) {
    hash ^= (word >> (8 * byte)) & 0xffu;
    hash *= 1099511628211ull;
  }
}

}  // namespace

FederatedDataset prepare(const std::vector<ClientSample>& raw) {
  if (raw.empty()) throw InputError("prepare: no samples");
  const Eigen::Index d = raw.front().sample.features.size();
  if (d == 0) throw InputError("prepare: zero-dimensional samples");
  int clients = 0;
  for (const auto& item : raw) {
    if (item.client < 0) throw InputError("prepare: negative client id");
    if (item.sample.features.size() != d) throw InputError("prepare: inconsistent dimension");
    if (item.sample.label != 1 && item.sample.label != -1)
      throw InputError("prepare: labels must be -1 or +1");
    if (!item.sample.features.allFinite()) throw InputError("prepare: non-finite feature");
    clients = std::max(clients, item.client + 1);
  }
  std::vector<int> counts(static_cast<std::size_t>(clients), 0);
  for (const auto& item : raw) ++counts[static_cast<std::size_t>(item.client)];
  for (int m = 0; m < clients; ++m)
    if (counts[static_cast<std::size_t>(m)] == 0)
      throw InputError("prepare: client " + std::to_string(m) + " is empty");

  FederatedDataset out;
  out.d = static_cast<int>(d);
  for (int m = 0; m < clients; ++m) out.clients.emplace_back(d, counts[static_cast<std::size_t>(m)]);
  std::vector<int> filled(static_cast<std::size_t>(clients), 0);
  for (const auto& item : raw) {
    auto& col = filled[static_cast<std::size_t>(item.client)];
    out.clients[static_cast<std::size_t>(item.client)].col(col++) =
        static_cast<double>(item.sample.label) * item.sample.features;
  }
  return prepare(std::move(out));
}

FederatedDataset prepare(FederatedDataset dataset) {
  if (dataset.clients.empty()) throw InputError("prepare: no clients");
  double max_norm = 0.0;
  for (int m = 0; m < dataset.num_clients(); ++m) {
    const Matrix& z = dataset.client(m);
    if (z.cols() == 0) throw InputError("prepare: client " + std::to_string(m) + " is empty");
    if (z.rows() != dataset.d) throw InputError("prepare: inconsistent dimension");
    max_norm = std::max(max_norm, z.colwise().norm().maxCoeff());
  }
  if (!(max_norm > 0.0) || !std::isfinite(max_norm))
    throw InputError("prepare: all points are zero or non-finite");
  if (std::abs(max_norm - 1.0) <= kUnitSlack) return dataset;
  for (auto& z : dataset.clients) z /= max_norm;
  dataset.margin.reset();
  return dataset;
}

FederatedDataset gen_synthetic(const SyntheticSpec& spec) {
  if (!(spec.delta > 0.0) || !std::isfinite(spec.delta)) throw InputError("synthetic: delta must be > 0");
  if (!(spec.g >= 1.0) || !std::isfinite(spec.g)) throw InputError("synthetic: g must be >= 1");
  const double s = std::sqrt(1.0 + spec.delta * spec.delta);
  Vector w1(2), w2(2);
  w1 << 1.0 / s, spec.delta / s;
  w2 << -1.0 / s, spec.delta / s;
  std::vector<ClientSample> raw(2);
  raw[0] = {{w1, 1}, 0};
  raw[1] = {{w2 / spec.g, 1}, 1};
  return prepare(raw);
}

std::vector<DigitImage> load_mnist_idx(const std::string& images_path,
                                       const std::string& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);

  if (read_be32(images, 0, images_path) != 2051u)
    throw FormatError(images_path + ": bad magic at offset 0 (expected 2051)");
  if (read_be32(labels, 0, labels_path) != 2049u)
    throw FormatError(labels_path + ": bad magic at offset 0 (expected 2049)");
  const std::size_t count = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  const std::size_t label_count = read_be32(labels, 4, labels_path);
  if (label_count != count)
    throw FormatError(labels_path + ": count at offset 4 is " + std::to_string(label_count) +
                      ", image file has " + std::to_string(count));
  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + count * pixels)
    throw FormatError(images_path + ": truncated at offset " + std::to_string(images.size()) +
                      ", expected " + std::to_string(16 + count * pixels) + " bytes");
  if (labels.size() < 8 + count)
    throw FormatError(labels_path + ": truncated at offset " + std::to_string(labels.size()) +
                      ", expected " + std::to_string(8 + count) + " bytes");

  std::vector<DigitImage> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int digit = labels[8 + i];
    if (digit > 9)
      throw FormatError(labels_path + ": label " + std::to_string(digit) + " at offset " +
                        std::to_string(8 + i));
    out[i].digit = digit;
    out[i].pixels.resize(static_cast<Eigen::Index>(pixels));
    const unsigned char* src = images.data() + 16 + i * pixels;
    for (std::size_t p = 0; p < pixels; ++p)
      out[i].pixels[static_cast<Eigen::Index>(p)] = static_cast<double>(src[p]) / 255.0;
  }
  return out;
}

FederatedDataset partition_heterogeneous(const std::vector<DigitImage>& raw,
                                         const PartitionSpec& spec) {
  if (spec.M <= 0 || spec.n_per_client <= 0 || spec.n_total <= 0)
    throw InputError("partition: sizes must be positive");
  if (static_cast<long long>(spec.M) * spec.n_per_client != spec.n_total)
    throw InputError("partition: M * n_per_client must equal n_total");
  if (!(spec.similarity_s >= 0.0 && spec.similarity_s <= 1.0))
    throw InputError("partition: s must lie in [0, 1]");
  if (raw.size() < static_cast<std::size_t>(spec.n_total))
    throw InputError("partition: " + std::to_string(raw.size()) + " samples available, " +
                     std::to_string(spec.n_total) + " requested");

  Rng rng(spec.seed);
  std::vector<std::size_t> order(raw.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto total = static_cast<std::size_t>(spec.n_total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t j = i + rng.index(order.size() - i);
    std::swap(order[i], order[j]);
  }
  order.resize(total);

  const auto n = static_cast<std::size_t>(spec.n_per_client);
  const auto uniform_each = static_cast<std::size_t>(std::llround(spec.similarity_s * static_cast<double>(n)));
  const auto sorted_each = n - uniform_each;
  const auto clients = static_cast<std::size_t>(spec.M);
  const auto uniform_begin = order.begin();
  const auto sorted_begin = order.begin() + static_cast<std::ptrdiff_t>(clients * uniform_each);
  std::stable_sort(sorted_begin, order.end(),
                   [&](std::size_t a, std::size_t b) { return raw[a].digit < raw[b].digit; });

  std::vector<ClientSample> samples;
  samples.reserve(total);
  auto push = [&](std::size_t idx, int m) {
    const DigitImage& image = raw[idx];
    samples.push_back({{image.pixels, image.digit % 2 == 0 ? 1 : -1}, m});
  };
  for (std::size_t m = 0; m < clients; ++m) {
    for (std::size_t k = 0; k < sorted_each; ++k)
      push(*(sorted_begin + static_cast<std::ptrdiff_t>(m * sorted_each + k)), static_cast<int>(m));
    for (std::size_t k = 0; k < uniform_each; ++k)
      push(*(uniform_begin + static_cast<std::ptrdiff_t>(m * uniform_each + k)), static_cast<int>(m));
  }
  return prepare(samples);
}

Margin solve_margin(const FederatedDataset& dataset, const MarginOptions& options) {
  const auto total = static_cast<Eigen::Index>(dataset.total_samples());
  if (total == 0) throw InputError("compute_margin: empty dataset");
  Matrix z(dataset.d, total);
  Eigen::Index offset = 0;
  for (const auto& c : dataset.clients) {
    z.middleCols(offset, c.cols()) = c;
    offset += c.cols();
  }
  const Vector sq = z.colwise().squaredNorm().transpose();
  if ((sq.array() <= 0.0).any()) throw SeparabilityError("compute_margin: a folded point is zero");

  Vector alpha = Vector::Zero(total);
  Vector v = Vector::Zero(dataset.d);
  auto kkt = [&](const Vector& slack) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < total; ++i)
      worst = std::max(worst, std::abs(std::min(alpha[i], slack[i])));
    return worst;
  };

  double residual = std::numeric_limits<double>::infinity();
  Vector slack(total);
  for (long long sweep = 0; sweep < options.max_sweeps; ++sweep) {
    for (Eigen::Index i = 0; i < total; ++i) {
      const double next = std::max(0.0, alpha[i] + (1.0 - z.col(i).dot(v)) / sq[i]);
      const double step = next - alpha[i];
      if (step != 0.0) {
        v.noalias() += step * z.col(i);
        alpha[i] = next;
      }
    }
    slack = (z.transpose() * v).array() - 1.0;
    residual = kkt(slack);
    if (!std::isfinite(residual) || !(alpha.sum() < 1e300))
      throw SeparabilityError("compute_margin: dual iterates diverged (data not separable)");
    if (residual <= 1e-2 * options.tolerance) break;
  }
  if (!(residual <= options.tolerance))
    throw SeparabilityError("compute_margin: no certified separator within budget (KKT residual " +
                            std::to_string(residual) + ")");

  Margin margin;
  const double norm = v.norm();
  margin.gamma = 1.0 / norm;
  margin.w_star = v / norm;
  margin.kkt_residual = residual;
  margin.min_constraint = slack.minCoeff() + 1.0;
  if (!(margin.min_constraint >= 1.0 - options.tolerance))
    throw SeparabilityError("compute_margin: constraints violated at the returned solution");
  return margin;
}

Margin compute_margin(FederatedDataset& dataset, const MarginOptions& options) {
  Margin margin = solve_margin(dataset, options);
  dataset.margin = margin;
  return margin;
}

std::string dataset_fingerprint(const FederatedDataset& dataset) {
  std::uint64_t hash = 14695981039346656037ull;
  fnv_mix(hash, static_cast<std::uint64_t>(dataset.d));
  fnv_mix(hash, static_cast<std::uint64_t>(dataset.num_clients()));
  for (const auto& c : dataset.clients) fnv_mix(hash, static_cast<std::uint64_t>(c.cols()));
  for (const auto& c : dataset.clients)
    for (Eigen::Index j = 0; j < c.cols(); ++j)
      for (Eigen::Index i = 0; i < c.rows(); ++i) fnv_mix(hash, std::bit_cast<std::uint64_t>(c(i, j)));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

}  // namespace localgd
