#include "gslab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "gslab/errors.hpp"
#include "gslab/rng.hpp"

namespace gslab {

std::vector<LabeledExample> synth_dataset(int num_classes, int examples_per_class, int side,
                                          std::uint64_t seed) {
  if (num_classes <= 0 || examples_per_class <= 0) {
    throw ContractError("synth_dataset: counts must be positive");
  }
  if (side < 4) throw ContractError("synth_dataset: side must be >= 4");

  constexpr double kPi = 3.14159265358979323846;
  std::vector<LabeledExample> out;
  out.reserve(static_cast<std::size_t>(num_classes) * examples_per_class);
  RngKey root = RngKey::root(seed);
  for (int c = 0; c < num_classes; ++c) {
    // One oriented grating per class; orientation and frequency identify it.
    const double angle = kPi * c / num_classes;
    const double freq = 1.0 + (c % 3);
    const double phase = 2.0 * kPi * c / num_classes;
    const double dx = std::cos(angle) * freq / side;
    const double dy = std::sin(angle) * freq / side;
    for (int e = 0; e < examples_per_class; ++e) {
      Rng rng(root.child(static_cast<std::uint64_t>(c) * 1000003ULL +
                         static_cast<std::uint64_t>(e)));
      Tensor img = Tensor::zeros({side * side});
      for (int i = 0; i < side; ++i) {
        for (int j = 0; j < side; ++j) {
          double v = 0.5 + 0.45 * std::sin(2.0 * kPi * (dx * i + dy * j) + phase);
          v += 0.08 * rng.normal();
          img.at(i * side + j) = std::min(1.0, std::max(0.0, v));
        }
      }
      out.push_back(LabeledExample{std::move(img), c});
    }
  }
  return out;
}

std::vector<ClientDataset> dirichlet_partition(const std::vector<LabeledExample>& dataset,
                                               int num_clients, double alpha,
                                               std::uint64_t seed) {
  if (num_clients < 1) throw ContractError("dirichlet_partition: num_clients must be >= 1");
  if (alpha <= 0.0) throw ContractError("dirichlet_partition: alpha must be positive");
  if (static_cast<int>(dataset.size()) < num_clients) {
    throw ContractError("dirichlet_partition: dataset smaller than num_clients (" +
                        std::to_string(dataset.size()) + " < " + std::to_string(num_clients) +
                        ")");
  }

  int num_classes = 0;
  for (const auto& ex : dataset) num_classes = std::max(num_classes, ex.label + 1);
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(num_classes));
  for (int i = 0; i < static_cast<int>(dataset.size()); ++i) {
    by_class[static_cast<std::size_t>(dataset[static_cast<std::size_t>(i)].label)].push_back(i);
  }

  RngKey root = RngKey::root(seed);
  std::vector<std::vector<int>> shards(static_cast<std::size_t>(num_clients));
  for (int c = 0; c < num_classes; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    if (idx.empty()) continue;
    Rng rng(root.child(static_cast<std::uint64_t>(c)));
    rng.shuffle(idx);
    std::vector<double> props = rng.dirichlet(alpha, num_clients);
    const int n = static_cast<int>(idx.size());
    double cum = 0.0;
    int taken = 0;
    for (int k = 0; k < num_clients; ++k) {
      cum += props[static_cast<std::size_t>(k)];
      int upto = (k == num_clients - 1) ? n : static_cast<int>(std::floor(cum * n + 0.5));
      upto = std::min(std::max(upto, taken), n);
      for (int i = taken; i < upto; ++i) shards[static_cast<std::size_t>(k)].push_back(idx[static_cast<std::size_t>(i)]);
      taken = upto;
    }
  }

  // No empty shards: steal one example from the currently largest client.
  for (int k = 0; k < num_clients; ++k) {
    auto& shard = shards[static_cast<std::size_t>(k)];
    if (!shard.empty()) continue;
    int largest = 0;
    for (int j = 1; j < num_clients; ++j) {
      if (shards[static_cast<std::size_t>(j)].size() > shards[static_cast<std::size_t>(largest)].size()) largest = j;
    }
    auto& donor = shards[static_cast<std::size_t>(largest)];
    shard.push_back(donor.back());
    donor.pop_back();
  }

  std::vector<ClientDataset> out(static_cast<std::size_t>(num_clients));
  for (int k = 0; k < num_clients; ++k) {
    out[static_cast<std::size_t>(k)].client_id = k;
    auto& shard = shards[static_cast<std::size_t>(k)];
    std::sort(shard.begin(), shard.end());
    for (int i : shard) out[static_cast<std::size_t>(k)].examples.push_back(dataset[static_cast<std::size_t>(i)]);
  }
  return out;
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path, std::int64_t offset) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) {
    throw ParseError(path + ": truncated at byte " + std::to_string(offset));
  }
  return (static_cast<std::uint32_t>(buf[0]) << 24) | (static_cast<std::uint32_t>(buf[1]) << 16) |
         (static_cast<std::uint32_t>(buf[2]) << 8) | static_cast<std::uint32_t>(buf[3]);
}

}  // namespace

std::vector<LabeledExample> load_idx(const std::string& images_path,
                                     const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw ParseError(images_path + ": cannot open");
  std::uint32_t magic = read_be32(img, images_path, 0);
  if (magic != 0x00000803u) {
    char hex[32];
    std::snprintf(hex, sizeof hex, "0x%08x", magic);
    throw ParseError(images_path + ": bad image magic " + hex + " at byte 0");
  }
  const std::uint32_t n = read_be32(img, images_path, 4);
  const std::uint32_t rows = read_be32(img, images_path, 8);
  const std::uint32_t cols = read_be32(img, images_path, 12);
  const std::int64_t pixels = static_cast<std::int64_t>(rows) * cols;
  if (pixels == 0) throw ParseError(images_path + ": zero image dimensions at byte 8");

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw ParseError(labels_path + ": cannot open");
  magic = read_be32(lab, labels_path, 0);
  if (magic != 0x00000801u) {
    char hex[32];
    std::snprintf(hex, sizeof hex, "0x%08x", magic);
    throw ParseError(labels_path + ": bad label magic " + hex + " at byte 0");
  }
  const std::uint32_t n_labels = read_be32(lab, labels_path, 4);
  if (n_labels != n) {
    throw ParseError(labels_path + ": label count " + std::to_string(n_labels) +
                     " != image count " + std::to_string(n));
  }

  std::vector<LabeledExample> out;
  out.reserve(n);
  std::vector<unsigned char> buf(static_cast<std::size_t>(pixels));
  for (std::uint32_t i = 0; i < n; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), pixels);
    if (!img) {
      throw ParseError(images_path + ": truncated at byte " +
                       std::to_string(16 + static_cast<std::int64_t>(i) * pixels));
    }
    Tensor t = Tensor::zeros({static_cast<int>(pixels)});
    for (std::int64_t p = 0; p < pixels; ++p) t.at(p) = buf[static_cast<std::size_t>(p)] / 255.0;
    int label = lab.get();
    if (label == EOF) {
      throw ParseError(labels_path + ": truncated at byte " + std::to_string(8 + i));
    }
    out.push_back(LabeledExample{std::move(t), label});
  }
  return out;
}

std::vector<LabeledExample> load_idx(const std::string& images_path) {
  std::string labels_path = images_path;
  auto replace = [&](const std::string& from, const std::string& to) {
    auto pos = labels_path.find(from);
    if (pos != std::string::npos) labels_path.replace(pos, from.size(), to);
  };
  replace("images", "labels");
  replace("idx3", "idx1");
  if (labels_path == images_path) {
    throw ParseError(images_path + ": cannot derive labels filename; use the two-path overload");
  }
  return load_idx(images_path, labels_path);
}

std::vector<LabeledExample> load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open");
  std::vector<LabeledExample> out;
  std::string line;
  int line_no = 0;
  std::int64_t pixels = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<double> vals;
    while (std::getline(ss, field, ',')) {
      std::size_t used = 0;
      double v;
      try {
        v = std::stod(field, &used);
      } catch (const std::exception&) {
        throw ParseError(path + ": line " + std::to_string(line_no) + ": bad number '" + field +
                         "'");
      }
      if (used != field.size()) {
        throw ParseError(path + ": line " + std::to_string(line_no) + ": bad number '" + field +
                         "'");
      }
      vals.push_back(v);
    }
    if (vals.size() < 2) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": need label and pixels");
    }
    if (pixels < 0) pixels = static_cast<std::int64_t>(vals.size()) - 1;
    if (static_cast<std::int64_t>(vals.size()) - 1 != pixels) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(pixels) + " pixels, got " + std::to_string(vals.size() - 1));
    }
    int label = static_cast<int>(vals[0]);
    if (vals[0] != label || label < 0) {
      throw ParseError(path + ": line " + std::to_string(line_no) + ": bad label");
    }
    Tensor img = Tensor::zeros({static_cast<int>(pixels)});
    for (std::int64_t p = 0; p < pixels; ++p) {
      img.at(p) = vals[static_cast<std::size_t>(p + 1)] / 255.0;
    }
    out.push_back(LabeledExample{std::move(img), label});
  }
  return out;
}

}  // namespace gslab
