#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gslab/tensor.hpp"

namespace gslab {

struct LabeledExample {
  Tensor image;  // rank-1, values in [0,1]
  int label = 0;
};

struct ClientDataset {
  int client_id = 0;
  std::vector<LabeledExample> examples;
};

// Class-conditioned oriented gratings plus seeded pixel noise, clamped to
// [0,1]. Classes are linearly separable at side >= 8 so a small MLP trains to
// high accuracy.
std::vector<LabeledExample> synth_dataset(int num_classes, int examples_per_class, int side,
                                          std::uint64_t seed);

// Non-i.i.d. split: for every class, client proportions are drawn from
// Dirichlet(alpha). Every example is assigned exactly once; a client that
// ends up empty receives one example moved from the largest client.
std::vector<ClientDataset> dirichlet_partition(const std::vector<LabeledExample>& dataset,
                                               int num_clients, double alpha,
                                               std::uint64_t seed);

// IDX ingestion (big-endian magic 0x00000803 for images, 0x00000801 for
// labels). Pixels are rescaled to [0,1].
std::vector<LabeledExample> load_idx(const std::string& images_path,
                                     const std::string& labels_path);
// Convenience overload: derives the labels filename from the images filename
// ("images" -> "labels", "idx3" -> "idx1").
std::vector<LabeledExample> load_idx(const std::string& images_path);

// CSV rows: label,pix0,...,pixN with pixels in [0,255]; rescaled to [0,1].
std::vector<LabeledExample> load_csv(const std::string& path);

}  // namespace gslab
