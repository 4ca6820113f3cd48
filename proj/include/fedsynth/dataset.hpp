#pragma once

#include "fedsynth/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedsynth {

// Labeled examples; one row of X per label.
struct Dataset {
  Matrix X;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(X.cols()); }
  Dataset subset(std::span<const std::size_t> indices) const;
  std::vector<std::size_t> label_histogram() const;
};

// One client's private data plus the seed of its random streams.
struct ClientShard {
  int client_id = 0;
  Matrix X;
  std::vector<int> labels;
  std::uint64_t rng_seed = 0;

  std::size_t size() const { return labels.size(); }
};

}  // namespace fedsynth
