#pragma once

#include <cstdint>

namespace fedsynth {

struct CommCost {
  std::uint64_t points = 0;
  std::uint64_t input_dim = 0;
  std::uint64_t num_classes = 0;
  bool include_etas = false;
  // Number of unroll steps M; only counted when include_etas is set.
  std::uint64_t num_steps = 0;
  std::uint64_t model_param_count = 0;
};

// points * (input_dim + num_classes) + 1 for H, plus M step sizes when
// include_etas is set.
std::uint64_t payload_float_count(const CommCost& cost);

// payload_float_count / model_param_count.
double payload_ratio(const CommCost& cost);

}  // namespace fedsynth
