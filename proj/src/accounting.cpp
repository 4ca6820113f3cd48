#include "fedsynth/accounting.hpp"

#include <stdexcept>

namespace fedsynth {

std::uint64_t payload_float_count(const CommCost& cost) {
  return cost.points * (cost.input_dim + cost.num_classes) + 1 + (cost.include_etas ? cost.num_steps : 0);
}

double payload_ratio(const CommCost& cost) {
  if (cost.model_param_count == 0) throw std::invalid_argument("payload_ratio: model_param_count is zero");
  return static_cast<double>(payload_float_count(cost)) / static_cast<double>(cost.model_param_count);
}

}  // namespace fedsynth
