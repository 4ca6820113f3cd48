#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace fedsynth::nn {

enum class Activation { relu, tanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

// Dense MLP shape: input_dim -> hidden_dims... -> num_classes, softmax output.
struct ArchDescriptor {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t num_classes = 0;
  Activation activation = Activation::relu;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;
  std::size_t fan_out(std::size_t layer) const;

  // Throws ShapeError on a zero width or fewer than two classes.
  void validate() const;

  bool operator==(const ArchDescriptor&) const = default;
};

// Σ over layers of (fan_in + 1) * fan_out.
std::size_t param_count(const ArchDescriptor& arch);

// Offset of layer `l` in the flat layout. Layout is layer-major; within a
// layer the fan_out x fan_in weight matrix comes first (row-major, one row
// per output unit), followed by the fan_out biases.
std::size_t layer_offset(const ArchDescriptor& arch, std::size_t layer);

// "2-16-3" style shorthand used in configs and logs.
std::string arch_to_string(const ArchDescriptor& arch);
ArchDescriptor parse_arch(std::string_view layers, Activation activation = Activation::relu);

}  // namespace fedsynth::nn
