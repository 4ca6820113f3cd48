#pragma once

#include "fedsynth/arch.hpp"
#include "fedsynth/rng.hpp"
#include "fedsynth/types.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>

namespace fedsynth::nn {

struct ModelParams {
  ArchDescriptor arch;
  Vector values;

  ModelParams() = default;
  ModelParams(ArchDescriptor a, Vector v);

  static ModelParams zeros(const ArchDescriptor& arch);

  bool all_finite() const { return values.allFinite(); }
};

// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases.
// Draws are taken layer by layer in flat order from `rng`.
ModelParams init_params(const ArchDescriptor& arch, Rng& rng);

// Deterministic expansion of an initialization seed (the stream is named
// "init" so the same seed always gives the same model).
ModelParams init_from_seed(const ArchDescriptor& arch, std::uint64_t seed);

// Wire format: one line of JSON {"format":"fedsynth-params","version":1,
// "arch":{...},"count":N} terminated by '\n', followed by N little-endian
// IEEE-754 doubles in the flat layout.
void write_params(std::ostream& out, const ModelParams& params);
ModelParams read_params(std::istream& in);
std::string serialize_params(const ModelParams& params);
ModelParams deserialize_params(const std::string& bytes);

}  // namespace fedsynth::nn
