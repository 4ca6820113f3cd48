#pragma once

#include "fedsynth/arch.hpp"
#include "fedsynth/types.hpp"

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace fedsynth {

// One trainable synthetic batch: covariates, soft labels and the step
// length it induces in parameter space.
struct SyntheticBatch {
  Matrix X;
  Matrix Y;
  double eta = 0.0;

  std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
};

// What a sender transmits: the unique batches, the order in which the
// decoder replays them (a batch may appear many times), and the norm H of
// the update being encoded.
struct SyntheticPayload {
  nn::ArchDescriptor arch;
  std::vector<SyntheticBatch> batches;
  std::vector<std::size_t> schedule;
  double H = 0.0;

  std::size_t num_points() const;
  std::size_t num_steps() const { return schedule.size(); }

  // Shapes match arch, every schedule entry is valid, every batch is used,
  // values finite, H >= 0. Throws ShapeError / NumericError.
  void validate() const;
};

// [0, 1, ..., B-1] repeated `epochs` times.
std::vector<std::size_t> epoch_schedule(std::size_t num_batches, std::size_t epochs);

// Payload file format:
//   line 1: JSON {"format":"fedsynth-payload","version":1,"arch":{...},
//           "B":..,"M":..,"schedule":[..],"batch_sizes":[..],"H":..}
//   then for each batch in order: X (rows x input_dim, row-major),
//   Y (rows x num_classes, row-major), eta; all little-endian float64.
void write_payload(std::ostream& out, const SyntheticPayload& payload);
SyntheticPayload read_payload(std::istream& in);
std::string serialize_payload(const SyntheticPayload& payload);
SyntheticPayload deserialize_payload(const std::string& bytes);

}  // namespace fedsynth
