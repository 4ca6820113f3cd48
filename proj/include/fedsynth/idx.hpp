#pragma once

#include "fedsynth/dataset.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace fedsynth {

class IdxError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, truncated, dim_mismatch };
  IdxError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Parses in-memory IDX files. Pixels are scaled to [0, 1]. num_classes = 0
// infers max(label) + 1.
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels,
                  std::size_t num_classes = 0);

Dataset load_idx(const std::string& images_path, const std::string& labels_path, std::size_t num_classes = 0);

}  // namespace fedsynth
