#pragma once

#include "fedsynth/arch.hpp"

#include <json.hpp>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fedsynth::wire {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

nlohmann::json arch_to_json(const nn::ArchDescriptor& arch);
nn::ArchDescriptor arch_from_json(const nlohmann::json& j);

// Single-line JSON header terminated by '\n'.
void write_header(std::ostream& out, const nlohmann::json& header);
nlohmann::json read_header(std::istream& in);

void write_f64_le(std::ostream& out, std::span<const double> values);
void read_f64_le(std::istream& in, std::span<double> values);

}  // namespace fedsynth::wire
