#include "fedsynth/params.hpp"

#include "fedsynth/wire.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

namespace fedsynth {
namespace nn {

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ShapeError("unknown activation '" + std::string(s) + "'");
}

std::size_t ArchDescriptor::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t ArchDescriptor::fan_out(std::size_t layer) const {
  return layer == hidden_dims.size() ? num_classes : hidden_dims[layer];
}

void ArchDescriptor::validate() const {
  if (input_dim == 0) throw ShapeError("arch: input_dim must be positive");
  if (num_classes < 2) throw ShapeError("arch: num_classes must be at least 2");
  for (auto h : hidden_dims)
    if (h == 0) throw ShapeError("arch: hidden layer widths must be positive");
}

std::size_t param_count(const ArchDescriptor& arch) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) n += (arch.fan_in(l) + 1) * arch.fan_out(l);
  return n;
}

std::size_t layer_offset(const ArchDescriptor& arch, std::size_t layer) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < layer; ++l) n += (arch.fan_in(l) + 1) * arch.fan_out(l);
  return n;
}

std::string arch_to_string(const ArchDescriptor& arch) {
  std::string s = std::to_string(arch.input_dim);
  for (auto h : arch.hidden_dims) s += "-" + std::to_string(h);
  s += "-" + std::to_string(arch.num_classes);
  return s;
}

ArchDescriptor parse_arch(std::string_view layers, Activation activation) {
  std::vector<std::size_t> dims;
  std::size_t pos = 0;
  while (pos <= layers.size()) {
    auto dash = layers.find('-', pos);
    if (dash == std::string_view::npos) dash = layers.size();
    auto token = layers.substr(pos, dash - pos);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (ec != std::errc() || ptr != token.data() + token.size() || token.empty())
      throw ShapeError("arch: cannot parse '" + std::string(layers) + "'");
    dims.push_back(value);
    pos = dash + 1;
  }
  if (dims.size() < 2) throw ShapeError("arch: need at least input and output widths");
  ArchDescriptor arch;
  arch.input_dim = dims.front();
  arch.num_classes = dims.back();
  arch.hidden_dims.assign(dims.begin() + 1, dims.end() - 1);
  arch.activation = activation;
  arch.validate();
  return arch;
}

ModelParams::ModelParams(ArchDescriptor a, Vector v) : arch(std::move(a)), values(std::move(v)) {
  arch.validate();
  if (static_cast<std::size_t>(values.size()) != param_count(arch))
    throw ShapeError("ModelParams: value count " + std::to_string(values.size()) +
                     " does not match arch " + arch_to_string(arch));
}

ModelParams ModelParams::zeros(const ArchDescriptor& arch) {
  return ModelParams(arch, Vector::Zero(static_cast<Eigen::Index>(param_count(arch))));
}

ModelParams init_params(const ArchDescriptor& arch, Rng& rng) {
  ModelParams p = ModelParams::zeros(arch);
  std::size_t offset = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const std::size_t in = arch.fan_in(l), out = arch.fan_out(l);
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (std::size_t k = 0; k < in * out; ++k)
      p.values[static_cast<Eigen::Index>(offset + k)] = (2.0 * rng.uniform() - 1.0) * limit;
    offset += (in + 1) * out;
  }
  return p;
}

ModelParams init_from_seed(const ArchDescriptor& arch, std::uint64_t seed) {
  Rng rng = make_stream(seed, "init");
  return init_params(arch, rng);
}

void write_params(std::ostream& out, const ModelParams& params) {
  nlohmann::json header = {{"format", "fedsynth-params"},
                           {"version", 1},
                           {"arch", wire::arch_to_json(params.arch)},
                           {"count", params.values.size()}};
  wire::write_header(out, header);
  wire::write_f64_le(out, {params.values.data(), static_cast<std::size_t>(params.values.size())});
}

ModelParams read_params(std::istream& in) {
  auto header = wire::read_header(in);
  if (header.value("format", "") != "fedsynth-params" || header.value("version", 0) != 1)
    throw wire::FormatError("params: unrecognized header");
  auto arch = wire::arch_from_json(header.at("arch"));
  const auto count = header.at("count").get<std::size_t>();
  if (count != param_count(arch)) throw wire::FormatError("params: count does not match arch");
  Vector v(static_cast<Eigen::Index>(count));
  wire::read_f64_le(in, {v.data(), count});
  return ModelParams(std::move(arch), std::move(v));
}

std::string serialize_params(const ModelParams& params) {
  std::ostringstream out(std::ios::binary);
  write_params(out, params);
  return out.str();
}

ModelParams deserialize_params(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_params(in);
}

}  // namespace nn

namespace wire {

nlohmann::json arch_to_json(const nn::ArchDescriptor& arch) {
  return {{"input_dim", arch.input_dim},
          {"hidden_dims", arch.hidden_dims},
          {"num_classes", arch.num_classes},
          {"activation", std::string(nn::to_string(arch.activation))}};
}

nn::ArchDescriptor arch_from_json(const nlohmann::json& j) {
  nn::ArchDescriptor arch;
  try {
    arch.input_dim = j.at("input_dim").get<std::size_t>();
    arch.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
    arch.num_classes = j.at("num_classes").get<std::size_t>();
    arch.activation = nn::parse_activation(j.at("activation").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("arch header: ") + e.what());
  }
  arch.validate();
  return arch;
}

void write_header(std::ostream& out, const nlohmann::json& header) {
  out << header.dump() << '\n';
}

nlohmann::json read_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("missing JSON header line");
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad JSON header: ") + e.what());
  }
}

void write_f64_le(std::ostream& out, std::span<const double> values) {
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(bytes, 8);
  }
}

void read_f64_le(std::istream& in, std::span<double> values) {
  for (double& v : values) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw FormatError("truncated float block");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
}

}  // namespace wire
}  // namespace fedsynth
