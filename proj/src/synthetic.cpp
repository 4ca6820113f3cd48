#include "fedsynth/synthetic.hpp"

#include "fedsynth/wire.hpp"

#include <istream>
#include <ostream>
#include <sstream>

namespace fedsynth {

std::size_t SyntheticPayload::num_points() const {
  std::size_t n = 0;
  for (const auto& b : batches) n += b.rows();
  return n;
}

void SyntheticPayload::validate() const {
  arch.validate();
  if (batches.empty()) throw ShapeError("payload has no batches");
  if (schedule.empty()) throw ShapeError("payload has an empty schedule");
  if (!(H >= 0.0) || !std::isfinite(H)) throw NumericError("payload norm H must be finite and >= 0");
  std::vector<bool> used(batches.size(), false);
  for (auto idx : schedule) {
    if (idx >= batches.size()) throw ShapeError("schedule entry " + std::to_string(idx) + " out of range");
    used[idx] = true;
  }
  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (!used[b]) throw ShapeError("batch " + std::to_string(b) + " is never scheduled");
    const auto& batch = batches[b];
    if (batch.X.rows() < 1 || static_cast<std::size_t>(batch.X.cols()) != arch.input_dim)
      throw ShapeError("batch " + std::to_string(b) + " covariates do not match arch");
    if (batch.Y.rows() != batch.X.rows() || static_cast<std::size_t>(batch.Y.cols()) != arch.num_classes)
      throw ShapeError("batch " + std::to_string(b) + " labels do not match arch");
    if (!batch.X.allFinite() || !batch.Y.allFinite() || !std::isfinite(batch.eta))
      throw NumericError("batch " + std::to_string(b) + " has non-finite values");
  }
}

std::vector<std::size_t> epoch_schedule(std::size_t num_batches, std::size_t epochs) {
  std::vector<std::size_t> s;
  s.reserve(num_batches * epochs);
  for (std::size_t e = 0; e < epochs; ++e)
    for (std::size_t b = 0; b < num_batches; ++b) s.push_back(b);
  return s;
}

void write_payload(std::ostream& out, const SyntheticPayload& payload) {
  payload.validate();
  std::vector<std::size_t> sizes;
  for (const auto& b : payload.batches) sizes.push_back(b.rows());
  nlohmann::json header = {{"format", "fedsynth-payload"},
                           {"version", 1},
                           {"arch", wire::arch_to_json(payload.arch)},
                           {"B", payload.batches.size()},
                           {"M", payload.schedule.size()},
                           {"schedule", payload.schedule},
                           {"batch_sizes", sizes},
                           {"H", payload.H}};
  wire::write_header(out, header);
  for (const auto& b : payload.batches) {
    wire::write_f64_le(out, {b.X.data(), static_cast<std::size_t>(b.X.size())});
    wire::write_f64_le(out, {b.Y.data(), static_cast<std::size_t>(b.Y.size())});
    wire::write_f64_le(out, {&b.eta, 1});
  }
}

SyntheticPayload read_payload(std::istream& in) {
  const auto header = wire::read_header(in);
  if (header.value("format", "") != "fedsynth-payload" || header.value("version", 0) != 1)
    throw wire::FormatError("payload: unrecognized header");
  SyntheticPayload p;
  std::vector<std::size_t> sizes;
  try {
    p.arch = wire::arch_from_json(header.at("arch"));
    p.schedule = header.at("schedule").get<std::vector<std::size_t>>();
    sizes = header.at("batch_sizes").get<std::vector<std::size_t>>();
    p.H = header.at("H").get<double>();
    if (header.at("B").get<std::size_t>() != sizes.size() ||
        header.at("M").get<std::size_t>() != p.schedule.size())
      throw wire::FormatError("payload: B/M disagree with header arrays");
  } catch (const nlohmann::json::exception& e) {
    throw wire::FormatError(std::string("payload header: ") + e.what());
  }
  const auto d = static_cast<Eigen::Index>(p.arch.input_dim);
  const auto c = static_cast<Eigen::Index>(p.arch.num_classes);
  for (auto rows : sizes) {
    SyntheticBatch b;
    b.X.resize(static_cast<Eigen::Index>(rows), d);
    b.Y.resize(static_cast<Eigen::Index>(rows), c);
    wire::read_f64_le(in, {b.X.data(), static_cast<std::size_t>(b.X.size())});
    wire::read_f64_le(in, {b.Y.data(), static_cast<std::size_t>(b.Y.size())});
    wire::read_f64_le(in, {&b.eta, 1});
    p.batches.push_back(std::move(b));
  }
  p.validate();
  return p;
}

std::string serialize_payload(const SyntheticPayload& payload) {
  std::ostringstream out(std::ios::binary);
  write_payload(out, payload);
  return out.str();
}

SyntheticPayload deserialize_payload(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_payload(in);
}

}  // namespace fedsynth
