#include "fedsynth/metrics.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace fedsynth {

std::string to_json_line(const RoundMetrics& m) {
  nlohmann::ordered_json j;
  j["round"] = m.round;
  j["test_accuracy"] = m.test_accuracy;
  j["test_loss"] = m.test_loss;
  j["upload_floats"] = m.upload_floats;
  j["download_floats"] = m.download_floats;
  j["distill_losses"] = m.distill_losses;
  j["failures"] = m.failures;
  j["decode_mismatches"] = m.decode_mismatches;
  j["cohort"] = m.cohort;
  j["decoder_calls"] = m.decoder_calls;
  if (m.server_fit_error) j["server_fit_error"] = *m.server_fit_error;
  return j.dump();
}

RoundMetrics from_json_line(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  RoundMetrics m;
  m.round = j.at("round").get<std::size_t>();
  m.test_accuracy = j.at("test_accuracy").get<double>();
  m.test_loss = j.at("test_loss").get<double>();
  m.upload_floats = j.at("upload_floats").get<std::uint64_t>();
  m.download_floats = j.at("download_floats").get<std::uint64_t>();
  m.distill_losses = j.at("distill_losses").get<std::vector<double>>();
  m.failures = j.at("failures").get<std::size_t>();
  m.decode_mismatches = j.at("decode_mismatches").get<std::size_t>();
  m.cohort = j.at("cohort").get<std::vector<int>>();
  m.decoder_calls = j.value("decoder_calls", std::uint64_t{0});
  if (j.contains("server_fit_error")) m.server_fit_error = j.at("server_fit_error").get<double>();
  return m;
}

void write_metrics(const std::string& path, const std::vector<RoundMetrics>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : rows) out << to_json_line(r) << '\n';
}

std::vector<RoundMetrics> read_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::vector<RoundMetrics> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(from_json_line(line));
  return rows;
}

void write_timings(const std::string& path, const std::vector<RoundMetrics>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& r : rows)
    out << nlohmann::ordered_json{{"round", r.round}, {"wall_ms", r.wall_ms}}.dump() << '\n';
}

std::vector<DiffRow> diff_metrics(const std::vector<RoundMetrics>& a, const std::vector<RoundMetrics>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("metrics files have different round counts");
  std::vector<DiffRow> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].round != b[i].round) throw std::invalid_argument("metrics files disagree on round numbering");
    out.push_back({a[i].round, b[i].test_accuracy - a[i].test_accuracy, b[i].test_loss - a[i].test_loss,
                   static_cast<std::int64_t>(b[i].upload_floats) - static_cast<std::int64_t>(a[i].upload_floats)});
  }
  return out;
}

void write_diff_csv(std::ostream& out, const std::vector<DiffRow>& rows) {
  out << "round,accuracy_diff,loss_diff,upload_diff\n";
  out << std::setprecision(17);
  for (const auto& r : rows)
    out << r.round << ',' << r.accuracy_diff << ',' << r.loss_diff << ',' << r.upload_diff << '\n';
}

}  // namespace fedsynth
