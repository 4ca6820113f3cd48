#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fedsynth {

struct RoundMetrics {
  std::size_t round = 0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  std::uint64_t upload_floats = 0;
  std::uint64_t download_floats = 0;
  // ||theta - g||^2 / ||theta||^2 of every cohort member that used the
  // synthetic transport, in client_id order.
  std::vector<double> distill_losses;
  std::size_t failures = 0;
  std::size_t decode_mismatches = 0;
  std::vector<int> cohort;
  // Reverse transport only: ||w_hat - w_server|| / ||w_init - w_server||.
  std::optional<double> server_fit_error;
  // Decoder invocations summed over the cohort (compute proxy).
  std::uint64_t decoder_calls = 0;
  // Not part of the metrics file, which must be reproducible byte for byte.
  std::int64_t wall_ms = 0;
};

// One JSON object per line; wall_ms is excluded.
std::string to_json_line(const RoundMetrics& m);
RoundMetrics from_json_line(const std::string& line);

void write_metrics(const std::string& path, const std::vector<RoundMetrics>& rows);
std::vector<RoundMetrics> read_metrics(const std::string& path);

// Per-round wall-clock times, written next to the metrics file.
void write_timings(const std::string& path, const std::vector<RoundMetrics>& rows);

struct DiffRow {
  std::size_t round = 0;
  double accuracy_diff = 0.0;
  double loss_diff = 0.0;
  std::int64_t upload_diff = 0;
};

// b - a, matched by round. Throws when the round sets differ.
std::vector<DiffRow> diff_metrics(const std::vector<RoundMetrics>& a, const std::vector<RoundMetrics>& b);
void write_diff_csv(std::ostream& out, const std::vector<DiffRow>& rows);

}  // namespace fedsynth
