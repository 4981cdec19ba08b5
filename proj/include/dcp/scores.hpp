#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace dcp {

/// Per-device calibration scores S_{i,k} in [0,1].
struct CalibrationData {
  std::vector<std::vector<double>> per_device;

  int num_devices() const { return static_cast<int>(per_device.size()); }
  long total() const;
  std::vector<double> pooled() const;

  /// Checks every score lies in [0,1] and every device has at least one point.
  void validate() const;
};

struct TestInstance {
  int device_id = 0;
  int true_label = 0;
  std::vector<double> candidate_scores;  // one per label, all in [0,1]
};

/// Uniform ceiling quantizer onto {1/M, ..., 1}: scores in [0, 1/M] map to
/// level 1 and scores in ((m-1)/M, m/M] map to level m. Never rounds down.
int quantize_level(double score, int num_levels);
double quantize_score(double score, int num_levels);

/// Fraction of device scores per quantization level; entries sum to 1.
std::vector<double> local_histogram(std::span<const double> scores, int num_levels);

struct SyntheticConfig {
  int num_devices = 20;
  std::vector<int> device_sizes;  // broadcast from per_device_size when empty
  int per_device_size = 50;
  int num_labels = 10;
  int num_tests = 1000;
  std::uint64_t seed = 0;
  // True-label scores at device k follow Beta(true_alpha, true_beta_base +
  // true_beta_span * u_k) with u_k = k/(K-1); false-label scores follow
  // Beta(false_alpha, false_beta).
  double true_alpha = 1.0;
  double true_beta_base = 1.0;
  double true_beta_span = 4.0;
  double false_alpha = 5.0;
  double false_beta = 1.0;

  std::vector<int> resolved_sizes() const;
};

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j);
nlohmann::json synthetic_config_to_json(const SyntheticConfig& cfg);

struct SyntheticData {
  CalibrationData calibration;
  std::vector<TestInstance> tests;
};

/// Seeded generator of non-i.i.d. per-device scores. Test devices are drawn
/// with the mixture weights w_k = (n_k+1)/(n+K); the true-label score of a
/// test point comes from its device's calibration distribution.
SyntheticData generate_synthetic(const SyntheticConfig& cfg);

struct IngestOptions {
  bool clip = false;  // clip out-of-range scores into [0,1] instead of failing
};

/// CSV with header `device_id,score`. Device ids must cover 0..K-1.
CalibrationData read_calibration_csv(const std::string& path, const IngestOptions& opts = {});
void write_calibration_csv(const std::string& path, const CalibrationData& cal);

/// CSV with header `test_id,device_id,true_label,label_id,score`, one row per
/// candidate label; label ids must cover 0..L-1 within each test id.
std::vector<TestInstance> read_test_csv(const std::string& path, const IngestOptions& opts = {});
void write_test_csv(const std::string& path, const std::vector<TestInstance>& tests);

}  // namespace dcp
