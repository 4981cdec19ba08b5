#include "dcp/scores.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dcp {

long CalibrationData::total() const {
  long n = 0;
  for (const auto& dev : per_device) n += static_cast<long>(dev.size());
  return n;
}

std::vector<double> CalibrationData::pooled() const {
  std::vector<double> all;
  all.reserve(static_cast<std::size_t>(total()));
  for (const auto& dev : per_device) all.insert(all.end(), dev.begin(), dev.end());
  return all;
}

void CalibrationData::validate() const {
  if (per_device.empty()) throw std::invalid_argument("calibration data: no devices");
  for (std::size_t k = 0; k < per_device.size(); ++k) {
    if (per_device[k].empty())
      throw std::invalid_argument("calibration data: device " + std::to_string(k) + " is empty");
    for (double s : per_device[k])
      if (!(s >= 0.0 && s <= 1.0))
        throw std::invalid_argument("calibration data: score outside [0,1] at device " +
                                    std::to_string(k));
  }
}

int quantize_level(double score, int num_levels) {
  if (num_levels < 1) throw std::invalid_argument("quantize: M must be >= 1");
  if (!(score >= 0.0 && score <= 1.0))
    throw std::invalid_argument("quantize: score outside [0,1]");
  int level = static_cast<int>(std::ceil(score * num_levels));
  if (level < 1) level = 1;
  if (level > num_levels) level = num_levels;
  // Guards the upper-bound property when level/M rounds below the score.
  while (level < num_levels &&
         static_cast<double>(level) / static_cast<double>(num_levels) < score)
    ++level;
  return level;
}

double quantize_score(double score, int num_levels) {
  return static_cast<double>(quantize_level(score, num_levels)) /
         static_cast<double>(num_levels);
}

std::vector<double> local_histogram(std::span<const double> scores, int num_levels) {
  if (scores.empty()) throw std::invalid_argument("local_histogram: empty score vector");
  std::vector<double> hist(static_cast<std::size_t>(num_levels), 0.0);
  for (double s : scores) hist[static_cast<std::size_t>(quantize_level(s, num_levels)) - 1] += 1.0;
  const double inv = 1.0 / static_cast<double>(scores.size());
  for (double& h : hist) h *= inv;
  return hist;
}

std::vector<int> SyntheticConfig::resolved_sizes() const {
  if (!device_sizes.empty()) {
    if (static_cast<int>(device_sizes.size()) != num_devices)
      throw std::invalid_argument("synthetic config: device_sizes length must equal K");
    return device_sizes;
  }
  return std::vector<int>(static_cast<std::size_t>(num_devices), per_device_size);
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  SyntheticConfig cfg;
  cfg.num_devices = j.value("K", cfg.num_devices);
  if (j.contains("device_sizes")) cfg.device_sizes = j.at("device_sizes").get<std::vector<int>>();
  cfg.per_device_size = j.value("n_k", cfg.per_device_size);
  cfg.num_labels = j.value("num_labels", cfg.num_labels);
  cfg.num_tests = j.value("num_tests", cfg.num_tests);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.true_alpha = j.value("true_alpha", cfg.true_alpha);
  cfg.true_beta_base = j.value("true_beta_base", cfg.true_beta_base);
  cfg.true_beta_span = j.value("true_beta_span", cfg.true_beta_span);
  cfg.false_alpha = j.value("false_alpha", cfg.false_alpha);
  cfg.false_beta = j.value("false_beta", cfg.false_beta);
  return cfg;
}

nlohmann::json synthetic_config_to_json(const SyntheticConfig& cfg) {
  nlohmann::json j;
  j["K"] = cfg.num_devices;
  if (!cfg.device_sizes.empty()) j["device_sizes"] = cfg.device_sizes;
  j["n_k"] = cfg.per_device_size;
  j["num_labels"] = cfg.num_labels;
  j["num_tests"] = cfg.num_tests;
  j["seed"] = cfg.seed;
  j["true_alpha"] = cfg.true_alpha;
  j["true_beta_base"] = cfg.true_beta_base;
  j["true_beta_span"] = cfg.true_beta_span;
  j["false_alpha"] = cfg.false_alpha;
  j["false_beta"] = cfg.false_beta;
  return j;
}

namespace {

double sample_beta(std::mt19937_64& rng, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0))
    throw std::invalid_argument("synthetic: Beta parameters must be positive");
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  const double denom = x + y;
  double s = denom > 0.0 ? x / denom : 0.0;
  return std::clamp(s, 0.0, 1.0);
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.num_devices < 1) throw std::invalid_argument("synthetic: K must be >= 1");
  if (cfg.num_labels < 1) throw std::invalid_argument("synthetic: num_labels must be >= 1");
  const std::vector<int> sizes = cfg.resolved_sizes();
  for (int n_k : sizes)
    if (n_k < 1) throw std::invalid_argument("synthetic: every n_k must be >= 1");

  std::mt19937_64 rng(cfg.seed);
  const int num_devices = cfg.num_devices;
  auto true_beta = [&](int k) {
    const double u = num_devices > 1
                         ? static_cast<double>(k) / static_cast<double>(num_devices - 1)
                         : 0.0;
    return cfg.true_beta_base + cfg.true_beta_span * u;
  };

  SyntheticData data;
  data.calibration.per_device.resize(static_cast<std::size_t>(num_devices));
  for (int k = 0; k < num_devices; ++k) {
    auto& dev = data.calibration.per_device[static_cast<std::size_t>(k)];
    dev.resize(static_cast<std::size_t>(sizes[static_cast<std::size_t>(k)]));
    for (double& s : dev) s = sample_beta(rng, cfg.true_alpha, true_beta(k));
  }

  // Mixture weights w_k = (n_k + 1) / (n + K).
  long n = 0;
  for (int n_k : sizes) n += n_k;
  std::vector<double> weights(static_cast<std::size_t>(num_devices));
  for (int k = 0; k < num_devices; ++k)
    weights[static_cast<std::size_t>(k)] =
        static_cast<double>(sizes[static_cast<std::size_t>(k)] + 1) /
        static_cast<double>(n + num_devices);
  std::discrete_distribution<int> device_pick(weights.begin(), weights.end());
  std::uniform_int_distribution<int> label_pick(0, cfg.num_labels - 1);

  data.tests.resize(static_cast<std::size_t>(cfg.num_tests));
  for (auto& test : data.tests) {
    test.device_id = device_pick(rng);
    test.true_label = label_pick(rng);
    test.candidate_scores.resize(static_cast<std::size_t>(cfg.num_labels));
    for (int y = 0; y < cfg.num_labels; ++y) {
      test.candidate_scores[static_cast<std::size_t>(y)] =
          (y == test.true_label) ? sample_beta(rng, cfg.true_alpha, true_beta(test.device_id))
                                 : sample_beta(rng, cfg.false_alpha, cfg.false_beta);
    }
  }
  return data;
}

namespace {

struct CsvReader {
  std::ifstream in;
  std::string path;
  long line_no = 0;

  explicit CsvReader(const std::string& p) : in(p), path(p) {
    if (!in) throw std::runtime_error("cannot open " + p);
  }

  bool next_row(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      fields.clear();
      std::stringstream ss(line);
      std::string field;
      while (std::getline(ss, field, ',')) fields.push_back(field);
      if (!line.empty() && line.back() == ',') fields.emplace_back();
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(int column, const std::string& what) const {
    throw std::runtime_error(path + ":" + std::to_string(line_no) + ": column " +
                             std::to_string(column + 1) + ": " + what);
  }

  long parse_int(const std::vector<std::string>& fields, int column) {
    try {
      std::size_t used = 0;
      const long v = std::stol(fields.at(static_cast<std::size_t>(column)), &used);
      if (used != fields[static_cast<std::size_t>(column)].size()) fail(column, "not an integer");
      return v;
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception&) {
      fail(column, "not an integer");
    }
  }

  double parse_score(const std::vector<std::string>& fields, int column, bool clip) {
    double v = 0.0;
    try {
      std::size_t used = 0;
      v = std::stod(fields.at(static_cast<std::size_t>(column)), &used);
      if (used != fields[static_cast<std::size_t>(column)].size()) fail(column, "not a number");
    } catch (const std::runtime_error&) {
      throw;
    } catch (const std::exception&) {
      fail(column, "not a number");
    }
    if (!(v >= 0.0 && v <= 1.0)) {
      if (!clip) fail(column, "score outside [0,1] (pass --clip to clamp)");
      v = std::clamp(v, 0.0, 1.0);
    }
    return v;
  }
};

}  // namespace

CalibrationData read_calibration_csv(const std::string& path, const IngestOptions& opts) {
  CsvReader reader(path);
  std::vector<std::string> fields;
  if (!reader.next_row(fields) || fields.size() != 2 || fields[0] != "device_id" ||
      fields[1] != "score")
    throw std::runtime_error(path + ": expected header `device_id,score`");

  std::vector<std::vector<double>> devices;
  while (reader.next_row(fields)) {
    if (fields.size() != 2) reader.fail(0, "expected 2 fields");
    const long dev = reader.parse_int(fields, 0);
    if (dev < 0) reader.fail(0, "negative device id");
    const double score = reader.parse_score(fields, 1, opts.clip);
    if (static_cast<std::size_t>(dev) >= devices.size())
      devices.resize(static_cast<std::size_t>(dev) + 1);
    devices[static_cast<std::size_t>(dev)].push_back(score);
  }
  CalibrationData cal{std::move(devices)};
  for (std::size_t k = 0; k < cal.per_device.size(); ++k)
    if (cal.per_device[k].empty())
      throw std::runtime_error(path + ": device id gap, no rows for device " + std::to_string(k));
  cal.validate();
  return cal;
}

void write_calibration_csv(const std::string& path, const CalibrationData& cal) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "device_id,score\n";
  out.precision(17);
  for (std::size_t k = 0; k < cal.per_device.size(); ++k)
    for (double s : cal.per_device[k]) out << k << "," << s << "\n";
}

std::vector<TestInstance> read_test_csv(const std::string& path, const IngestOptions& opts) {
  CsvReader reader(path);
  std::vector<std::string> fields;
  if (!reader.next_row(fields) || fields.size() != 5 || fields[0] != "test_id" ||
      fields[1] != "device_id" || fields[2] != "true_label" || fields[3] != "label_id" ||
      fields[4] != "score")
    throw std::runtime_error(path +
                             ": expected header `test_id,device_id,true_label,label_id,score`");

  std::vector<TestInstance> tests;
  std::vector<std::vector<bool>> seen_labels;
  while (reader.next_row(fields)) {
    if (fields.size() != 5) reader.fail(0, "expected 5 fields");
    const long test_id = reader.parse_int(fields, 0);
    const long device = reader.parse_int(fields, 1);
    const long true_label = reader.parse_int(fields, 2);
    const long label = reader.parse_int(fields, 3);
    const double score = reader.parse_score(fields, 4, opts.clip);
    if (test_id < 0) reader.fail(0, "negative test id");
    if (device < 0) reader.fail(1, "negative device id");
    if (label < 0) reader.fail(3, "negative label id");
    if (static_cast<std::size_t>(test_id) >= tests.size()) {
      tests.resize(static_cast<std::size_t>(test_id) + 1);
      seen_labels.resize(static_cast<std::size_t>(test_id) + 1);
    }
    TestInstance& t = tests[static_cast<std::size_t>(test_id)];
    auto& seen = seen_labels[static_cast<std::size_t>(test_id)];
    if (seen.empty()) {
      t.device_id = static_cast<int>(device);
      t.true_label = static_cast<int>(true_label);
    } else {
      if (t.device_id != device) reader.fail(1, "device id differs within a test id");
      if (t.true_label != true_label) reader.fail(2, "true label differs within a test id");
    }
    if (static_cast<std::size_t>(label) >= t.candidate_scores.size()) {
      t.candidate_scores.resize(static_cast<std::size_t>(label) + 1, -1.0);
      seen.resize(static_cast<std::size_t>(label) + 1, false);
    }
    if (seen[static_cast<std::size_t>(label)]) reader.fail(3, "duplicate label id within a test");
    seen[static_cast<std::size_t>(label)] = true;
    t.candidate_scores[static_cast<std::size_t>(label)] = score;
  }
  for (std::size_t i = 0; i < tests.size(); ++i) {
    if (seen_labels[i].empty())
      throw std::runtime_error(path + ": test id gap, no rows for test " + std::to_string(i));
    for (std::size_t y = 0; y < seen_labels[i].size(); ++y)
      if (!seen_labels[i][y])
        throw std::runtime_error(path + ": test " + std::to_string(i) + " is missing label " +
                                 std::to_string(y));
    if (tests[i].true_label < 0 ||
        static_cast<std::size_t>(tests[i].true_label) >= tests[i].candidate_scores.size())
      throw std::runtime_error(path + ": test " + std::to_string(i) +
                               " has true label outside its label set");
  }
  return tests;
}

void write_test_csv(const std::string& path, const std::vector<TestInstance>& tests) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "test_id,device_id,true_label,label_id,score\n";
  out.precision(17);
  for (std::size_t i = 0; i < tests.size(); ++i)
    for (std::size_t y = 0; y < tests[i].candidate_scores.size(); ++y)
      out << i << "," << tests[i].device_id << "," << tests[i].true_label << "," << y << ","
          << tests[i].candidate_scores[y] << "\n";
}

}  // namespace dcp
