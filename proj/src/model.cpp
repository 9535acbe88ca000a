#include "ctfmnmf/model.hpp"

#include "ctfmnmf/errors.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

namespace ctfmnmf {

std::string to_string(UpdateRule rule) {
  return rule == UpdateRule::Ip ? "ip" : "iss";
}

UpdateRule parse_update_rule(const std::string& name) {
  if (name == "ip" || name == "IP") return UpdateRule::Ip;
  if (name == "iss" || name == "ISS") return UpdateRule::Iss;
  throw ConfigError("unknown update rule '" + name + "' (expected ip or iss)");
}

int CtfConfig::total_taps() const {
  return std::accumulate(taps_per_source.begin(), taps_per_source.end(), 0);
}

int CtfConfig::row_offset(int source) const {
  int offset = 0;
  for (int n = 0; n < source; ++n) offset += taps_per_source[n];
  return offset;
}

void CtfConfig::validate() const {
  if (num_sources < 1) throw ConfigError("n_sources must be >= 1");
  if (num_channels < 1) throw ConfigError("n_channels must be >= 1");
  if (static_cast<int>(taps_per_source.size()) != num_sources)
    throw ConfigError("taps list must have one entry per source");
  if (static_cast<int>(bases_per_source.size()) != num_sources)
    throw ConfigError("bases list must have one entry per source");
  for (int l : taps_per_source)
    if (l < 1) throw ConfigError("every tap count must be >= 1");
  for (int k : bases_per_source)
    if (k < 1) throw ConfigError("every basis count must be >= 1");
  if (total_taps() != num_channels)
    throw ConfigError("sum of taps (" + std::to_string(total_taps()) +
                      ") must equal n_channels (" + std::to_string(num_channels) +
                      "): the demixing system must be square");
  if (iterations < 0) throw ConfigError("iters must be >= 0");
  if (!(psd_floor > 0.0)) throw ConfigError("floor must be > 0");
  if (threads < 1) throw ConfigError("threads must be >= 1");
}

namespace {

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    values.push_back(std::stoi(item));
  }
  return values;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

bool apply_config_key(CtfConfig& config, const std::string& key,
                      const std::string& value) {
  try {
    if (key == "n_sources") {
      config.num_sources = std::stoi(value);
    } else if (key == "n_channels") {
      config.num_channels = std::stoi(value);
    } else if (key == "taps") {
      config.taps_per_source = parse_int_list(value);
    } else if (key == "bases") {
      config.bases_per_source = parse_int_list(value);
    } else if (key == "iters") {
      config.iterations = std::stoi(value);
    } else if (key == "rule") {
      config.update_rule = parse_update_rule(value);
    } else if (key == "floor") {
      config.psd_floor = std::stod(value);
    } else if (key == "seed") {
      config.seed = std::stoull(value);
    } else if (key == "threads") {
      config.threads = std::stoi(value);
    } else {
      return false;
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("invalid value '" + value + "' for key '" + key + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError("value out of range for key '" + key + "'");
  }
  return true;
}

std::map<std::string, std::string> parse_config_file(const std::string& path,
                                                     CtfConfig& config) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);

  std::map<std::string, std::string> extras;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (!apply_config_key(config, key, value)) extras[key] = value;
  }
  return extras;
}

int flatten_index(const CtfConfig& config, int source, int tap) {
  if (source < 0 || source >= config.num_sources)
    throw ConfigError("flatten_index: source " + std::to_string(source) +
                      " out of range");
  if (tap < 0 || tap >= config.taps_per_source[source])
    throw ConfigError("flatten_index: tap " + std::to_string(tap) +
                      " out of range for source " + std::to_string(source));
  return config.row_offset(source) + tap;
}

std::pair<int, int> unflatten_index(const CtfConfig& config, int row) {
  if (row < 0 || row >= config.total_taps())
    throw ConfigError("unflatten_index: row " + std::to_string(row) +
                      " out of range");
  int source = 0;
  while (row >= config.taps_per_source[source]) {
    row -= config.taps_per_source[source];
    ++source;
  }
  return {source, row};
}

double MixtureSpectrogram::mean_power() const {
  double total = 0.0;
  std::int64_t count = 0;
  for (const auto& x : bins) {
    total += x.squaredNorm();
    count += x.size();
  }
  return count > 0 ? total / static_cast<double>(count) : 0.0;
}

MixtureSpectrogram MixtureSpectrogram::from_spectrogram(const Spectrogram& spec) {
  MixtureSpectrogram mix;
  mix.bins.resize(static_cast<size_t>(spec.bins));
  for (int i = 0; i < spec.bins; ++i) {
    Eigen::MatrixXcd& x = mix.bins[static_cast<size_t>(i)];
    x.resize(spec.channels, spec.frames);
    for (int j = 0; j < spec.frames; ++j)
      for (int c = 0; c < spec.channels; ++c) x(c, j) = spec.at(i, j, c);
  }
  return mix;
}

Spectrogram MixtureSpectrogram::to_spectrogram(const Spectrogram& meta) const {
  Spectrogram spec;
  spec.resize(num_bins(), num_frames(), num_channels());
  spec.window_len = meta.window_len;
  spec.hop = meta.hop;
  spec.sample_rate = meta.sample_rate;
  spec.original_length = meta.original_length;
  for (int i = 0; i < spec.bins; ++i)
    for (int j = 0; j < spec.frames; ++j)
      for (int c = 0; c < spec.channels; ++c)
        spec.at(i, j, c) = bins[static_cast<size_t>(i)](c, j);
  return spec;
}

NmfFactors random_factors(const CtfConfig& config, int num_bins, int num_frames,
                          double floor_abs, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uniform(0.1, 1.0);
  NmfFactors factors;
  factors.floor = floor_abs;
  factors.bases.resize(static_cast<size_t>(config.num_sources));
  factors.activations.resize(static_cast<size_t>(config.num_sources));
  for (int n = 0; n < config.num_sources; ++n) {
    const int k = config.bases_per_source[static_cast<size_t>(n)];
    Eigen::MatrixXd& b = factors.bases[static_cast<size_t>(n)];
    Eigen::MatrixXd& v = factors.activations[static_cast<size_t>(n)];
    b.resize(num_bins, k);
    v.resize(k, num_frames);
    for (int i = 0; i < num_bins; ++i)
      for (int c = 0; c < k; ++c) b(i, c) = uniform(rng);
    for (int c = 0; c < k; ++c)
      for (int j = 0; j < num_frames; ++j) v(c, j) = uniform(rng);
  }
  return factors;
}

Eigen::MatrixXd compute_psd(const NmfFactors& factors, int source) {
  Eigen::MatrixXd lambda =
      factors.bases[static_cast<size_t>(source)] *
      factors.activations[static_cast<size_t>(source)];
  return lambda.cwiseMax(factors.floor);
}

double delayed_psd(const Eigen::MatrixXd& lambda, int bin, int frame, int tap) {
  return lambda(bin, std::max(frame - tap, 0));
}

std::vector<Eigen::MatrixXcd> identity_demixing(const CtfConfig& config,
                                                int num_bins) {
  std::vector<Eigen::MatrixXcd> demixing(static_cast<size_t>(num_bins));
  for (auto& w : demixing)
    w = Eigen::MatrixXcd::Identity(config.total_taps(), config.num_channels);
  return demixing;
}

}  // namespace ctfmnmf
