// Command-line front end: `separate` runs the full separation pipeline on a
// mixture, `simulate` emits a seeded ground-truth bundle, `bench` compares
// the demixing rules across channel counts.

#include "ctfmnmf/container.hpp"
#include "ctfmnmf/errors.hpp"
#include "ctfmnmf/estimator.hpp"
#include "ctfmnmf/model.hpp"
#include "ctfmnmf/stft.hpp"
#include "ctfmnmf/synth.hpp"
#include "ctfmnmf/wav.hpp"
#include "ctfmnmf/wiener.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace ctfmnmf;

namespace {

constexpr const char* kVersion =
#ifdef CTFMNMF_VERSION
    CTFMNMF_VERSION;
#else
    "0.1.0";
#endif

constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumerical = 4;

// Everything beyond the estimator config that the pipeline commands need.
// Values come from the same key/value file, with CLI flags taking precedence.
struct PipelineOptions {
  int window = 1024;
  int hop = 0;  // 0 -> window / 4
  double sample_rate = 16000.0;
  int frames = 400;
  double decay = 0.5;
  int trials = 3;
  int ref_channel = -1;
  std::vector<int> channels = {4, 6, 8};

  int effective_hop() const { return hop > 0 ? hop : window / 4; }

  void absorb(const std::map<std::string, std::string>& extras) {
    for (const auto& [key, value] : extras) {
      try {
        if (key == "window") {
          window = std::stoi(value);
        } else if (key == "hop") {
          hop = std::stoi(value);
        } else if (key == "srate") {
          sample_rate = std::stod(value);
        } else if (key == "frames") {
          frames = std::stoi(value);
        } else if (key == "decay") {
          decay = std::stod(value);
        } else if (key == "trials") {
          trials = std::stoi(value);
        } else if (key == "ref_channel") {
          ref_channel = std::stoi(value);
        } else if (key == "channels") {
          channels.clear();
          std::stringstream ss(value);
          std::string item;
          while (std::getline(ss, item, ',')) channels.push_back(std::stoi(item));
        } else {
          throw ConfigError("unknown config key '" + key + "'");
        }
      } catch (const std::invalid_argument&) {
        throw ConfigError("invalid value '" + value + "' for key '" + key + "'");
      }
    }
  }
};

json config_to_json(const CtfConfig& config, const PipelineOptions& pipeline) {
  return json{{"n_sources", config.num_sources},
              {"n_channels", config.num_channels},
              {"taps", config.taps_per_source},
              {"bases", config.bases_per_source},
              {"iters", config.iterations},
              {"rule", to_string(config.update_rule)},
              {"floor", config.psd_floor},
              {"seed", config.seed},
              {"threads", config.threads},
              {"window", pipeline.window},
              {"hop", pipeline.effective_hop()},
              {"srate", pipeline.sample_rate},
              {"frames", pipeline.frames},
              {"decay", pipeline.decay}};
}

void write_manifest(const fs::path& out_dir, const json& manifest) {
  std::ofstream out(out_dir / "manifest.json");
  if (!out) throw IoError("cannot write manifest in " + out_dir.string());
  out << manifest.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> rule;
  std::optional<int> iters;
  std::optional<int> threads;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key/value config file");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "rng seed (overrides config)");
    cmd->add_option("--rule", rule, "demixing update rule: ip or iss")
        ->check(CLI::IsMember({"ip", "iss"}));
    cmd->add_option("--iters", iters, "iteration count");
    cmd->add_option("--threads", threads, "worker threads for per-bin stages");
  }

  // file first, then explicit flags on top
  void resolve(CtfConfig& config, PipelineOptions& pipeline) const {
    if (!config_path.empty()) {
      const auto extras = parse_config_file(config_path, config);
      pipeline.absorb(extras);
    }
    if (seed) config.seed = *seed;
    if (rule) config.update_rule = parse_update_rule(*rule);
    if (iters) config.iterations = *iters;
    if (threads) config.threads = *threads;
  }
};

CtfConfig default_config() {
  CtfConfig config;
  config.num_sources = 2;
  config.num_channels = 4;
  config.taps_per_source = {2, 2};
  config.bases_per_source = {3, 3};
  config.iterations = 100;
  config.update_rule = UpdateRule::Iss;
  return config;
}

MixtureSpectrogram load_mixture(const std::string& path, const CtfConfig& config,
                                const PipelineOptions& pipeline,
                                Spectrogram& meta) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".spec") {
    meta = read_spectrogram(path);
  } else {
    const TimeSignal signal = read_wav(path);
    if (signal.channels() != config.num_channels)
      throw ConfigError("mixture has " + std::to_string(signal.channels()) +
                        " channels but the config expects " +
                        std::to_string(config.num_channels));
    meta = forward_stft(signal, pipeline.window, pipeline.effective_hop());
  }
  if (meta.channels != config.num_channels)
    throw ConfigError("mixture has " + std::to_string(meta.channels) +
                      " channels but the config expects " +
                      std::to_string(config.num_channels));
  return MixtureSpectrogram::from_spectrogram(meta);
}

int cmd_separate(const CommonFlags& flags, const std::string& mixture_path,
                 std::optional<int> ref_channel) {
  CtfConfig config = default_config();
  PipelineOptions pipeline;
  flags.resolve(config, pipeline);
  if (ref_channel) pipeline.ref_channel = *ref_channel;
  config.validate();

  const fs::path out_dir(flags.out_dir);
  fs::create_directories(out_dir);

  json manifest{{"command", "separate"},
                {"version", kVersion},
                {"config", config_to_json(config, pipeline)},
                {"inputs", json{{"mixture", mixture_path}}},
                {"errors", json::array()}};

  Spectrogram meta;
  const MixtureSpectrogram mixture = load_mixture(mixture_path, config, pipeline, meta);

  const auto t0 = std::chrono::steady_clock::now();
  try {
    const SeparationResult result = run(config, mixture);
    const auto images =
        reconstruct_images(result.demixing, result.factors, mixture, config);

    json outputs;
    for (int n = 0; n < config.num_sources; ++n) {
      const TimeSignal source =
          image_to_signal(images[static_cast<size_t>(n)], meta, pipeline.ref_channel);
      const std::string name = "src" + std::to_string(n + 1) + ".wav";
      write_wav((out_dir / name).string(), source);
      outputs["sources"].push_back(name);
    }
    write_text(out_dir / "trace.csv", result.trace.to_csv());
    outputs["trace"] = "trace.csv";
    manifest["outputs"] = outputs;

    const auto t1 = std::chrono::steady_clock::now();
    manifest["timing_ms"] =
        json{{"total", std::chrono::duration<double, std::milli>(t1 - t0).count()},
             {"demix", result.trace.total_demix_ms()},
             {"mu", result.trace.total_mu_ms()},
             {"rescale", result.trace.total_rescale_ms()}};
    manifest["final_objective"] = result.trace.objective.empty()
                                      ? json()
                                      : json(result.trace.objective.back());
    write_manifest(out_dir, manifest);
  } catch (const DegeneracyError& e) {
    manifest["errors"].push_back(json{{"message", e.what()},
                                      {"iteration", e.iteration},
                                      {"bin", e.bin},
                                      {"row", e.row}});
    write_manifest(out_dir, manifest);
    std::cerr << "numerical degeneracy: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}

int cmd_simulate(const CommonFlags& flags) {
  CtfConfig config = default_config();
  PipelineOptions pipeline;
  flags.resolve(config, pipeline);
  config.validate();
  for (int k : config.bases_per_source)
    if (k != config.bases_per_source[0])
      throw ConfigError("simulate draws sources with a single basis count");

  const fs::path out_dir(flags.out_dir);
  fs::create_directories(out_dir);

  const int num_bins = pipeline.window / 2 + 1;
  json manifest{{"command", "simulate"},
                {"version", kVersion},
                {"config", config_to_json(config, pipeline)},
                {"taps", config.taps_per_source},
                {"errors", json::array()}};

  try {
    const NmfSources sources =
        sample_nmf_sources(num_bins, pipeline.frames, config.num_sources,
                           config.bases_per_source[0], config.seed);
    const CtfFilters filters =
        sample_ctf_filters(config.num_channels, config.num_sources,
                           config.taps_per_source, pipeline.decay,
                           config.seed + 1, num_bins);
    const CtfMixture mix = generate_ctf_mixture(sources.spectrograms, filters);

    Spectrogram meta;
    meta.window_len = pipeline.window;
    meta.hop = pipeline.effective_hop();
    meta.sample_rate = pipeline.sample_rate;
    meta.original_length =
        static_cast<std::int64_t>(pipeline.frames - 1) * meta.hop;

    json outputs;
    const Spectrogram mixture_spec = mix.mixture.to_spectrogram(meta);
    write_spectrogram((out_dir / "mixture.spec").string(), mixture_spec);
    write_wav((out_dir / "mixture.wav").string(), inverse_stft(mixture_spec));
    outputs["mixture"] = {"mixture.spec", "mixture.wav"};

    for (int n = 0; n < config.num_sources; ++n) {
      const std::string base = "src" + std::to_string(n + 1) + "_image";
      const Spectrogram image_spec =
          mix.images[static_cast<size_t>(n)].to_spectrogram(meta);
      write_spectrogram((out_dir / (base + ".spec")).string(), image_spec);
      write_wav((out_dir / (base + ".wav")).string(), inverse_stft(image_spec));
      outputs["images"].push_back(base + ".spec");
    }
    write_filters((out_dir / "filters.ctf").string(), filters);
    write_factors((out_dir / "factors.nmf").string(), sources.factors);
    outputs["filters"] = "filters.ctf";
    outputs["factors"] = "factors.nmf";
    manifest["outputs"] = outputs;
    write_manifest(out_dir, manifest);
  } catch (const DegeneracyError& e) {
    manifest["errors"].push_back(json{{"message", e.what()}, {"bin", e.bin}});
    write_manifest(out_dir, manifest);
    std::cerr << "simulation failed: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}

int cmd_bench(const CommonFlags& flags, const std::vector<int>& channels_flag) {
  CtfConfig base = default_config();
  PipelineOptions pipeline;
  flags.resolve(base, pipeline);
  if (!channels_flag.empty()) pipeline.channels = channels_flag;

  for (int m : pipeline.channels)
    if (m < 2 || m % 2 != 0)
      throw ConfigError("bench channel counts must be even and >= 2 so that "
                        "two sources split the taps evenly, got " +
                        std::to_string(m));

  const fs::path out_dir(flags.out_dir);
  fs::create_directories(out_dir);

  const int num_bins = pipeline.window / 2 + 1;
  std::ostringstream csv;
  csv << "M,rule,total_ms,demix_ms,mu_ms,seed\n";

  for (int m : pipeline.channels) {
    CtfConfig config = base;
    config.num_channels = m;
    config.taps_per_source = {m / 2, m / 2};
    config.bases_per_source = {base.bases_per_source[0], base.bases_per_source[0]};
    config.num_sources = 2;
    config.validate();

    for (int trial = 0; trial < pipeline.trials; ++trial) {
      const std::uint64_t seed = base.seed + static_cast<std::uint64_t>(trial);
      const NmfSources sources = sample_nmf_sources(
          num_bins, pipeline.frames, 2, config.bases_per_source[0], seed);
      const CtfFilters filters = sample_ctf_filters(
          m, 2, config.taps_per_source, pipeline.decay, seed + 1, num_bins);
      const MixtureSpectrogram mixture =
          generate_ctf_mixture(sources.spectrograms, filters).mixture;

      for (UpdateRule rule : {UpdateRule::Ip, UpdateRule::Iss}) {
        config.update_rule = rule;
        config.seed = seed;
        const auto t0 = std::chrono::steady_clock::now();
        const SeparationResult result = run(config, mixture);
        const auto t1 = std::chrono::steady_clock::now();
        csv << m << ',' << to_string(rule) << ','
            << std::chrono::duration<double, std::milli>(t1 - t0).count() << ','
            << result.trace.total_demix_ms() << ','
            << result.trace.total_mu_ms() << ',' << seed << '\n';
      }
    }
  }

  write_text(out_dir / "bench.csv", csv.str());
  json manifest{{"command", "bench"},
                {"version", kVersion},
                {"config", config_to_json(base, pipeline)},
                {"channels", pipeline.channels},
                {"trials", pipeline.trials},
                {"outputs", json{{"csv", "bench.csv"}}},
                {"errors", json::array()}};
  write_manifest(out_dir, manifest);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CTF-MNMF blind source separation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags separate_flags, simulate_flags, bench_flags;
  std::string mixture_path;
  std::vector<int> bench_channels;
  std::optional<int> ref_channel;

  CLI::App* separate = app.add_subcommand(
      "separate", "separate a multichannel mixture into source images");
  separate->add_option("mixture", mixture_path, "input WAV or .spec container")
      ->required();
  separate_flags.attach(separate);
  separate->add_option("--ref-channel", ref_channel,
                       "write only this channel of each source image");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "generate a seeded synthetic ground-truth bundle");
  simulate_flags.attach(simulate);

  CLI::App* bench = app.add_subcommand(
      "bench", "compare demixing rules across channel counts");
  bench_flags.attach(bench);
  bench->add_option("--channels", bench_channels,
                    "channel counts to benchmark (default 4 6 8)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (separate->parsed())
      return cmd_separate(separate_flags, mixture_path, ref_channel);
    if (simulate->parsed()) return cmd_simulate(simulate_flags);
    if (bench->parsed()) return cmd_bench(bench_flags, bench_channels);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const DegeneracyError& e) {
    std::cerr << "numerical degeneracy: " << e.what() << "\n";
    return kExitNumerical;
  }
  return 0;
}
