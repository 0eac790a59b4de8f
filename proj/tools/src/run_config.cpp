#include "d3pr_cli/run_config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdlib>

#include <json.hpp>

#include "d3pr/errors.hpp"

namespace d3pr::cli {

namespace {

using nlohmann::json;

#define D3PR_FIELD(name, help) FieldInfo{#name, &RunConfig::name, help}

const std::vector<FieldInfo> kFields = {
    D3PR_FIELD(data, "input dataset (JSON Lines)"),
    D3PR_FIELD(out, "output path"),
    D3PR_FIELD(checkpoint, "checkpoint file to read"),
    D3PR_FIELD(test_out, "output path for the held-out split"),
    D3PR_FIELD(baseline, "dataset evaluated as the comparison baseline"),
    D3PR_FIELD(histogram_out, "TSV dump of the per-sequence MPJPE histogram"),
    D3PR_FIELD(seed, "random seed"),
    D3PR_FIELD(threads, "worker threads, 0 for all cores"),
    D3PR_FIELD(sequences, "number of sequences to synthesize"),
    D3PR_FIELD(test_sequences, "additional held-out sequences"),
    D3PR_FIELD(frames, "frames per sequence (N)"),
    D3PR_FIELD(joints, "joints per frame (J)"),
    D3PR_FIELD(noise_sigma, "base 3D error sigma in meters"),
    D3PR_FIELD(depth_coupling, "depth coupling coefficient of the error"),
    D3PR_FIELD(jitter_2d, "2D keypoint jitter sigma, normalized units"),
    D3PR_FIELD(T, "maximum diffusion timestep"),
    D3PR_FIELD(s, "cosine schedule offset"),
    D3PR_FIELD(K, "reverse steps"),
    D3PR_FIELD(latent_dim, "denoiser width (C)"),
    D3PR_FIELD(depth, "denoiser blocks (L)"),
    D3PR_FIELD(heads, "attention heads"),
    D3PR_FIELD(t_embed_dim, "timestep embedding size"),
    D3PR_FIELD(mlp_ratio, "MLP hidden size / C"),
    D3PR_FIELD(temporal_encoding, "add sinusoidal frame encoding (true/false)"),
    D3PR_FIELD(epochs, "training epochs"),
    D3PR_FIELD(batch_size, "sequences per optimizer step"),
    D3PR_FIELD(lr, "Adam learning rate"),
    D3PR_FIELD(beta1, "Adam beta1"),
    D3PR_FIELD(beta2, "Adam beta2"),
    D3PR_FIELD(eps, "Adam epsilon"),
    D3PR_FIELD(lr_decay, "learning-rate factor per epoch"),
    D3PR_FIELD(bin_width_mm, "histogram bin width in millimeters"),
};

#undef D3PR_FIELD

const std::map<std::string, std::vector<std::string>> kSubcommandFields = {
    {"synth", {"out", "test_out", "seed", "sequences", "test_sequences", "frames", "joints", "noise_sigma",
               "depth_coupling", "jitter_2d"}},
    {"fit-noise", {"data", "out", "T", "s"}},
    {"train", {"data", "checkpoint", "out", "seed", "threads", "T", "s", "frames", "joints", "latent_dim", "depth",
               "heads", "t_embed_dim", "mlp_ratio", "temporal_encoding", "epochs", "batch_size", "lr", "beta1",
               "beta2", "eps", "lr_decay"}},
    {"refine", {"data", "checkpoint", "out", "K", "threads"}},
    {"eval", {"data", "baseline", "out", "histogram_out", "bin_width_mm"}},
    {"inspect-schedule", {"T", "s", "out"}},
};

template <class T>
T parse_number(const std::string& field, const std::string& text) {
  T value{};
  const char* begin = text.data();
  const char* end = begin + text.size();
  if constexpr (std::is_floating_point_v<T>) {
    char* stop = nullptr;
    errno = 0;
    value = std::strtod(begin, &stop);
    if (text.empty() || stop != end || errno == ERANGE) throw ConfigError(field, "invalid number '" + text + "'");
  } else {
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (text.empty() || ec != std::errc{} || ptr != end) throw ConfigError(field, "invalid integer '" + text + "'");
  }
  return value;
}

void set_field_from_json(RunConfig& cfg, const FieldInfo& f, const json& v) {
  const std::string name = f.name;
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          if (!v.is_string()) throw ConfigError(name, "expected a string");
        } else if constexpr (std::is_same_v<T, bool>) {
          if (!v.is_boolean()) throw ConfigError(name, "expected true or false");
        } else if constexpr (std::is_same_v<T, std::uint64_t>) {
          if (!v.is_number_unsigned()) throw ConfigError(name, "expected a non-negative integer");
        } else if constexpr (std::is_integral_v<T>) {
          if (!v.is_number_integer()) throw ConfigError(name, "expected an integer");
          const auto wide = v.get<long long>();
          if (wide < std::numeric_limits<T>::min() || wide > std::numeric_limits<T>::max()) {
            throw ConfigError(name, "out of range");
          }
        } else {
          if (!v.is_number()) throw ConfigError(name, "expected a number");
        }
        cfg.*member = v.get<T>();
      },
      f.ref);
}

nlohmann::ordered_json field_to_json(const RunConfig& cfg, const FieldInfo& f) {
  return std::visit([&](auto member) { return nlohmann::ordered_json(cfg.*member); }, f.ref);
}

}  // namespace

const std::vector<FieldInfo>& run_config_fields() { return kFields; }

const FieldInfo& field_info(const std::string& name) {
  auto it = std::find_if(kFields.begin(), kFields.end(), [&](const FieldInfo& f) { return name == f.name; });
  if (it == kFields.end()) throw ConfigError(name, "unknown field");
  return *it;
}

std::string kebab_case(const std::string& name) {
  std::string out = name;
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

const std::vector<std::string>& subcommand_fields(const std::string& subcommand) {
  auto it = kSubcommandFields.find(subcommand);
  if (it == kSubcommandFields.end()) throw ConfigError("subcommand", "unknown subcommand '" + subcommand + "'");
  return it->second;
}

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = {"synth", "fit-noise", "train", "refine", "eval", "inspect-schedule"};
  return names;
}

void set_field_from_string(RunConfig& cfg, const FieldInfo& f, const std::string& text) {
  const std::string name = f.name;
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(cfg.*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          cfg.*member = text;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (text == "true" || text == "1") cfg.*member = true;
          else if (text == "false" || text == "0") cfg.*member = false;
          else throw ConfigError(name, "expected true or false, got '" + text + "'");
        } else {
          cfg.*member = parse_number<T>(name, text);
        }
      },
      f.ref);
}

void apply_json(RunConfig& cfg, const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("config file: ") + e.what());
  }
  if (!doc.is_object()) throw ParseError(0, "config file: expected a JSON object");
  for (const auto& [key, value] : doc.items()) set_field_from_json(cfg, field_info(key), value);
}

RunConfig resolve(const std::string& subcommand, const std::string& config_json,
                  const std::map<std::string, std::string>& flags) {
  subcommand_fields(subcommand);
  RunConfig cfg;
  cfg.subcommand = subcommand;
  if (!config_json.empty()) apply_json(cfg, config_json);
  for (const auto& [name, text] : flags) set_field_from_string(cfg, field_info(name), text);
  return cfg;
}

std::string describe(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["subcommand"] = cfg.subcommand;
  j["seed"] = cfg.seed;
  for (const auto& name : subcommand_fields(cfg.subcommand)) j[name] = field_to_json(cfg, field_info(name));
  return j.dump();
}

}  // namespace d3pr::cli
