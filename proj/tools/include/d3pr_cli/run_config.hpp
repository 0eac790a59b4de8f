#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace d3pr::cli {

/// Every setting a subcommand may read. JSON config files use these field
/// names verbatim; flags are the kebab-case spelling ("noise_sigma" -> --noise-sigma).
struct RunConfig {
  std::string subcommand;

  std::string data;
  std::string out;
  std::string checkpoint;
  std::string test_out;
  std::string baseline;
  std::string histogram_out;

  std::uint64_t seed = 0;
  int threads = 0;  // 0 = one per hardware thread

  int sequences = 200;
  int test_sequences = 0;
  int frames = 27;
  int joints = 17;
  double noise_sigma = 0.02;
  double depth_coupling = 0.3;
  double jitter_2d = 0.001;

  int T = 50;
  double s = 0.008;
  int K = 2;

  int latent_dim = 64;
  int depth = 2;
  int heads = 4;
  int t_embed_dim = 64;
  int mlp_ratio = 2;
  bool temporal_encoding = true;

  int epochs = 30;
  int batch_size = 4;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr_decay = 0.96;

  double bin_width_mm = 5.0;
};

using FieldRef = std::variant<std::string RunConfig::*, std::uint64_t RunConfig::*, int RunConfig::*,
                              double RunConfig::*, bool RunConfig::*>;

struct FieldInfo {
  const char* name;
  FieldRef ref;
  const char* help;
};

const std::vector<FieldInfo>& run_config_fields();
const FieldInfo& field_info(const std::string& name);

/// "noise_sigma" -> "noise-sigma"
std::string kebab_case(const std::string& name);

/// Fields each subcommand reads, in display order.
const std::vector<std::string>& subcommand_fields(const std::string& subcommand);
const std::vector<std::string>& subcommand_names();

/// Parses `text` into the field; throws ConfigError naming the field.
void set_field_from_string(RunConfig& cfg, const FieldInfo& field, const std::string& text);

/// Applies a JSON object of field values. Unknown names are rejected.
void apply_json(RunConfig& cfg, const std::string& json_text);

/// Resolves defaults < config file < flags. `flags` maps field names to the
/// raw flag text of flags that were actually given.
RunConfig resolve(const std::string& subcommand, const std::string& config_json,
                  const std::map<std::string, std::string>& flags);

/// Single-line JSON of the fields `subcommand` reads.
std::string describe(const RunConfig& cfg);

}  // namespace d3pr::cli
