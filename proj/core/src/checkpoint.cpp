#include "d3pr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include <json.hpp>

#include "d3pr/errors.hpp"

namespace d3pr {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  return v;
}

void put_u64(std::string& out, std::uint64_t v) {
  v = to_le(v);
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t get_u64(const char* p) {
  std::uint64_t v;
  std::memcpy(&v, p, 8);
  return to_le(v);
}

struct ArrayWriter {
  json table = json::array();
  std::vector<double> data;

  void add(const std::string& name, std::vector<double> values) {
    table.push_back({{"name", name}, {"offset", data.size()}, {"count", values.size()}});
    data.insert(data.end(), values.begin(), values.end());
  }
};

template <class Mat>
void append_rowmajor(std::vector<double>& out, const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
}

template <class Mat>
void read_rowmajor(const double* p, Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = *p++;
}

json config_json(const DenoiserConfig& c) {
  return {{"latent_dim", c.latent_dim}, {"depth", c.depth},           {"heads", c.heads},
          {"frames", c.frames},         {"joints", c.joints},         {"t_embed_dim", c.t_embed_dim},
          {"mlp_ratio", c.mlp_ratio},   {"temporal_encoding", c.temporal_encoding}};
}

template <class T>
T field(const json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end()) throw SchemaError(name, "missing from checkpoint header");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(name, "wrong type in checkpoint header");
  }
}

DenoiserConfig config_from_json(const json& j) {
  DenoiserConfig c;
  c.latent_dim = field<int>(j, "latent_dim");
  c.depth = field<int>(j, "depth");
  c.heads = field<int>(j, "heads");
  c.frames = field<int>(j, "frames");
  c.joints = field<int>(j, "joints");
  c.t_embed_dim = field<int>(j, "t_embed_dim");
  c.mlp_ratio = field<int>(j, "mlp_ratio");
  c.temporal_encoding = field<bool>(j, "temporal_encoding");
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json header;
  header["format_version"] = kCheckpointVersion;
  header["schedule"] = {{"t_max", ckpt.schedule.t_max}, {"offset_s", ckpt.schedule.offset_s}};
  ArrayWriter arrays;

  if (ckpt.noise_model) {
    const auto& joints = ckpt.noise_model->joints;
    std::vector<double> mean_a, mean_b, cov_aa, cov_ab, cov_bb, lambda;
    std::vector<std::size_t> counts;
    for (const auto& g : joints) {
      append_rowmajor(mean_a, g.mean_a);
      append_rowmajor(mean_b, g.mean_b);
      append_rowmajor(cov_aa, g.cov_aa);
      append_rowmajor(cov_ab, g.cov_ab);
      append_rowmajor(cov_bb, g.cov_bb);
      lambda.push_back(g.lambda);
      counts.push_back(g.sample_count);
    }
    header["noise_model"] = {{"joints", joints.size()}, {"sample_count", counts}};
    arrays.add("mean_a", std::move(mean_a));
    arrays.add("mean_b", std::move(mean_b));
    arrays.add("cov_aa", std::move(cov_aa));
    arrays.add("cov_ab", std::move(cov_ab));
    arrays.add("cov_bb", std::move(cov_bb));
    arrays.add("lambda", std::move(lambda));
  } else {
    header["noise_model"] = nullptr;
  }

  header["has_denoiser"] = ckpt.denoiser.has_value();
  if (ckpt.denoiser) {
    header["denoiser"] = {{"config", config_json(ckpt.denoiser->config)}};
    arrays.add("params", ckpt.denoiser->values);
    arrays.add("error_mean", ckpt.denoiser->stats.mean);
    arrays.add("error_std", ckpt.denoiser->stats.stddev);
  }
  json log = json::array();
  for (const auto& r : ckpt.train_log) log.push_back({{"epoch", r.epoch}, {"mean_loss", r.mean_loss}, {"lr", r.lr}});
  header["train_log"] = std::move(log);
  header["arrays"] = arrays.table;

  const std::string text = header.dump();
  std::string blob(kCheckpointMagic, 8);
  put_u64(blob, text.size());
  blob += text;
  for (double v : arrays.data) put_u64(blob, std::bit_cast<std::uint64_t>(v));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("write failed: '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (blob.size() < 16 || blob.compare(0, 8, kCheckpointMagic) != 0) {
    throw ParseError(0, "'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const std::uint64_t header_len = get_u64(blob.data() + 8);
  if (header_len > blob.size() - 16) throw ParseError(0, "checkpoint header truncated");
  json header;
  try {
    header = json::parse(blob.begin() + 16, blob.begin() + 16 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::parse_error& e) {
    throw ParseError(0, std::string("checkpoint header: ") + e.what());
  }
  const int version = field<int>(header, "format_version");
  if (version != kCheckpointVersion) throw SchemaError("format_version", "unsupported " + std::to_string(version));

  const std::size_t payload_bytes = blob.size() - 16 - header_len;
  if (payload_bytes % 8 != 0) throw ParseError(0, "checkpoint payload is not a whole number of float64 values");
  std::vector<double> data(payload_bytes / 8);
  const char* base = blob.data() + 16 + header_len;
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<double>(get_u64(base + 8 * i));

  std::map<std::string, std::pair<std::size_t, std::size_t>> table;
  for (const auto& a : field<json>(header, "arrays")) {
    const auto offset = field<std::size_t>(a, "offset");
    const auto count = field<std::size_t>(a, "count");
    if (offset > data.size() || count > data.size() - offset) throw ParseError(0, "checkpoint array out of range");
    table[field<std::string>(a, "name")] = {offset, count};
  }
  auto array = [&](const std::string& name, std::size_t expected) -> const double* {
    auto it = table.find(name);
    if (it == table.end()) throw SchemaError(name, "array missing from checkpoint");
    if (it->second.second != expected) {
      throw SchemaError(name, "expected " + std::to_string(expected) + " values, found " +
                                  std::to_string(it->second.second));
    }
    return data.data() + it->second.first;
  };

  Checkpoint ckpt;
  const json sched = field<json>(header, "schedule");
  ckpt.schedule.t_max = field<int>(sched, "t_max");
  ckpt.schedule.offset_s = field<double>(sched, "offset_s");

  const json noise = field<json>(header, "noise_model");
  if (!noise.is_null()) {
    const auto joints = field<std::size_t>(noise, "joints");
    const auto counts = field<std::vector<std::size_t>>(noise, "sample_count");
    if (counts.size() != joints) throw SchemaError("sample_count", "expected one entry per joint");
    const double* mean_a = array("mean_a", joints * 3);
    const double* mean_b = array("mean_b", joints * 5);
    const double* cov_aa = array("cov_aa", joints * 9);
    const double* cov_ab = array("cov_ab", joints * 15);
    const double* cov_bb = array("cov_bb", joints * 25);
    const double* lambda = array("lambda", joints);
    CondGaussianModel model;
    model.joints.resize(joints);
    for (std::size_t j = 0; j < joints; ++j) {
      auto& g = model.joints[j];
      read_rowmajor(mean_a + 3 * j, g.mean_a);
      read_rowmajor(mean_b + 5 * j, g.mean_b);
      read_rowmajor(cov_aa + 9 * j, g.cov_aa);
      read_rowmajor(cov_ab + 15 * j, g.cov_ab);
      read_rowmajor(cov_bb + 25 * j, g.cov_bb);
      g.lambda = lambda[j];
      g.sample_count = counts[j];
    }
    ckpt.noise_model = std::move(model);
  }

  if (field<bool>(header, "has_denoiser")) {
    DenoiserParams p;
    p.config = config_from_json(field<json>(field<json>(header, "denoiser"), "config"));
    const std::size_t n = parameter_count(p.config);
    const double* values = array("params", n);
    p.values.assign(values, values + n);
    const std::size_t stat_size = static_cast<std::size_t>(p.config.joints) * 3;
    const double* mean = array("error_mean", stat_size);
    const double* stddev = array("error_std", stat_size);
    p.stats.mean.assign(mean, mean + stat_size);
    p.stats.stddev.assign(stddev, stddev + stat_size);
    ckpt.denoiser = std::move(p);
  }

  if (auto it = header.find("train_log"); it != header.end()) {
    for (const auto& r : *it) {
      ckpt.train_log.push_back({field<int>(r, "epoch"), field<double>(r, "mean_loss"), field<double>(r, "lr")});
    }
  }
  return ckpt;
}

}  // namespace d3pr
