#include "d3pr/denoiser.hpp"

#include <cmath>
#include <string>

#include "d3pr/errors.hpp"
#include "layers.hpp"

namespace d3pr {

namespace {

using nn::Index;

class LayoutBuilder {
public:
  std::size_t add(std::string name, std::size_t rows, std::size_t cols) {
    const std::size_t offset = total_;
    blocks_.push_back({std::move(name), offset, rows, cols});
    total_ += rows * cols;
    return offset;
  }

  nn::Linear linear(const std::string& name, Index in, Index out) {
    nn::Linear l;
    l.in = in;
    l.out = out;
    l.weight = add(name + ".weight", static_cast<std::size_t>(in), static_cast<std::size_t>(out));
    l.bias = add(name + ".bias", 1, static_cast<std::size_t>(out));
    return l;
  }

  nn::LayerNorm norm(const std::string& name, Index dim) {
    nn::LayerNorm n;
    n.dim = dim;
    n.gamma = add(name + ".gamma", 1, static_cast<std::size_t>(dim));
    n.beta = add(name + ".beta", 1, static_cast<std::size_t>(dim));
    return n;
  }

  template <class Attn>
  Attn attention(const std::string& name, Index dim, Index heads) {
    Attn a;
    a.heads = heads;
    a.q = linear(name + ".q", dim, dim);
    a.k = linear(name + ".k", dim, dim);
    a.v = linear(name + ".v", dim, dim);
    a.o = linear(name + ".o", dim, dim);
    return a;
  }

  std::vector<ParamBlock> take() { return std::move(blocks_); }
  std::size_t total() const { return total_; }

private:
  std::vector<ParamBlock> blocks_;
  std::size_t total_ = 0;
};

struct Block {
  nn::Linear time_proj;
  nn::LayerNorm spatial_norm;
  nn::GroupedSelfAttention spatial;
  nn::LayerNorm temporal_norm;
  nn::GroupedSelfAttention temporal;
  nn::LayerNorm fusion_norm;
  nn::TimestepFusion fusion;
  nn::LayerNorm mlp_norm;
  nn::Mlp mlp;
};

struct Network {
  nn::Linear input;
  std::size_t joint_embedding = 0;
  std::vector<Block> blocks;
  nn::LayerNorm output_norm;
  nn::Linear output;
  std::vector<ParamBlock> layout;
  std::size_t size = 0;
};

Network build_network(const DenoiserConfig& config) {
  const Index c = config.latent_dim;
  const Index hidden = static_cast<Index>(config.mlp_ratio) * c;
  LayoutBuilder b;
  Network net;
  net.input = b.linear("input", 5, c);
  net.joint_embedding = b.add("joint_embedding", static_cast<std::size_t>(config.joints), static_cast<std::size_t>(c));
  for (int l = 0; l < config.depth; ++l) {
    const std::string p = "block" + std::to_string(l);
    Block blk;
    blk.time_proj = b.linear(p + ".time_proj", config.t_embed_dim, c);
    blk.spatial_norm = b.norm(p + ".spatial_norm", c);
    blk.spatial = b.attention<nn::GroupedSelfAttention>(p + ".spatial_attn", c, config.heads);
    blk.temporal_norm = b.norm(p + ".temporal_norm", c);
    blk.temporal = b.attention<nn::GroupedSelfAttention>(p + ".temporal_attn", c, config.heads);
    blk.fusion_norm = b.norm(p + ".fusion_norm", c);
    blk.fusion = b.attention<nn::TimestepFusion>(p + ".fusion_attn", c, config.heads);
    blk.mlp_norm = b.norm(p + ".mlp_norm", c);
    blk.mlp.fc1 = b.linear(p + ".mlp.fc1", c, hidden);
    blk.mlp.fc2 = b.linear(p + ".mlp.fc2", hidden, c);
    net.blocks.push_back(blk);
  }
  net.output_norm = b.norm("output_norm", c);
  net.output = b.linear("output", c, 3);
  net.size = b.total();
  net.layout = b.take();
  return net;
}

struct BlockCache {
  nn::LayerNormCache spatial_norm, temporal_norm, fusion_norm, mlp_norm;
  nn::AttentionCache spatial, temporal;
  nn::FusionCache fusion;
  nn::MlpCache mlp;
};

struct ForwardCache {
  RowMatrix input;
  RowMatrix embedding;  // 1 x E
  std::vector<BlockCache> blocks;
  nn::LayerNormCache output_norm;
  RowMatrix normed;
};

void check_inputs(const DenoiserConfig& config, const PoseSeq2D& y, const PoseSeq3D& x_t) {
  require_same_shape(y, x_t, "denoiser");
  if (x_t.frames() != static_cast<std::size_t>(config.frames) ||
      x_t.joints() != static_cast<std::size_t>(config.joints)) {
    throw ConfigError("denoiser", "configured for " + std::to_string(config.frames) + " frames x " +
                                      std::to_string(config.joints) + " joints, got " +
                                      std::to_string(x_t.frames()) + " x " + std::to_string(x_t.joints()));
  }
}

void check_params(const DenoiserParams& params) {
  if (params.values.size() != parameter_count(params.config)) {
    throw ConfigError("params", "expected " + std::to_string(parameter_count(params.config)) +
                                    " values, have " + std::to_string(params.values.size()));
  }
  const std::size_t expected = static_cast<std::size_t>(params.config.joints) * 3;
  if (params.stats.mean.size() != expected || params.stats.stddev.size() != expected) {
    throw ConfigError("params", "error statistics do not match joint count");
  }
}

/// Returns the z-scored prediction, tokens x 3.
RowMatrix forward_impl(const Network& net, const DenoiserParams& params, const PoseSeq2D& y,
                       const PoseSeq3D& x_t, int t, ForwardCache* cache) {
  const DenoiserConfig& cfg = params.config;
  const double* p = params.values.data();
  const Index joints = cfg.joints;
  const Index frames = cfg.frames;
  const Index tokens = frames * joints;
  const Index c = cfg.latent_dim;

  RowMatrix input(tokens, 5);
  input.leftCols(3) = x_t.tokens();
  input.rightCols(2) = y.tokens();

  RowMatrix h;
  net.input.forward(p, input, h);
  const nn::ConstMatMap joint_emb(p + net.joint_embedding, joints, c);
  for (Index n = 0; n < frames; ++n) {
    h.middleRows(n * joints, joints) += joint_emb;
    if (cfg.temporal_encoding) {
      const Eigen::RowVectorXd pe = timestep_embedding(static_cast<int>(n), static_cast<int>(c)).transpose();
      h.middleRows(n * joints, joints).rowwise() += pe;
    }
  }

  const RowMatrix emb = timestep_embedding(t, cfg.t_embed_dim).transpose();
  const nn::GroupLayout spatial{frames, joints, nn::GroupAxis::Spatial};
  const nn::GroupLayout temporal{frames, joints, nn::GroupAxis::Temporal};

  BlockCache scratch;
  if (cache) {
    cache->input = input;
    cache->embedding = emb;
    cache->blocks.resize(net.blocks.size());
  }
  RowMatrix z, out, tau;
  for (std::size_t l = 0; l < net.blocks.size(); ++l) {
    const Block& blk = net.blocks[l];
    BlockCache& bc = cache ? cache->blocks[l] : scratch;

    blk.spatial_norm.forward(p, h, z, bc.spatial_norm);
    blk.spatial.forward(p, z, spatial, out, bc.spatial);
    h += out;

    blk.temporal_norm.forward(p, h, z, bc.temporal_norm);
    blk.temporal.forward(p, z, temporal, out, bc.temporal);
    h += out;

    blk.time_proj.forward(p, emb, tau);
    blk.fusion_norm.forward(p, h, z, bc.fusion_norm);
    blk.fusion.forward(p, z, tau, out, bc.fusion);
    h += out;

    blk.mlp_norm.forward(p, h, z, bc.mlp_norm);
    blk.mlp.forward(p, z, out, bc.mlp);
    h += out;
  }

  nn::LayerNormCache out_norm_scratch;
  RowMatrix normed;
  net.output_norm.forward(p, h, normed, cache ? cache->output_norm : out_norm_scratch);
  RowMatrix pred;
  net.output.forward(p, normed, pred);
  if (cache) cache->normed = std::move(normed);
  return pred;
}

PoseSeq3D to_meters(const DenoiserParams& params, const RowMatrix& z) {
  PoseSeq3D e(static_cast<std::size_t>(params.config.frames), static_cast<std::size_t>(params.config.joints));
  e.tokens() = z;
  return params.stats.denormalize(e);
}

void backward_impl(const Network& net, const DenoiserParams& params, const ForwardCache& cache,
                   const RowMatrix& d_pred, double* grads) {
  const DenoiserConfig& cfg = params.config;
  const double* p = params.values.data();
  const Index joints = cfg.joints;
  const Index frames = cfg.frames;
  const Index c = cfg.latent_dim;
  const nn::GroupLayout spatial{frames, joints, nn::GroupAxis::Spatial};
  const nn::GroupLayout temporal{frames, joints, nn::GroupAxis::Temporal};

  RowMatrix d_normed, dh, dz, dx, dtau;
  net.output.backward(p, grads, cache.normed, d_pred, &d_normed);
  net.output_norm.backward(p, grads, cache.output_norm, d_normed, dh);

  for (std::size_t l = net.blocks.size(); l-- > 0;) {
    const Block& blk = net.blocks[l];
    const BlockCache& bc = cache.blocks[l];

    blk.mlp.backward(p, grads, bc.mlp, dh, dz);
    blk.mlp_norm.backward(p, grads, bc.mlp_norm, dz, dx);
    dh += dx;

    dtau = RowMatrix::Zero(1, c);
    blk.fusion.backward(p, grads, bc.fusion, dh, dz, dtau);
    blk.fusion_norm.backward(p, grads, bc.fusion_norm, dz, dx);
    dh += dx;
    blk.time_proj.backward(p, grads, cache.embedding, dtau, nullptr);

    blk.temporal.backward(p, grads, bc.temporal, temporal, dh, dz);
    blk.temporal_norm.backward(p, grads, bc.temporal_norm, dz, dx);
    dh += dx;

    blk.spatial.backward(p, grads, bc.spatial, spatial, dh, dz);
    blk.spatial_norm.backward(p, grads, bc.spatial_norm, dz, dx);
    dh += dx;
  }

  nn::MatMap d_joint(grads + net.joint_embedding, joints, c);
  for (Index n = 0; n < frames; ++n) d_joint += dh.middleRows(n * joints, joints);
  net.input.backward(p, grads, cache.input, dh, nullptr);
}

}  // namespace

void DenoiserConfig::validate() const {
  if (latent_dim < 1) throw ConfigError("latent_dim", "must be >= 1");
  if (heads < 1) throw ConfigError("heads", "must be >= 1");
  if (latent_dim % heads != 0) throw ConfigError("heads", "latent_dim must be divisible by heads");
  if (depth < 1) throw ConfigError("depth", "must be >= 1");
  if (frames < 1) throw ConfigError("frames", "must be >= 1");
  if (joints < 1) throw ConfigError("joints", "must be >= 1");
  if (t_embed_dim < 2 || t_embed_dim % 2 != 0) throw ConfigError("t_embed_dim", "must be even and >= 2");
  if (mlp_ratio < 1) throw ConfigError("mlp_ratio", "must be >= 1");
  if (temporal_encoding && latent_dim % 2 != 0) {
    throw ConfigError("latent_dim", "must be even when temporal encoding is enabled");
  }
}

std::size_t parameter_count(const DenoiserConfig& config) {
  const std::size_t c = static_cast<std::size_t>(config.latent_dim);
  const std::size_t j = static_cast<std::size_t>(config.joints);
  const std::size_t e = static_cast<std::size_t>(config.t_embed_dim);
  const std::size_t hidden = static_cast<std::size_t>(config.mlp_ratio) * c;
  const std::size_t per_block = e * c + c + 8 * c + 3 * (4 * c * c + 4 * c) + 2 * c * hidden + hidden + c;
  return c * (j + 11) + 3 + static_cast<std::size_t>(config.depth) * per_block;
}

std::vector<ParamBlock> parameter_layout(const DenoiserConfig& config) {
  config.validate();
  return build_network(config).layout;
}

ErrorStats ErrorStats::from_errors(std::span<const PoseSeq3D> errors) {
  if (errors.empty()) throw FitError("ErrorStats: no error sequences");
  const std::size_t joints = errors.front().joints();
  std::vector<double> sum(joints * 3, 0.0), sq(joints * 3, 0.0);
  std::size_t count = 0;
  for (const auto& e : errors) {
    if (e.joints() != joints) throw ShapeError("ErrorStats: inconsistent joint counts");
    for (std::size_t n = 0; n < e.frames(); ++n) {
      for (std::size_t k = 0; k < joints * 3; ++k) sum[k] += e.values()[n * joints * 3 + k];
    }
    count += e.frames();
  }
  ErrorStats s;
  s.mean.resize(joints * 3);
  for (std::size_t k = 0; k < joints * 3; ++k) s.mean[k] = sum[k] / static_cast<double>(count);
  for (const auto& e : errors) {
    for (std::size_t n = 0; n < e.frames(); ++n) {
      for (std::size_t k = 0; k < joints * 3; ++k) {
        const double d = e.values()[n * joints * 3 + k] - s.mean[k];
        sq[k] += d * d;
      }
    }
  }
  s.stddev.resize(joints * 3);
  const double denom = count > 1 ? static_cast<double>(count - 1) : 1.0;
  for (std::size_t k = 0; k < joints * 3; ++k) s.stddev[k] = std::max(std::sqrt(sq[k] / denom), kMinStd);
  return s;
}

ErrorStats ErrorStats::identity(std::size_t joints) {
  return {std::vector<double>(joints * 3, 0.0), std::vector<double>(joints * 3, 1.0)};
}

PoseSeq3D ErrorStats::normalize(const PoseSeq3D& e) const {
  if (e.joints() * 3 != mean.size()) throw ShapeError("ErrorStats::normalize: joint count mismatch");
  PoseSeq3D out = e;
  auto v = out.values();
  const std::size_t stride = mean.size();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (v[i] - mean[i % stride]) / stddev[i % stride];
  return out;
}

PoseSeq3D ErrorStats::denormalize(const PoseSeq3D& z) const {
  if (z.joints() * 3 != mean.size()) throw ShapeError("ErrorStats::denormalize: joint count mismatch");
  PoseSeq3D out = z;
  auto v = out.values();
  const std::size_t stride = mean.size();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] * stddev[i % stride] + mean[i % stride];
  return out;
}

DenoiserParams init_params(const DenoiserConfig& config, Rng& rng) {
  config.validate();
  const Network net = build_network(config);
  DenoiserParams params;
  params.config = config;
  params.values.assign(net.size, 0.0);
  params.stats = ErrorStats::identity(static_cast<std::size_t>(config.joints));

  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& block : net.layout) {
    double* dst = params.values.data() + block.offset;
    if (block.name == "output.weight" || block.name == "output.bias" || ends_with(block.name, ".bias") ||
        ends_with(block.name, ".beta")) {
      continue;  // zeros
    }
    if (ends_with(block.name, ".gamma")) {
      std::fill(dst, dst + block.size(), 1.0);
      continue;
    }
    const double bound = block.name == "joint_embedding" ? 0.1 : 1.0 / std::sqrt(static_cast<double>(block.rows));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (std::size_t i = 0; i < block.size(); ++i) dst[i] = uniform(rng);
  }
  return params;
}

Eigen::VectorXd timestep_embedding(int t, int dim) {
  if (dim < 2 || dim % 2 != 0) throw ConfigError("t_embed_dim", "must be even and >= 2, got " + std::to_string(dim));
  const int half = dim / 2;
  Eigen::VectorXd out(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = half == 1 ? 1.0 : std::pow(10000.0, -static_cast<double>(i) / (half - 1));
    out(2 * i) = std::sin(t * freq);
    out(2 * i + 1) = std::cos(t * freq);
  }
  return out;
}

PoseSeq3D denoiser_forward(const DenoiserParams& params, const PoseSeq2D& y, const PoseSeq3D& x_t, int t) {
  params.config.validate();
  check_params(params);
  check_inputs(params.config, y, x_t);
  const Network net = build_network(params.config);
  return to_meters(params, forward_impl(net, params, y, x_t, t, nullptr));
}

double loss(const PoseSeq3D& e_hat, const PoseSeq3D& e) {
  require_same_shape(e_hat, e, "loss");
  double sq = 0.0;
  const auto a = e_hat.values();
  const auto b = e.values();
  for (std::size_t i = 0; i < a.size(); ++i) sq += (b[i] - a[i]) * (b[i] - a[i]);
  return std::sqrt(sq);
}

double loss(std::span<const PoseSeq3D> e_hat, std::span<const PoseSeq3D> e) {
  if (e_hat.size() != e.size()) throw ShapeError("loss: batch size mismatch");
  if (e.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) total += loss(e_hat[i], e[i]);
  return total / static_cast<double>(e.size());
}

double accumulate_gradient(const DenoiserParams& params, const TrainingExample& example, double weight,
                           std::span<double> grad_out) {
  params.config.validate();
  check_params(params);
  check_inputs(params.config, example.y, example.x_t);
  require_same_shape(example.x_t, example.e, "backward");
  if (grad_out.size() != params.values.size()) throw ShapeError("backward: gradient buffer has wrong size");

  const Network net = build_network(params.config);
  ForwardCache cache;
  const RowMatrix pred = forward_impl(net, params, example.y, example.x_t, example.t, &cache);
  const PoseSeq3D e_hat = to_meters(params, pred);
  const double value = loss(e_hat, example.e);

  // d||e - e_hat|| / d e_hat = (e_hat - e) / ||e - e_hat||, zero at the kink.
  RowMatrix d_pred = RowMatrix::Zero(pred.rows(), 3);
  if (value > 0.0) {
    const std::size_t stride = params.stats.stddev.size();
    const auto ehat = e_hat.values();
    const auto target = example.e.values();
    for (std::size_t i = 0; i < ehat.size(); ++i) {
      d_pred.data()[i] = weight * (ehat[i] - target[i]) / value * params.stats.stddev[i % stride];
    }
    backward_impl(net, params, cache, d_pred, grad_out.data());
  }
  return value;
}

LossGradient denoiser_backward(const DenoiserParams& params, const TrainingExample& example) {
  LossGradient out;
  out.grad.assign(params.values.size(), 0.0);
  out.loss = accumulate_gradient(params, example, 1.0, out.grad);
  require_finite_gradient(params.config, out.grad);
  return out;
}

void require_finite_gradient(const DenoiserConfig& config, std::span<const double> grad) {
  for (const auto& block : parameter_layout(config)) {
    for (std::size_t i = 0; i < block.size(); ++i) {
      if (!std::isfinite(grad[block.offset + i])) {
        throw NumericalError("non-finite gradient in parameter block '" + block.name + "'");
      }
    }
  }
}

Denoiser::Denoiser(DenoiserParams params) : params_(std::move(params)) {
  params_.config.validate();
  check_params(params_);
}

PoseSeq3D Denoiser::predict(const PoseSeq2D& y, const PoseSeq3D& x_t, int t) const {
  return denoiser_forward(params_, y, x_t, t);
}

}  // namespace d3pr
