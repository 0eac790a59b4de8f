#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "d3pr/diffusion.hpp"
#include "d3pr/pose.hpp"
#include "d3pr/random.hpp"

namespace d3pr {

/// Shape of the pose denoiser g(y, x_t, t).
///
/// Tokens are the frames*joints joints of a sequence. Each of the `depth`
/// blocks applies, with pre-normalization and a residual around each step:
/// spatial self-attention (joints of a frame), temporal self-attention (frames
/// of a joint), timestep fusion (each token attends over itself and the
/// block's projection of the timestep embedding), and a GELU MLP.
struct DenoiserConfig {
  int latent_dim = 64;
  int depth = 2;
  int heads = 4;
  int frames = 27;
  int joints = 17;
  int t_embed_dim = 64;
  int mlp_ratio = 2;
  /// Adds a fixed sinusoidal encoding of the frame index to every token.
  bool temporal_encoding = true;

  void validate() const;
  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// Number of scalars in the flat parameter array:
///   C(J + 11) + 3 + L * (E*C + C + 8C + 3(4C^2 + 4C) + 2*C*H + H + C)
/// with C = latent_dim, J = joints, L = depth, E = t_embed_dim, H = mlp_ratio*C.
std::size_t parameter_count(const DenoiserConfig& config);

struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size() const { return rows * cols; }
};

/// Named slices of the flat parameter array, in storage order.
std::vector<ParamBlock> parameter_layout(const DenoiserConfig& config);

/// Per-(joint, axis) statistics of the training errors. The network predicts
/// z-scored errors; these map them back to meters.
struct ErrorStats {
  static constexpr double kMinStd = 1e-6;

  std::vector<double> mean;    // joints * 3
  std::vector<double> stddev;  // joints * 3, floored at kMinStd

  static ErrorStats from_errors(std::span<const PoseSeq3D> errors);
  static ErrorStats identity(std::size_t joints);

  PoseSeq3D normalize(const PoseSeq3D& e) const;
  PoseSeq3D denormalize(const PoseSeq3D& z) const;

  friend bool operator==(const ErrorStats&, const ErrorStats&) = default;
};

struct DenoiserParams {
  DenoiserConfig config;
  std::vector<double> values;
  ErrorStats stats;

  friend bool operator==(const DenoiserParams&, const DenoiserParams&) = default;
};

/// Fan-in scaled uniform projections, unit LayerNorm gains, zero output layer.
DenoiserParams init_params(const DenoiserConfig& config, Rng& rng);

/// Interleaved (sin(t w_i), cos(t w_i)) pairs with w_i = 10000^(-i/(dim/2 - 1)).
Eigen::VectorXd timestep_embedding(int t, int dim);

/// Predicted error e_hat in meters, shape frames x joints x 3.
PoseSeq3D denoiser_forward(const DenoiserParams& params, const PoseSeq2D& y, const PoseSeq3D& x_t, int t);

/// Mean over the batch of ||e - e_hat||_2 taken over each whole sequence.
double loss(std::span<const PoseSeq3D> e_hat, std::span<const PoseSeq3D> e);
double loss(const PoseSeq3D& e_hat, const PoseSeq3D& e);

struct LossGradient {
  double loss = 0.0;
  std::vector<double> grad;  // same layout as DenoiserParams::values
};

/// Exact gradient of ||e - g(y, x_t, t)|| for one example.
LossGradient denoiser_backward(const DenoiserParams& params, const TrainingExample& example);

/// Same as denoiser_backward but accumulates `weight * grad` into `grad_out`.
double accumulate_gradient(const DenoiserParams& params, const TrainingExample& example, double weight,
                           std::span<double> grad_out);

/// Throws NumericalError naming the first parameter block holding a non-finite value.
void require_finite_gradient(const DenoiserConfig& config, std::span<const double> grad);

/// ErrorPredictor backed by trained parameters.
class Denoiser : public ErrorPredictor {
public:
  explicit Denoiser(DenoiserParams params);

  const DenoiserParams& params() const noexcept { return params_; }
  std::size_t expected_frames() const override { return static_cast<std::size_t>(params_.config.frames); }
  std::size_t expected_joints() const override { return static_cast<std::size_t>(params_.config.joints); }
  PoseSeq3D predict(const PoseSeq2D& y, const PoseSeq3D& x_t, int t) const override;

private:
  DenoiserParams params_;
};

}  // namespace d3pr
