// Building blocks of the pose denoiser. Parameters live in one flat array;
// each layer stores offsets into it. Gradients are accumulated (+=) into a
// second array with the same layout.
#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "d3pr/pose.hpp"

namespace d3pr::nn {

using Index = Eigen::Index;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;

struct Linear {
  std::size_t weight = 0;  // in x out, row-major
  std::size_t bias = 0;    // out
  Index in = 0;
  Index out = 0;

  void forward(const double* params, const RowMatrix& x, RowMatrix& y) const;
  /// Accumulates weight/bias gradients; writes dx when non-null.
  void backward(const double* params, double* grads, const RowMatrix& x, const RowMatrix& dy,
                RowMatrix* dx) const;
};

struct LayerNormCache {
  RowMatrix xhat;
  Eigen::VectorXd rstd;
};

struct LayerNorm {
  static constexpr double kEps = 1e-5;
  std::size_t gamma = 0;
  std::size_t beta = 0;
  Index dim = 0;

  void forward(const double* params, const RowMatrix& x, RowMatrix& y, LayerNormCache& cache) const;
  void backward(const double* params, double* grads, const LayerNormCache& cache, const RowMatrix& dy,
                RowMatrix& dx) const;
};

/// Token groups attended over independently: either all joints of one frame
/// (spatial) or all frames of one joint (temporal).
enum class GroupAxis { Spatial, Temporal };

struct GroupLayout {
  Index frames = 0;
  Index joints = 0;
  GroupAxis axis = GroupAxis::Spatial;

  Index group_count() const { return axis == GroupAxis::Spatial ? frames : joints; }
  Index group_size() const { return axis == GroupAxis::Spatial ? joints : frames; }
  Index first_row(Index g) const { return axis == GroupAxis::Spatial ? g * joints : g; }
  Index row_step() const { return axis == GroupAxis::Spatial ? 1 : joints; }
};

struct AttentionCache {
  RowMatrix x, q, k, v, o;
  std::vector<RowMatrix> probs;  // group-major, then head
};

/// Multi-head self-attention within each token group.
struct GroupedSelfAttention {
  Linear q, k, v, o;
  Index heads = 1;

  void forward(const double* params, const RowMatrix& x, const GroupLayout& layout, RowMatrix& y,
               AttentionCache& cache) const;
  void backward(const double* params, double* grads, const AttentionCache& cache, const GroupLayout& layout,
                const RowMatrix& dy, RowMatrix& dx) const;
};

struct FusionCache {
  RowMatrix x, q, k, v, o;
  RowMatrix tau, k_tau, v_tau;  // 1 x C
  RowMatrix w_self, w_tau;      // tokens x heads softmax weights
};

/// Each token attends over the pair {itself, projected timestep embedding},
/// sharing key/value projections between the two entries.
struct TimestepFusion {
  Linear q, k, v, o;
  Index heads = 1;

  void forward(const double* params, const RowMatrix& x, const RowMatrix& tau, RowMatrix& y,
               FusionCache& cache) const;
  /// Writes dx and accumulates into dtau (1 x C).
  void backward(const double* params, double* grads, const FusionCache& cache, const RowMatrix& dy,
                RowMatrix& dx, RowMatrix& dtau) const;
};

struct MlpCache {
  RowMatrix x, pre, act;
};

struct Mlp {
  Linear fc1, fc2;

  void forward(const double* params, const RowMatrix& x, RowMatrix& y, MlpCache& cache) const;
  void backward(const double* params, double* grads, const MlpCache& cache, const RowMatrix& dy,
                RowMatrix& dx) const;
};

double gelu(double x);
double gelu_grad(double x);

}  // namespace d3pr::nn
