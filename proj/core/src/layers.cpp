#include "layers.hpp"

#include <cmath>
#include <numbers>

namespace d3pr::nn {

namespace {

using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

StridedMap group_view(RowMatrix& m, const GroupLayout& layout, Index g, Index col, Index width) {
  return StridedMap(m.data() + layout.first_row(g) * m.cols() + col, layout.group_size(), width,
                    Eigen::OuterStride<>(layout.row_step() * m.cols()));
}

ConstStridedMap group_view(const RowMatrix& m, const GroupLayout& layout, Index g, Index col, Index width) {
  return ConstStridedMap(m.data() + layout.first_row(g) * m.cols() + col, layout.group_size(), width,
                         Eigen::OuterStride<>(layout.row_step() * m.cols()));
}

void softmax_rows(RowMatrix& s) {
  for (Index r = 0; r < s.rows(); ++r) {
    auto row = s.row(r);
    row.array() = (row.array() - row.maxCoeff()).exp();
    row /= row.sum();
  }
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) + x * pdf;
}

void Linear::forward(const double* params, const RowMatrix& x, RowMatrix& y) const {
  const ConstMatMap w(params + weight, in, out);
  y.noalias() = x * w;
  y.rowwise() += ConstVecMap(params + bias, out);
}

void Linear::backward(const double* params, double* grads, const RowMatrix& x, const RowMatrix& dy,
                      RowMatrix* dx) const {
  MatMap(grads + weight, in, out).noalias() += x.transpose() * dy;
  VecMap(grads + bias, out) += dy.colwise().sum();
  if (dx) dx->noalias() = dy * ConstMatMap(params + weight, in, out).transpose();
}

void LayerNorm::forward(const double* params, const RowMatrix& x, RowMatrix& y, LayerNormCache& cache) const {
  const Index rows = x.rows();
  cache.xhat.resize(rows, dim);
  cache.rstd.resize(rows);
  for (Index r = 0; r < rows; ++r) {
    const double mu = x.row(r).mean();
    const auto centered = (x.row(r).array() - mu).eval();
    const double var = centered.square().mean();
    const double rstd = 1.0 / std::sqrt(var + kEps);
    cache.rstd(r) = rstd;
    cache.xhat.row(r) = centered * rstd;
  }
  const ConstVecMap g(params + gamma, dim);
  const ConstVecMap b(params + beta, dim);
  y = cache.xhat.array().rowwise() * g.array();
  y.rowwise() += b;
}

void LayerNorm::backward(const double* params, double* grads, const LayerNormCache& cache, const RowMatrix& dy,
                         RowMatrix& dx) const {
  VecMap(grads + gamma, dim) += dy.cwiseProduct(cache.xhat).colwise().sum();
  VecMap(grads + beta, dim) += dy.colwise().sum();
  const ConstVecMap g(params + gamma, dim);
  const RowMatrix dxhat = dy.array().rowwise() * g.array();
  dx.resize(dy.rows(), dim);
  for (Index r = 0; r < dy.rows(); ++r) {
    const double m1 = dxhat.row(r).mean();
    const double m2 = dxhat.row(r).dot(cache.xhat.row(r)) / static_cast<double>(dim);
    dx.row(r) = cache.rstd(r) * (dxhat.row(r).array() - m1 - cache.xhat.row(r).array() * m2);
  }
}

void GroupedSelfAttention::forward(const double* params, const RowMatrix& x, const GroupLayout& layout,
                                   RowMatrix& y, AttentionCache& cache) const {
  const Index width = q.out;
  const Index dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  cache.x = x;
  q.forward(params, x, cache.q);
  k.forward(params, x, cache.k);
  v.forward(params, x, cache.v);
  cache.o.resize(x.rows(), width);
  cache.probs.resize(static_cast<std::size_t>(layout.group_count() * heads));

  for (Index g = 0; g < layout.group_count(); ++g) {
    for (Index h = 0; h < heads; ++h) {
      const auto qg = group_view(cache.q, layout, g, h * dh, dh);
      const auto kg = group_view(cache.k, layout, g, h * dh, dh);
      const auto vg = group_view(cache.v, layout, g, h * dh, dh);
      RowMatrix& p = cache.probs[static_cast<std::size_t>(g * heads + h)];
      p.noalias() = scale * (qg * kg.transpose());
      softmax_rows(p);
      group_view(cache.o, layout, g, h * dh, dh).noalias() = p * vg;
    }
  }
  o.forward(params, cache.o, y);
}

void GroupedSelfAttention::backward(const double* params, double* grads, const AttentionCache& cache,
                                    const GroupLayout& layout, const RowMatrix& dy, RowMatrix& dx) const {
  const Index width = q.out;
  const Index dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  RowMatrix d_o;
  o.backward(params, grads, cache.o, dy, &d_o);

  RowMatrix dq(dy.rows(), width), dk(dy.rows(), width), dv(dy.rows(), width);
  RowMatrix dp;
  for (Index g = 0; g < layout.group_count(); ++g) {
    for (Index h = 0; h < heads; ++h) {
      const RowMatrix& p = cache.probs[static_cast<std::size_t>(g * heads + h)];
      const auto qg = group_view(cache.q, layout, g, h * dh, dh);
      const auto kg = group_view(cache.k, layout, g, h * dh, dh);
      const auto vg = group_view(cache.v, layout, g, h * dh, dh);
      const auto dog = group_view(d_o, layout, g, h * dh, dh);

      group_view(dv, layout, g, h * dh, dh).noalias() = p.transpose() * dog;
      dp.noalias() = dog * vg.transpose();
      // softmax backward: ds = p * (dp - rowsum(dp * p))
      const Eigen::VectorXd inner = dp.cwiseProduct(p).rowwise().sum();
      dp = p.cwiseProduct((dp.colwise() - inner).eval());
      group_view(dq, layout, g, h * dh, dh).noalias() = scale * (dp * kg);
      group_view(dk, layout, g, h * dh, dh).noalias() = scale * (dp.transpose() * qg);
    }
  }

  RowMatrix tmp;
  q.backward(params, grads, cache.x, dq, &dx);
  k.backward(params, grads, cache.x, dk, &tmp);
  dx += tmp;
  v.backward(params, grads, cache.x, dv, &tmp);
  dx += tmp;
}

void TimestepFusion::forward(const double* params, const RowMatrix& x, const RowMatrix& tau, RowMatrix& y,
                             FusionCache& cache) const {
  const Index width = q.out;
  const Index dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Index rows = x.rows();
  cache.x = x;
  cache.tau = tau;
  q.forward(params, x, cache.q);
  k.forward(params, x, cache.k);
  v.forward(params, x, cache.v);
  k.forward(params, tau, cache.k_tau);
  v.forward(params, tau, cache.v_tau);
  cache.o.resize(rows, width);
  cache.w_self.resize(rows, heads);
  cache.w_tau.resize(rows, heads);

  for (Index h = 0; h < heads; ++h) {
    const auto qh = cache.q.middleCols(h * dh, dh);
    const auto kh = cache.k.middleCols(h * dh, dh);
    const auto vh = cache.v.middleCols(h * dh, dh);
    const auto kt = cache.k_tau.row(0).segment(h * dh, dh);
    const auto vt = cache.v_tau.row(0).segment(h * dh, dh);
    const Eigen::VectorXd s_self = scale * qh.cwiseProduct(kh).rowwise().sum();
    const Eigen::VectorXd s_tau = scale * (qh * kt.transpose());
    for (Index r = 0; r < rows; ++r) {
      const double m = std::max(s_self(r), s_tau(r));
      const double a = std::exp(s_self(r) - m);
      const double b = std::exp(s_tau(r) - m);
      cache.w_self(r, h) = a / (a + b);
      cache.w_tau(r, h) = b / (a + b);
    }
    auto oh = cache.o.middleCols(h * dh, dh);
    oh = vh.array().colwise() * cache.w_self.col(h).array();
    oh.noalias() += cache.w_tau.col(h) * vt;
  }
  o.forward(params, cache.o, y);
}

void TimestepFusion::backward(const double* params, double* grads, const FusionCache& cache,
                              const RowMatrix& dy, RowMatrix& dx, RowMatrix& dtau) const {
  const Index width = q.out;
  const Index dh = width / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Index rows = dy.rows();

  RowMatrix d_o;
  o.backward(params, grads, cache.o, dy, &d_o);

  RowMatrix dq(rows, width), dk(rows, width), dv(rows, width);
  RowMatrix dk_tau = RowMatrix::Zero(1, width);
  RowMatrix dv_tau = RowMatrix::Zero(1, width);
  for (Index h = 0; h < heads; ++h) {
    const auto qh = cache.q.middleCols(h * dh, dh);
    const auto kh = cache.k.middleCols(h * dh, dh);
    const auto vh = cache.v.middleCols(h * dh, dh);
    const auto kt = cache.k_tau.row(0).segment(h * dh, dh);
    const auto vt = cache.v_tau.row(0).segment(h * dh, dh);
    const auto doh = d_o.middleCols(h * dh, dh);
    const auto w1 = cache.w_self.col(h).array();
    const auto w2 = cache.w_tau.col(h).array();

    const Eigen::ArrayXd da1 = doh.cwiseProduct(vh).rowwise().sum().array();
    const Eigen::ArrayXd da2 = (doh * vt.transpose()).array();
    dv.middleCols(h * dh, dh) = doh.array().colwise() * w1;
    dv_tau.row(0).segment(h * dh, dh) += w2.matrix().transpose() * doh;

    const Eigen::ArrayXd mean = w1 * da1 + w2 * da2;
    const Eigen::ArrayXd ds1 = scale * w1 * (da1 - mean);
    const Eigen::ArrayXd ds2 = scale * w2 * (da2 - mean);
    auto dqh = dq.middleCols(h * dh, dh);
    dqh = kh.array().colwise() * ds1;
    dqh.noalias() += ds2.matrix() * kt;
    dk.middleCols(h * dh, dh) = qh.array().colwise() * ds1;
    dk_tau.row(0).segment(h * dh, dh) += ds2.matrix().transpose() * qh;
  }

  RowMatrix tmp;
  q.backward(params, grads, cache.x, dq, &dx);
  k.backward(params, grads, cache.x, dk, &tmp);
  dx += tmp;
  v.backward(params, grads, cache.x, dv, &tmp);
  dx += tmp;
  k.backward(params, grads, cache.tau, dk_tau, &tmp);
  dtau += tmp;
  v.backward(params, grads, cache.tau, dv_tau, &tmp);
  dtau += tmp;
}

void Mlp::forward(const double* params, const RowMatrix& x, RowMatrix& y, MlpCache& cache) const {
  cache.x = x;
  fc1.forward(params, x, cache.pre);
  cache.act = cache.pre.unaryExpr([](double v) { return gelu(v); });
  fc2.forward(params, cache.act, y);
}

void Mlp::backward(const double* params, double* grads, const MlpCache& cache, const RowMatrix& dy,
                   RowMatrix& dx) const {
  RowMatrix dact;
  fc2.backward(params, grads, cache.act, dy, &dact);
  dact.array() *= cache.pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
  fc1.backward(params, grads, cache.x, dact, &dx);
}

}  // namespace d3pr::nn
