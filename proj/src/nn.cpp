#include "iepg/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace iepg {

Tensor init_fan_in(Rng& rng, Shape shape, int fan_in) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  Tensor t = Tensor::randu(rng, std::move(shape), -bound, bound);
  t.set_requires_grad(true);
  return t;
}

Linear::Linear(Rng& rng, int in, int out) {
  w = init_fan_in(rng, Shape{in, out}, in);
  b = init_fan_in(rng, Shape{1, out}, in);
}

Tensor Linear::forward(const Tensor& x) const { return bc_row_add(matmul(x, w), b); }

void Linear::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".b", b);
}

Conv2dLayer::Conv2dLayer(Rng& rng, int ci, int co, int ks, int stride_, int pad_) {
  k = init_fan_in(rng, Shape{co, ci, ks, ks}, ci * ks * ks);
  b = init_fan_in(rng, Shape{co}, ci * ks * ks);
  stride = stride_;
  pad = pad_;
}

Tensor conv_bias(const Tensor& x, const Tensor& b) {
  const int c = x.dim(0);
  const int inner = static_cast<int>(x.size() / c);
  Tensor flat = reshape(x, Shape{c, inner});
  Tensor col = reshape(b, Shape{c, 1});
  return reshape(bc_col_add(flat, col), x.shape());
}

Tensor Conv2dLayer::forward(const Tensor& x) const { return conv_bias(conv2d(x, k, stride, pad), b); }

void Conv2dLayer::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".k", k);
  out.emplace_back(prefix + ".b", b);
}

Conv1dLayer::Conv1dLayer(Rng& rng, int ci, int co, int ks, int pad_) {
  k = init_fan_in(rng, Shape{co, ci, ks}, ci * ks);
  b = init_fan_in(rng, Shape{co}, ci * ks);
  pad = pad_;
}

Tensor Conv1dLayer::forward(const Tensor& x) const { return conv_bias(conv1d(x, k, pad), b); }

void Conv1dLayer::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".k", k);
  out.emplace_back(prefix + ".b", b);
}

RnnCell::RnnCell(Rng& rng, CellType type_, int in, int dh_) {
  type = type_;
  dh = dh_;
  const int gates = type == CellType::Gru ? 3 * dh : dh;
  w = init_fan_in(rng, Shape{in, gates}, in);
  u = init_fan_in(rng, Shape{dh, gates}, dh);
  b = init_fan_in(rng, Shape{1, gates}, in);
}

Tensor RnnCell::forward(const Tensor& x, const Tensor& h) const {
  if (type == CellType::Tanh)
    return tanh_t(bc_row_add(add(matmul(x, w), matmul(h, u)), b));
  Tensor xg = bc_row_add(matmul(x, w), b);  // (1, 3dh)
  Tensor hg = matmul(h, u);
  Tensor z = sigmoid(add(slice_cols(xg, 0, dh), slice_cols(hg, 0, dh)));
  Tensor r = sigmoid(add(slice_cols(xg, dh, dh), slice_cols(hg, dh, dh)));
  Tensor cand = tanh_t(add(slice_cols(xg, 2 * dh, dh), mul(r, slice_cols(hg, 2 * dh, dh))));
  // h' = (1-z)*h + z*cand
  Tensor one_minus_z = add_scalar(neg(z), 1.0);
  return add(mul(one_minus_z, h), mul(z, cand));
}

void RnnCell::collect(ParamList& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".w", w);
  out.emplace_back(prefix + ".u", u);
  out.emplace_back(prefix + ".b", b);
}

}  // namespace iepg
