#include "iepg/iec.hpp"

#include <stdexcept>

namespace iepg {

IntermediateQueue update_queue(const IntermediateQueue& q, const Tensor& img) {
  if (img.rank() != 3 || img.dim(0) != 3)
    throw std::invalid_argument("update_queue: expected (3,H,W), got " + shape_str(img.shape()));
  if (!q.images.empty() && q.images.front().shape() != img.shape())
    throw std::invalid_argument("update_queue: image dims " + shape_str(img.shape()) +
                                " do not match queue " + shape_str(q.images.front().shape()));
  IntermediateQueue out = q;
  out.images.push_back(img);
  while (static_cast<int>(out.images.size()) > out.capacity) out.images.erase(out.images.begin());
  return out;
}

Tensor assemble_input(const IntermediateQueue& q) {
  if (q.images.empty()) throw std::invalid_argument("assemble_input: empty queue");
  const int h = q.images.front().dim(1), w = q.images.front().dim(2);
  std::vector<Tensor> blocks;
  const int n = std::min<int>(static_cast<int>(q.images.size()), q.capacity);
  const int start = static_cast<int>(q.images.size()) - n;
  for (int i = 0; i < n; ++i) blocks.push_back(q.images[static_cast<std::size_t>(start + i)]);
  for (int i = n; i < q.capacity; ++i) blocks.push_back(Tensor(Shape{3, h, w}, 0.0));
  return concat0(blocks);
}

IeBlock::IeBlock(Rng& rng, int ci, int co, bool halve_, bool multi_scale_) {
  in_ch = ci;
  out_ch = co;
  halve = halve_;
  multi_scale = multi_scale_;
  b3 = Conv2dLayer(rng, ci, ci, 3, 1, 1);
  if (multi_scale) {
    b5 = Conv2dLayer(rng, ci, ci, 5, 1, 2);
    b7 = Conv2dLayer(rng, ci, ci, 7, 1, 3);
    scale_logits = Tensor(Shape{1, 3}, 0.0);
    scale_logits.set_requires_grad(true);
  }
  proj = Conv2dLayer(rng, ci, co, 1, 1, 0);
}

void IeBlock::collect(ParamList& out, const std::string& prefix) const {
  b3.collect(out, prefix + ".b3");
  if (multi_scale) {
    b5.collect(out, prefix + ".b5");
    b7.collect(out, prefix + ".b7");
    out.emplace_back(prefix + ".scale", scale_logits);
  }
  proj.collect(out, prefix + ".proj");
}

namespace {

Tensor scale_by(const Tensor& x, const Tensor& s /* (1,1) */) {
  Tensor flat = reshape(x, Shape{1, static_cast<int>(x.size())});
  return reshape(bc_col_mul(flat, reshape(s, Shape{1, 1})), x.shape());
}

}  // namespace

Tensor ie_block_forward(const Tensor& x, const IeBlock& block) {
  if (x.rank() != 3)
    throw std::invalid_argument("ie_block_forward: expected (C,H,W), got " + shape_str(x.shape()));
  if (block.halve && (x.dim(1) % 2 || x.dim(2) % 2))
    throw std::invalid_argument("ie_block_forward: spatial dims must be even, got " +
                                shape_str(x.shape()));
  Tensor fused;
  if (block.multi_scale) {
    Tensor w = softmax_rows(block.scale_logits);  // positive, sums to 1
    Tensor f3 = scale_by(block.b3.forward(x), slice_cols(w, 0, 1));
    Tensor f5 = scale_by(block.b5.forward(x), slice_cols(w, 1, 1));
    Tensor f7 = scale_by(block.b7.forward(x), slice_cols(w, 2, 1));
    fused = add(add(f3, f5), f7);
  } else {
    fused = block.b3.forward(x);
  }
  Tensor act = leaky_relu(fused, 0.2);
  if (block.halve) act = avg_pool2(act);
  return block.proj.forward(act);
}

IecStack::IecStack(Rng& rng, const IecConfig& cfg_) {
  cfg = cfg_;
  if (cfg.depth < 1) throw std::invalid_argument("IecStack: depth must be >= 1");
  int ch = cfg.in_channels;
  int size = cfg.image_size;
  for (int i = 0; i < cfg.depth; ++i) {
    const bool first = i == 0;
    const bool can_halve = !first && size / 2 >= 4;
    const int co = first ? cfg.base : (can_halve ? 2 * ch : ch);
    blocks.emplace_back(rng, ch, co, can_halve, cfg.multi_scale);
    ch = co;
    if (can_halve) size /= 2;
  }
}

int IecStack::out_channels() const { return blocks.back().out_ch; }

int IecStack::out_size() const {
  int size = cfg.image_size;
  for (const auto& b : blocks)
    if (b.halve) size /= 2;
  return size;
}

void IecStack::collect(ParamList& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(out, prefix + ".block" + std::to_string(i));
}

Tensor iec_forward(const IntermediateQueue& q, const IecStack& stack) {
  Tensor x = assemble_input(q);
  if (x.dim(1) % 4 || x.dim(2) % 4)
    throw std::invalid_argument("iec_forward: image dims must be divisible by 4, got " +
                                shape_str(x.shape()));
  for (const auto& b : stack.blocks) x = ie_block_forward(x, b);
  return x;
}

}  // namespace iepg
