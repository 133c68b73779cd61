#pragma once

#include <vector>

#include "iepg/nn.hpp"
#include "iepg/tensor.hpp"

namespace iepg {

// rolling window of previously generated intermediates, oldest first
struct IntermediateQueue {
  std::vector<Tensor> images;  // each (3,H,W)
  int capacity = 4;
};

IntermediateQueue update_queue(const IntermediateQueue& q, const Tensor& img);

// channel concatenation of the most recent `capacity` images, oldest to
// newest, zero-filled slots appended for missing history
Tensor assemble_input(const IntermediateQueue& q);

// multi-scale evolution block: 3/5/7 branches fused by softmax scale
// attention, leaky activation, then a 1x1 projection that optionally halves
// the spatial dims (average pool) while changing channels
struct IeBlock {
  Conv2dLayer b3, b5, b7;
  Tensor scale_logits;  // (1,3)
  Conv2dLayer proj;
  bool halve = true;
  bool multi_scale = true;
  int in_ch = 0, out_ch = 0;

  IeBlock() = default;
  IeBlock(Rng& rng, int ci, int co, bool halve, bool multi_scale);
  void collect(ParamList& out, const std::string& prefix) const;
};

Tensor ie_block_forward(const Tensor& x, const IeBlock& block);

struct IecConfig {
  int in_channels = 12;  // queue capacity * 3
  int base = 16;         // C0
  int depth = 3;
  int image_size = 64;
  bool multi_scale = true;
};

// stack following the (C,H,W) -> (2C,H/2,W/2) -> (4C,H/4,W/4) schedule; the
// first block lifts the raw queue channels at full resolution, deeper stacks
// keep halving until the spatial size would drop below 4
struct IecStack {
  IecConfig cfg;
  std::vector<IeBlock> blocks;

  IecStack() = default;
  IecStack(Rng& rng, const IecConfig& cfg);
  int out_channels() const;
  int out_size() const;
  void collect(ParamList& out, const std::string& prefix) const;
};

Tensor iec_forward(const IntermediateQueue& q, const IecStack& stack);

}  // namespace iepg
