#pragma once

#include <string>
#include <utility>
#include <vector>

#include "iepg/tensor.hpp"

namespace iepg {

// named parameter list, the unit the checkpoint format serializes
using ParamList = std::vector<std::pair<std::string, Tensor>>;

inline std::vector<Tensor> param_tensors(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

// uniform in [-sqrt(1/fan_in), +sqrt(1/fan_in)]
Tensor init_fan_in(Rng& rng, Shape shape, int fan_in);

struct Linear {
  Tensor w;  // (in, out)
  Tensor b;  // (1, out)

  Linear() = default;
  Linear(Rng& rng, int in, int out);
  Tensor forward(const Tensor& x) const;  // (n,in) -> (n,out)
  void collect(ParamList& out, const std::string& prefix) const;
};

struct Conv2dLayer {
  Tensor k;  // (co, ci, s, s)
  Tensor b;  // (co)
  int stride = 1;
  int pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(Rng& rng, int ci, int co, int ks, int stride, int pad);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

struct Conv1dLayer {
  Tensor k;  // (co, ci, s)
  Tensor b;  // (co)
  int pad = 0;

  Conv1dLayer() = default;
  Conv1dLayer(Rng& rng, int ci, int co, int ks, int pad);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

enum class CellType { Gru, Tanh };

// recurrent cell on (1,d) row states; Gru packs gates as [update|reset|cand]
struct RnnCell {
  CellType type = CellType::Gru;
  Tensor w;  // (in, 3*dh) or (in, dh)
  Tensor u;  // (dh, 3*dh) or (dh, dh)
  Tensor b;  // (1, 3*dh) or (1, dh)
  int dh = 0;

  RnnCell() = default;
  RnnCell(Rng& rng, CellType type, int in, int dh);
  Tensor forward(const Tensor& x, const Tensor& h) const;
  void collect(ParamList& out, const std::string& prefix) const;
};

// channel bias for (C,H,W) activations
Tensor conv_bias(const Tensor& x, const Tensor& b);

}  // namespace iepg
