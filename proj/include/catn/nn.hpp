#pragma once

#include <vector>

#include "catn/rng.hpp"
#include "catn/types.hpp"

namespace catn::nn {

enum class Activation { kLinear, kRelu, kTanh, kSigmoid };

/// Fully connected network over a flat parameter vector. Batches are
/// column-major: one sample per column.
class Mlp {
 public:
  struct Tape {
    std::vector<Mat> pre;   // z_l per layer
    std::vector<Mat> post;  // a_l per layer; post[0] is the input
  };

  Mlp() = default;
  Mlp(int inputs, std::vector<int> hidden, int outputs, Activation hiddenAct = Activation::kRelu,
      Activation outputAct = Activation::kLinear);

  /// Orthogonal weights (gain sqrt(2) on hidden layers, outputGain on the
  /// last), zero biases.
  void init_orthogonal(Rng& rng, double outputGain);

  int inputs() const { return sizes_.front(); }
  int outputs() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& sizes() const { return sizes_; }
  Activation hidden_activation() const { return hiddenAct_; }
  Activation output_activation() const { return outputAct_; }

  Vec& params() { return params_; }
  const Vec& params() const { return params_; }

  Mat forward(const Mat& x, Tape* tape = nullptr) const;
  Vec forward_one(const Vec& x) const;

  /// Gradient of a scalar loss w.r.t. the flat parameters, given dLoss/dOutput.
  Vec backward(const Tape& tape, const Mat& gradOut) const;

 private:
  using MapMat = Eigen::Map<const Mat>;
  using MapVec = Eigen::Map<const Vec>;
  MapMat weight(int layer) const;
  MapVec bias(int layer) const;
  Activation activation(int layer) const;

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Activation hiddenAct_ = Activation::kRelu;
  Activation outputAct_ = Activation::kLinear;
  Vec params_;
};

/// Adam with global gradient-norm clipping.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index size, double lr, double gradClip = 10.0, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8);

  void step(Vec& params, const Vec& grad);

  double lr() const { return lr_; }
  long steps() const { return t_; }
  const Vec& first_moment() const { return m_; }
  const Vec& second_moment() const { return v_; }
  void restore(long t, Vec m, Vec v);

 private:
  double lr_ = 1e-3;
  double gradClip_ = 10.0;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Vec m_;
  Vec v_;
};

}  // namespace catn::nn
