#include "catn/nn.hpp"

#include <Eigen/QR>
#include <cmath>
#include <stdexcept>

namespace catn::nn {

namespace {

Mat activate(const Mat& z, Activation a) {
  switch (a) {
    case Activation::kLinear: return z;
    case Activation::kRelu: return z.cwiseMax(0.0);
    case Activation::kTanh: return z.array().tanh().matrix();
    case Activation::kSigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
  }
  return z;
}

// d a / d z expressed through z and a = act(z).
Mat activation_slope(const Mat& z, const Mat& a, Activation act) {
  switch (act) {
    case Activation::kLinear: return Mat::Ones(z.rows(), z.cols());
    case Activation::kRelu: return (z.array() > 0.0).cast<double>().matrix();
    case Activation::kTanh: return (1.0 - a.array().square()).matrix();
    case Activation::kSigmoid: return (a.array() * (1.0 - a.array())).matrix();
  }
  return Mat::Ones(z.rows(), z.cols());
}

}  // namespace

Mlp::Mlp(int inputs, std::vector<int> hidden, int outputs, Activation hiddenAct,
         Activation outputAct)
    : hiddenAct_(hiddenAct), outputAct_(outputAct) {
  if (inputs < 1 || outputs < 1) throw std::invalid_argument("mlp: empty layer");
  sizes_.push_back(inputs);
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("mlp: empty hidden layer");
    sizes_.push_back(h);
  }
  sizes_.push_back(outputs);
  Eigen::Index total = 0;
  for (int l = 0; l < num_layers(); ++l) {
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
  }
  params_ = Vec::Zero(total);
}

Mlp::MapMat Mlp::weight(int l) const {
  return MapMat(params_.data() + offsets_[static_cast<size_t>(l)], sizes_[l + 1], sizes_[l]);
}

Mlp::MapVec Mlp::bias(int l) const {
  const Eigen::Index off =
      offsets_[static_cast<size_t>(l)] + static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l];
  return MapVec(params_.data() + off, sizes_[l + 1]);
}

Activation Mlp::activation(int l) const {
  return l + 1 == num_layers() ? outputAct_ : hiddenAct_;
}

void Mlp::init_orthogonal(Rng& rng, double outputGain) {
  for (int l = 0; l < num_layers(); ++l) {
    const int rows = sizes_[l + 1];
    const int cols = sizes_[l];
    const bool tall = rows >= cols;
    Mat g(tall ? rows : cols, tall ? cols : rows);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = standard_normal(rng);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(g.rows(), g.cols());
    // Sign fix makes the draw uniform over the orthogonal group.
    const Mat r = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < q.cols(); ++j)
      if (r(j, j) < 0.0) q.col(j) *= -1.0;
    const double gain = l + 1 == num_layers() ? outputGain : std::sqrt(2.0);
    Mat w = gain * (tall ? q : Mat(q.transpose()));
    Eigen::Map<Mat>(params_.data() + offsets_[static_cast<size_t>(l)], rows, cols) = w;
    const Eigen::Index boff = offsets_[static_cast<size_t>(l)] + static_cast<Eigen::Index>(rows) * cols;
    params_.segment(boff, rows).setZero();
  }
}

Mat Mlp::forward(const Mat& x, Tape* tape) const {
  if (x.rows() != inputs()) throw std::invalid_argument("mlp: input dimension mismatch");
  if (tape) {
    tape->pre.clear();
    tape->post.clear();
    tape->post.push_back(x);
  }
  Mat a = x;
  for (int l = 0; l < num_layers(); ++l) {
    Mat z = weight(l) * a;
    z.colwise() += bias(l);
    a = activate(z, activation(l));
    if (tape) {
      tape->pre.push_back(std::move(z));
      tape->post.push_back(a);
    }
  }
  return a;
}

Vec Mlp::forward_one(const Vec& x) const { return forward(Mat(x)).col(0); }

Vec Mlp::backward(const Tape& tape, const Mat& gradOut) const {
  Vec grad = Vec::Zero(params_.size());
  Mat g = gradOut;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const Mat& z = tape.pre[static_cast<size_t>(l)];
    const Mat& a = tape.post[static_cast<size_t>(l + 1)];
    g.array() *= activation_slope(z, a, activation(l)).array();
    const int rows = sizes_[l + 1];
    const int cols = sizes_[l];
    const Eigen::Index off = offsets_[static_cast<size_t>(l)];
    Eigen::Map<Mat>(grad.data() + off, rows, cols).noalias() =
        g * tape.post[static_cast<size_t>(l)].transpose();
    grad.segment(off + static_cast<Eigen::Index>(rows) * cols, rows) = g.rowwise().sum();
    if (l > 0) g = weight(l).transpose() * g;
  }
  return grad;
}

Adam::Adam(Eigen::Index size, double lr, double gradClip, double beta1, double beta2, double eps)
    : lr_(lr),
      gradClip_(gradClip),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      m_(Vec::Zero(size)),
      v_(Vec::Zero(size)) {}

void Adam::step(Vec& params, const Vec& grad) {
  if (grad.size() != params.size() || grad.size() != m_.size())
    throw std::invalid_argument("adam: size mismatch");
  const double nrm = grad.norm();
  const double scale = gradClip_ > 0.0 && nrm > gradClip_ ? gradClip_ / nrm : 1.0;
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  m_ = beta1_ * m_ + ((1.0 - beta1_) * scale) * grad;
  v_ = beta2_ * v_ + ((1.0 - beta2_) * scale * scale) * grad.cwiseAbs2();
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

void Adam::restore(long t, Vec m, Vec v) {
  if (m.size() != m_.size() || v.size() != v_.size())
    throw std::invalid_argument("adam: restored state has wrong size");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace catn::nn
