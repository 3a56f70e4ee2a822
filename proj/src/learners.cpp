#include "catn/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace catn::learners {

Vec gae(const Vec& deltas, double gamma, double lambda) {
  Vec adv(deltas.size());
  double next = 0.0;
  for (Eigen::Index i = deltas.size() - 1; i >= 0; --i) {
    next = gamma * lambda * next + deltas[i];
    adv[i] = next;
  }
  return adv;
}

LossGrad value_loss(const Mlp& v, const Mat& obs, const Mat& targets) {
  Mlp::Tape tape;
  const Mat out = v.forward(obs, &tape);
  const Mat diff = out - targets;
  const double b = static_cast<double>(obs.cols());
  LossGrad lg;
  lg.loss = diff.squaredNorm() / b;
  lg.grad = v.backward(tape, 2.0 * diff / b);
  return lg;
}

// --- Gaussian policy ----------------------------------------------------------

GaussianPolicy::GaussianPolicy(int obsDim, int actDim, const std::vector<int>& hidden, Rng& init,
                               double logStdInit)
    : net_(obsDim, hidden, actDim, nn::Activation::kRelu, nn::Activation::kSigmoid),
      logStd_(Vec::Constant(actDim, logStdInit)) {
  net_.init_orthogonal(init, 0.01);
}

Vec GaussianPolicy::parameters() const {
  Vec theta(num_parameters());
  theta << net_.params(), logStd_;
  return theta;
}

void GaussianPolicy::set_parameters(const Vec& theta) {
  if (theta.size() != num_parameters()) throw std::invalid_argument("policy: parameter size");
  net_.params() = theta.head(net_.params().size());
  logStd_ = theta.tail(logStd_.size());
}

Mat GaussianPolicy::means(const Mat& obs, Mlp::Tape* tape) const { return net_.forward(obs, tape); }

Vec GaussianPolicy::mean(const Vec& o) const { return net_.forward_one(o); }

Vec GaussianPolicy::sample(const Vec& o, Rng& rng) const {
  Vec a = mean(o);
  for (Eigen::Index d = 0; d < a.size(); ++d) a[d] += std::exp(logStd_[d]) * standard_normal(rng);
  return a;
}

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

Vec log_probs_from_means(const Mat& mu, const Vec& logStd, const Mat& actions) {
  const Vec invVar = (-2.0 * logStd.array()).exp();
  Vec out(mu.cols());
  const double norm = logStd.sum() + kHalfLog2Pi * static_cast<double>(logStd.size());
  for (Eigen::Index j = 0; j < mu.cols(); ++j) {
    const Vec diff = actions.col(j) - mu.col(j);
    out[j] = -0.5 * diff.cwiseAbs2().dot(invVar) - norm;
  }
  return out;
}

// Pushes dLoss/dlogp_j through the Gaussian density onto (mean, log_std).
void logp_backward(const Mat& mu, const Vec& logStd, const Mat& actions, const Vec& dLogp,
                   Mat& dMean, Vec& dLogStd) {
  const Vec invVar = (-2.0 * logStd.array()).exp();
  for (Eigen::Index j = 0; j < mu.cols(); ++j) {
    const Vec diff = actions.col(j) - mu.col(j);
    dMean.col(j) += dLogp[j] * diff.cwiseProduct(invVar);
    dLogStd += dLogp[j] * (diff.cwiseAbs2().cwiseProduct(invVar).array() - 1.0).matrix();
  }
}

}  // namespace

Vec GaussianPolicy::log_probs(const Mat& obs, const Mat& actions) const {
  return log_probs_from_means(means(obs), logStd_, actions);
}

Vec GaussianPolicy::chain(const Mlp::Tape& tape, const Mat& dMean, const Vec& dLogStd) const {
  Vec g(num_parameters());
  g << net_.backward(tape, dMean), dLogStd;
  return g;
}

Vec gaussian_kl(const Mat& meanP, const Vec& logStdP, const Mat& meanQ, const Vec& logStdQ) {
  const Vec varP = (2.0 * logStdP.array()).exp();
  const Vec invVarQ = (-2.0 * logStdQ.array()).exp();
  const double base = (logStdQ - logStdP).sum() +
                      0.5 * varP.dot(invVarQ) - 0.5 * static_cast<double>(logStdP.size());
  Vec kl(meanP.cols());
  for (Eigen::Index j = 0; j < meanP.cols(); ++j)
    kl[j] = base + 0.5 * (meanP.col(j) - meanQ.col(j)).cwiseAbs2().dot(invVarQ);
  return kl;
}

double mean_kl(const GaussianPolicy& p, const GaussianPolicy& q, const Mat& obs) {
  return gaussian_kl(p.means(obs), p.log_std(), q.means(obs), q.log_std()).mean();
}

LossGrad cup_improve_loss(const GaussianPolicy& pi, const PolicyBatch& b, double clipEps) {
  Mlp::Tape tape;
  const Mat mu = pi.means(b.obs, &tape);
  const Vec logp = log_probs_from_means(mu, pi.log_std(), b.actions);
  const double B = static_cast<double>(b.obs.cols());
  Vec dLogp = Vec::Zero(logp.size());
  double obj = 0.0;
  for (Eigen::Index j = 0; j < logp.size(); ++j) {
    const double ratio = std::exp(logp[j] - b.oldLogp[j]);
    const double s1 = ratio * b.adv[j];
    const double s2 = std::clamp(ratio, 1.0 - clipEps, 1.0 + clipEps) * b.adv[j];
    if (s1 <= s2) {
      obj += s1;
      dLogp[j] = -s1 / B;
    } else {
      obj += s2;
    }
  }
  Mat dMean = Mat::Zero(mu.rows(), mu.cols());
  Vec dLogStd = Vec::Zero(pi.act_dim());
  logp_backward(mu, pi.log_std(), b.actions, dLogp, dMean, dLogStd);
  return {-obj / B, pi.chain(tape, dMean, dLogStd)};
}

LossGrad cup_project_loss(const GaussianPolicy& pi, const GaussianPolicy& prePi,
                          const PolicyBatch& b, const Vec& nu, double factor) {
  Mlp::Tape tape;
  const Mat mu = pi.means(b.obs, &tape);
  const Mat muQ = prePi.means(b.obs);
  const Vec& ls = pi.log_std();
  const Vec& lsQ = prePi.log_std();
  const double B = static_cast<double>(b.obs.cols());

  const Vec kl = gaussian_kl(mu, ls, muQ, lsQ);
  const Vec invVarQ = (-2.0 * lsQ.array()).exp();
  Mat dMean = (mu - muQ).array().colwise() * invVarQ.array() / B;
  Vec dLogStd = ((2.0 * ls.array()).exp() * invVarQ.array() - 1.0).matrix();  // per sample

  const Vec logp = log_probs_from_means(mu, ls, b.actions);
  Vec dLogp(logp.size());
  double loss = kl.sum();
  for (Eigen::Index j = 0; j < logp.size(); ++j) {
    const double ratio = std::exp(logp[j] - b.oldLogp[j]);
    const double term = factor * ratio * nu.dot(b.costAdv.col(j));
    loss += term;
    dLogp[j] = term / B;
  }
  logp_backward(mu, ls, b.actions, dLogp, dMean, dLogStd);
  return {loss / B, pi.chain(tape, dMean, dLogStd)};
}

Vec update_nu(const Vec& nu, double alphaNu, const Vec& costReturn, double costLimit,
              double nuMax) {
  return (nu.array() + alphaNu * (costReturn.array() - costLimit)).cwiseMax(0.0).cwiseMin(nuMax);
}

// --- CUP / PPO agent ----------------------------------------------------------

CupAgent::CupAgent(int obsDim, int actDim, int numCost, const std::vector<int>& hidden,
                   const CupHyper& hyper, std::uint64_t seed, Mode mode)
    : mode_(mode), hyper_(hyper), rng_(splitmix64(seed)) {
  Rng init(seed);
  pi_ = GaussianPolicy(obsDim, actDim, hidden, init, hyper.logStdInit);
  v_ = Mlp(obsDim, hidden, 1);
  v_.init_orthogonal(init, 1.0);
  vc_ = Mlp(obsDim, hidden, std::max(numCost, 1));
  vc_.init_orthogonal(init, 1.0);
  piOpt_ = Adam(pi_.num_parameters(), hyper.lrPolicy, hyper.gradClip);
  vOpt_ = Adam(v_.params().size(), hyper.lrValue, hyper.gradClip);
  vcOpt_ = Adam(vc_.params().size(), hyper.lrValue, hyper.gradClip);
  nu_ = Vec::Constant(std::max(numCost, 1), hyper.nuInit);
}

Vec CupAgent::act(const Vec& obs, bool explore) {
  return explore ? pi_.sample(obs, rng_) : pi_.mean(obs);
}

namespace {

Mat gather(const Mat& m, const std::vector<int>& idx) {
  Mat out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = m.col(idx[i]);
  return out;
}

Vec gather(const Vec& v, const std::vector<int>& idx) {
  Vec out(static_cast<Eigen::Index>(idx.size()));
  for (size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[idx[i]];
  return out;
}

void shuffle(std::vector<int>& idx, Rng& rng) {
  for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i)
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(uniform_index(rng, i + 1))]);
}

}  // namespace

UpdateStats CupAgent::update(const std::vector<Transition>& traj) {
  UpdateStats st;
  if (traj.empty()) return st;
  const bool cup = mode_ == Mode::kCup;
  const int B = static_cast<int>(traj.size());
  const int D = pi_.obs_dim();
  const int numCost = static_cast<int>(vc_.outputs());

  Mat obs(D, B), next(D, B), act(pi_.act_dim(), B), cost = Mat::Zero(numCost, B);
  Vec rew(B);
  for (int i = 0; i < B; ++i) {
    const auto& t = traj[static_cast<size_t>(i)];
    obs.col(i) = t.obs;
    next.col(i) = t.nextObs;
    act.col(i) = t.action;
    rew[i] = t.reward;
    if (cup) cost.col(i) = t.cost;
  }

  const double g = hyper_.gamma;
  const Vec v0 = v_.forward(obs).row(0).transpose();
  const Vec v1 = v_.forward(next).row(0).transpose();
  Vec adv = gae((rew + g * v1 - v0).eval(), g, hyper_.lambda);
  const Vec vTarget = adv + v0;

  Mat costAdv = Mat::Zero(numCost, B);
  Mat cTarget = Mat::Zero(numCost, B);
  if (cup) {
    const Mat c0 = vc_.forward(obs);
    const Mat c1 = vc_.forward(next);
    for (int l = 0; l < numCost; ++l) {
      const Vec delta = (cost.row(l) + g * c1.row(l) - c0.row(l)).transpose();
      costAdv.row(l) = gae(delta, g, hyper_.lambda).transpose();
    }
    cTarget = costAdv + c0;
    nu_ = update_nu(nu_, hyper_.alphaNu, cost.rowwise().mean(), hyper_.costLimit, hyper_.nuMax);
  }

  if (hyper_.normalizeAdvantages) {
    // Targets above keep the raw scale; only the policy sees normalized signals.
    const double mean = adv.mean();
    const double sd = std::sqrt((adv.array() - mean).square().mean());
    adv = ((adv.array() - mean) / (sd + 1e-8)).matrix();
    costAdv = costAdv.colwise() - costAdv.rowwise().mean();
  }

  const GaussianPolicy old = pi_;
  const Vec oldLogp = old.log_probs(obs, act);
  const Vec savedV = v_.params();
  const Vec savedVc = vc_.params();

  auto abort = [&] {
    pi_ = old;
    v_.params() = savedV;
    vc_.params() = savedVc;
    st.aborted = true;
    spdlog::warn("policy update produced a non-finite loss; parameters restored");
    return st;
  };

  std::vector<int> order(static_cast<size_t>(B));
  std::iota(order.begin(), order.end(), 0);
  const int mb = std::max(1, hyper_.minibatch);

  for (int epoch = 0; epoch < hyper_.epochs; ++epoch) {
    shuffle(order, rng_);
    for (int s = 0; s < B; s += mb) {
      const std::vector<int> idx(order.begin() + s, order.begin() + std::min(B, s + mb));
      const Mat o = gather(obs, idx);
      auto lv = value_loss(v_, o, gather(Mat(vTarget.transpose()), idx));
      if (!std::isfinite(lv.loss)) return abort();
      vOpt_.step(v_.params(), lv.grad);
      st.valueLoss = lv.loss;
      if (cup) {
        auto lc = value_loss(vc_, o, gather(cTarget, idx));
        if (!std::isfinite(lc.loss)) return abort();
        vcOpt_.step(vc_.params(), lc.grad);
        st.costValueLoss = lc.loss;
      }
      PolicyBatch pb{o, gather(act, idx), gather(adv, idx), gather(costAdv, idx),
                     gather(oldLogp, idx)};
      auto lp = cup_improve_loss(pi_, pb, hyper_.clipEps);
      if (!std::isfinite(lp.loss)) return abort();
      Vec theta = pi_.parameters();
      piOpt_.step(theta, lp.grad);
      pi_.set_parameters(theta);
    }
    ++st.improveEpochs;
    st.klImprove = mean_kl(pi_, old, obs);
    if (st.klImprove > hyper_.klBound) break;
  }
  if (!cup) return st;

  const GaussianPolicy pre = pi_;
  const double factor = (1.0 - g * hyper_.lambda) / (1.0 - g);
  for (int epoch = 0; epoch < hyper_.epochs; ++epoch) {
    shuffle(order, rng_);
    for (int s = 0; s < B; s += mb) {
      const std::vector<int> idx(order.begin() + s, order.begin() + std::min(B, s + mb));
      PolicyBatch pb{gather(obs, idx), gather(act, idx), gather(adv, idx), gather(costAdv, idx),
                     gather(oldLogp, idx)};
      auto lp = cup_project_loss(pi_, pre, pb, nu_, factor);
      if (!std::isfinite(lp.loss)) return abort();
      Vec theta = pi_.parameters();
      piOpt_.step(theta, lp.grad);
      pi_.set_parameters(theta);
    }
    ++st.projectEpochs;
    st.klProject = mean_kl(pi_, old, obs);
    if (st.klProject > hyper_.klBound) break;
  }
  return st;
}

// --- D3QN -------------------------------------------------------------------

QNetwork::QNetwork(int obsDim, int numActions, const std::vector<int>& hidden, Rng& init)
    : net_(obsDim, hidden, numActions + 1) {
  net_.init_orthogonal(init, 1.0);
}

Mat dueling_aggregate(const Mat& head) {
  const Eigen::Index A = head.rows() - 1;
  Mat q(A, head.cols());
  for (Eigen::Index j = 0; j < head.cols(); ++j) {
    const auto adv = head.col(j).tail(A);
    q.col(j) = (adv.array() - adv.mean() + head(0, j)).matrix();
  }
  return q;
}

Mat QNetwork::q_values(const Mat& obs, Mlp::Tape* tape) const {
  return dueling_aggregate(net_.forward(obs, tape));
}

Vec QNetwork::q_values(const Vec& o) const { return q_values(Mat(o)).col(0); }

Mat QNetwork::head_gradient(const Mat& dQ) {
  const Eigen::Index A = dQ.rows();
  Mat g(A + 1, dQ.cols());
  for (Eigen::Index j = 0; j < dQ.cols(); ++j) {
    const double s = dQ.col(j).sum();
    g(0, j) = s;
    g.col(j).tail(A) = (dQ.col(j).array() - s / static_cast<double>(A)).matrix();
  }
  return g;
}

void ReplayMemory::push(QTransition t) {
  if (capacity_ == 0) return;
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<const QTransition*> ReplayMemory::sample(size_t batch, Rng& rng) const {
  const size_t n = items_.size();
  batch = std::min(batch, n);
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::vector<const QTransition*> out;
  out.reserve(batch);
  for (size_t i = 0; i < batch; ++i) {
    const size_t j = i + static_cast<size_t>(uniform_index(rng, static_cast<int>(n - i)));
    std::swap(idx[i], idx[j]);
    out.push_back(&items_[idx[i]]);
  }
  return out;
}

LossGrad d3qn_loss(const QNetwork& online, const QNetwork& target,
                   const std::vector<const QTransition*>& batch, double gamma) {
  const Eigen::Index B = static_cast<Eigen::Index>(batch.size());
  const int D = online.net().inputs();
  Mat obs(D, B), next(D, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    obs.col(j) = batch[static_cast<size_t>(j)]->obs;
    next.col(j) = batch[static_cast<size_t>(j)]->nextObs;
  }
  Mlp::Tape tape;
  const Mat q = online.q_values(obs, &tape);
  const Mat qNextOnline = online.q_values(next);
  const Mat qNextTarget = target.q_values(next);
  Mat dQ = Mat::Zero(q.rows(), B);
  double loss = 0.0;
  for (Eigen::Index j = 0; j < B; ++j) {
    const auto& t = *batch[static_cast<size_t>(j)];
    Eigen::Index best = 0;
    qNextOnline.col(j).maxCoeff(&best);
    const double y = t.reward + gamma * qNextTarget(best, j);
    const double diff = q(t.action, j) - y;
    loss += diff * diff;
    dQ(t.action, j) = diff / static_cast<double>(B);
  }
  LossGrad lg;
  lg.loss = loss / (2.0 * static_cast<double>(B));
  lg.grad = online.net().backward(tape, QNetwork::head_gradient(dQ));
  return lg;
}

int epsilon_greedy(const Vec& q, double eps, Rng& rng) {
  if (uniform01(rng) < eps) return uniform_index(rng, static_cast<int>(q.size()));
  Eigen::Index best = 0;
  q.maxCoeff(&best);
  return static_cast<int>(best);
}

double decay_eps(double eps, double floor, double factor) { return std::max(floor, factor * eps); }

D3qnAgent::D3qnAgent(int obsDim, int numActions, const std::vector<int>& hidden,
                     const D3qnHyper& hyper, std::uint64_t seed)
    : hyper_(hyper),
      memory_(hyper.memory),
      sync_(hyper.targetPeriod),
      eps_(hyper.eps0),
      rng_(splitmix64(seed)) {
  Rng init(seed);
  online_ = QNetwork(obsDim, numActions, hidden, init);
  target_ = online_;
  opt_ = Adam(online_.net().params().size(), hyper.lr, hyper.gradClip);
}

int D3qnAgent::act(const Vec& obs, bool explore) {
  const Vec q = online_.q_values(obs);
  return epsilon_greedy(q, explore ? eps_ : 0.0, rng_);
}

int D3qnAgent::random_action() { return uniform_index(rng_, online_.num_actions()); }

double D3qnAgent::learn() {
  const auto batch = memory_.sample(hyper_.batch, rng_);
  auto lg = d3qn_loss(online_, target_, batch, hyper_.gamma);
  if (!std::isfinite(lg.loss)) {
    spdlog::warn("d3qn loss is non-finite; step skipped");
    return lg.loss;
  }
  opt_.step(online_.net().params(), lg.grad);
  return lg.loss;
}

bool D3qnAgent::maybe_sync() {
  if (!sync_.tick()) return false;
  target_ = online_;
  return true;
}

void D3qnAgent::decay() { eps_ = decay_eps(eps_, hyper_.epsFloor, hyper_.epsDecay); }

}  // namespace catn::learners
