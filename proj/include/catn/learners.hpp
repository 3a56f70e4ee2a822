#pragma once

#include <deque>
#include <vector>

#include "catn/nn.hpp"
#include "catn/rng.hpp"
#include "catn/types.hpp"

namespace catn::learners {

using nn::Adam;
using nn::Mlp;

// --- Shared -----------------------------------------------------------------

struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

/// A_i = gamma * lambda * A_{i+1} + delta_i, A_{B+1} = 0.
Vec gae(const Vec& deltas, double gamma, double lambda);

/// (1/B) sum_j ||V(o_j) - target_j||^2; targets is outputs x B.
LossGrad value_loss(const Mlp& v, const Mat& obs, const Mat& targets);

// --- Gaussian policy ----------------------------------------------------------

/// Diagonal Gaussian whose mean is the sigmoid output of an MLP and whose
/// log-std is a learned, state-independent vector.
class GaussianPolicy {
 public:
  GaussianPolicy() = default;
  GaussianPolicy(int obsDim, int actDim, const std::vector<int>& hidden, Rng& init,
                 double logStdInit = -1.0);

  int obs_dim() const { return net_.inputs(); }
  int act_dim() const { return net_.outputs(); }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }
  Vec& log_std() { return logStd_; }
  const Vec& log_std() const { return logStd_; }

  /// [net params; log_std]
  Vec parameters() const;
  void set_parameters(const Vec& theta);
  Eigen::Index num_parameters() const { return net_.params().size() + logStd_.size(); }

  Mat means(const Mat& obs, Mlp::Tape* tape = nullptr) const;
  Vec mean(const Vec& o) const;
  Vec sample(const Vec& o, Rng& rng) const;
  Vec log_probs(const Mat& obs, const Mat& actions) const;

  /// Gradient w.r.t. parameters() of sum_j [gLogp_j * log pi(a_j|o_j)] +
  /// sum_j <gMean_j, mean_j> + <gLogStd, log_std>.
  Vec chain(const Mlp::Tape& tape, const Mat& dMean, const Vec& dLogStd) const;

 private:
  Mlp net_;
  Vec logStd_;
};

/// Per-sample KL(p || q) for diagonal Gaussians with the given means.
Vec gaussian_kl(const Mat& meanP, const Vec& logStdP, const Mat& meanQ, const Vec& logStdQ);

double mean_kl(const GaussianPolicy& p, const GaussianPolicy& q, const Mat& obs);

struct PolicyBatch {
  Mat obs;      // obsDim x B
  Mat actions;  // actDim x B
  Vec adv;      // reward advantages
  Mat costAdv;  // numCost x B
  Vec oldLogp;  // log pi_theta'(a|o)
};

/// -(1/B) sum min(ratio A, clip(ratio, 1 - eps, 1 + eps) A).
LossGrad cup_improve_loss(const GaussianPolicy& pi, const PolicyBatch& b, double clipEps);

/// (1/B) sum [KL(pi, pi'') + nu^T factor ratio A^C], ratio against pi'.
LossGrad cup_project_loss(const GaussianPolicy& pi, const GaussianPolicy& prePi,
                          const PolicyBatch& b, const Vec& nu, double factor);

Vec update_nu(const Vec& nu, double alphaNu, const Vec& costReturn, double costLimit,
              double nuMax);

// --- CUP / PPO agent ----------------------------------------------------------

struct CupHyper {
  double gamma = 0.5;
  double lambda = 0.1;
  double alphaNu = 0.06;
  double lrValue = 3e-4;
  double lrPolicy = 3e-4;
  double nuInit = 1.0;
  double nuMax = 10.0;
  double costLimit = 0.0;
  double klBound = 0.02;
  double clipEps = 0.02;
  int minibatch = 10;
  int epochs = 20;
  double gradClip = 10.0;
  double logStdInit = -1.0;
  bool normalizeAdvantages = true;  // standardize A, center A^C per batch
};

struct Transition {
  Vec obs;
  Vec action;  // unclipped sample
  double reward = 0.0;
  Vec nextObs;
  Vec cost;
};

struct UpdateStats {
  int improveEpochs = 0;
  int projectEpochs = 0;
  double klImprove = 0.0;
  double klProject = 0.0;
  double valueLoss = 0.0;
  double costValueLoss = 0.0;
  bool aborted = false;
};

class CupAgent {
 public:
  enum class Mode { kCup, kPpo };

  CupAgent(int obsDim, int actDim, int numCost, const std::vector<int>& hidden,
           const CupHyper& hyper, std::uint64_t seed, Mode mode);

  /// Sampled (explore) or mean action, unclipped.
  Vec act(const Vec& obs, bool explore);
  UpdateStats update(const std::vector<Transition>& traj);

  Mode mode() const { return mode_; }
  const CupHyper& hyper() const { return hyper_; }
  GaussianPolicy& policy() { return pi_; }
  const GaussianPolicy& policy() const { return pi_; }
  Mlp& value() { return v_; }
  Mlp& cost_value() { return vc_; }
  Adam& policy_opt() { return piOpt_; }
  Adam& value_opt() { return vOpt_; }
  Adam& cost_value_opt() { return vcOpt_; }
  Vec& nu() { return nu_; }
  const Vec& nu() const { return nu_; }
  Rng& rng() { return rng_; }

 private:
  Mode mode_;
  CupHyper hyper_;
  GaussianPolicy pi_;
  Mlp v_;
  Mlp vc_;
  Adam piOpt_;
  Adam vOpt_;
  Adam vcOpt_;
  Vec nu_;
  Rng rng_;
};

// --- D3QN -------------------------------------------------------------------

/// Dueling head on an MLP with 1 + A linear outputs: Q = V + A - mean(A).
class QNetwork {
 public:
  QNetwork() = default;
  QNetwork(int obsDim, int numActions, const std::vector<int>& hidden, Rng& init);

  int num_actions() const { return net_.outputs() - 1; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  Mat q_values(const Mat& obs, Mlp::Tape* tape = nullptr) const;
  Vec q_values(const Vec& o) const;
  /// Maps dLoss/dQ (A x B) to dLoss/dOutput of the raw head.
  static Mat head_gradient(const Mat& dQ);

 private:
  Mlp net_;
};

Mat dueling_aggregate(const Mat& head);

struct QTransition {
  Vec obs;
  int action = 0;
  double reward = 0.0;
  Vec nextObs;
};

class ReplayMemory {
 public:
  explicit ReplayMemory(size_t capacity = 2000) : capacity_(capacity) {}
  void push(QTransition t);
  size_t size() const { return items_.size(); }
  size_t capacity() const { return capacity_; }
  const QTransition& at(size_t i) const { return items_[i]; }
  /// Uniform sample without replacement.
  std::vector<const QTransition*> sample(size_t batch, Rng& rng) const;
  void clear() { items_.clear(); }

 private:
  size_t capacity_;
  std::deque<QTransition> items_;
};

/// (1/2B) sum (Q(o_j, a_j) - y_j)^2 with the double-DQN target.
LossGrad d3qn_loss(const QNetwork& online, const QNetwork& target,
                   const std::vector<const QTransition*>& batch, double gamma);

int epsilon_greedy(const Vec& q, double eps, Rng& rng);
double decay_eps(double eps, double floor = 0.005, double factor = 0.995);

/// Hard target copy on every period-th tick.
class TargetSync {
 public:
  explicit TargetSync(int period = 50) : period_(period) {}
  bool tick() { return ++count_ % period_ == 0; }
  int count() const { return count_; }
  void set_count(int c) { count_ = c; }

 private:
  int period_;
  int count_ = 0;
};

struct D3qnHyper {
  double gamma = 0.5;
  double lr = 1e-3;
  double eps0 = 0.3;
  double epsFloor = 0.005;
  double epsDecay = 0.995;
  size_t memory = 2000;
  size_t batch = 200;
  int targetPeriod = 50;
  double gradClip = 10.0;
};

class D3qnAgent {
 public:
  D3qnAgent(int obsDim, int numActions, const std::vector<int>& hidden, const D3qnHyper& hyper,
            std::uint64_t seed);

  int act(const Vec& obs, bool explore);
  int random_action();
  void remember(QTransition t) { memory_.push(std::move(t)); }
  bool ready() const { return memory_.size() >= hyper_.batch; }
  /// One gradient step on a sampled batch; returns the loss.
  double learn();
  /// Advances the sync counter and copies online -> target when due.
  bool maybe_sync();
  void decay();

  QNetwork& online() { return online_; }
  QNetwork& target() { return target_; }
  Adam& opt() { return opt_; }
  ReplayMemory& memory() { return memory_; }
  TargetSync& sync() { return sync_; }
  double& eps() { return eps_; }
  Rng& rng() { return rng_; }

 private:
  D3qnHyper hyper_;
  QNetwork online_;
  QNetwork target_;
  Adam opt_;
  ReplayMemory memory_;
  TargetSync sync_;
  double eps_;
  Rng rng_;
};

}  // namespace catn::learners
