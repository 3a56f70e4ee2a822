#include <cmath>
#include <functional>
#include <set>

#include "doctest.h"

#include "catn/learners.hpp"

using namespace catn;
using namespace catn::learners;

namespace {

Mat random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * standard_normal(rng);
  return m;
}

// Central differences on a handful of random coordinates; returns the worst relative error.
double fd_check(Vec theta, const Vec& grad, const std::function<double(const Vec&)>& f, Rng& rng,
                int probes = 40, double h = 1e-6) {
  double worst = 0.0;
  for (int i = 0; i < probes; ++i) {
    const Eigen::Index j = uniform_index(rng, static_cast<int>(theta.size()));
    const double keep = theta[j];
    theta[j] = keep + h;
    const double up = f(theta);
    theta[j] = keep - h;
    const double down = f(theta);
    theta[j] = keep;
    const double num = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(num - grad[j]) / std::max(1e-6, std::abs(num) + std::abs(grad[j])));
  }
  return worst;
}

// Forward pass written out layer by layer from the flat parameter layout.
Mat manual_forward(const nn::Mlp& net, const Mat& x) {
  Mat a = x;
  Eigen::Index off = 0;
  const auto& s = net.sizes();
  for (int l = 0; l + 1 < static_cast<int>(s.size()); ++l) {
    Mat w(s[l + 1], s[l]);
    for (int c = 0; c < s[l]; ++c)
      for (int r = 0; r < s[l + 1]; ++r) w(r, c) = net.params()[off + c * s[l + 1] + r];
    off += s[l + 1] * s[l];
    const Vec b = net.params().segment(off, s[l + 1]);
    off += s[l + 1];
    Mat z = w * a;
    z.colwise() += b;
    const bool last = l + 2 == static_cast<int>(s.size());
    const auto act = last ? net.output_activation() : net.hidden_activation();
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      double& v = z.data()[i];
      if (act == nn::Activation::kRelu) v = v > 0 ? v : 0;
      if (act == nn::Activation::kTanh) v = std::tanh(v);
      if (act == nn::Activation::kSigmoid) v = 1 / (1 + std::exp(-v));
    }
    a = z;
  }
  return a;
}

}  // namespace

// --- networks ---------------------------------------------------------------

TEST_CASE("MLP forward matches a layer-by-layer evaluation") {
  Rng rng(1);
  for (auto act : {nn::Activation::kRelu, nn::Activation::kTanh}) {
    nn::Mlp net(5, {7, 4}, 3, act, nn::Activation::kSigmoid);
    for (auto& p : net.params()) p = 0.5 * standard_normal(rng);
    const Mat x = random_mat(rng, 5, 6);
    CHECK((net.forward(x) - manual_forward(net, x)).norm() < 1e-12);
  }
  CHECK_THROWS(nn::Mlp(0, {3}, 1));
}

TEST_CASE("MLP backward matches finite differences") {
  Rng rng(2);
  nn::Mlp net(4, {6, 5}, 3, nn::Activation::kTanh, nn::Activation::kLinear);
  for (auto& p : net.params()) p = 0.5 * standard_normal(rng);
  const Mat x = random_mat(rng, 4, 5);
  const Mat g = random_mat(rng, 3, 5);
  nn::Mlp::Tape tape;
  net.forward(x, &tape);
  const Vec grad = net.backward(tape, g);
  auto f = [&](const Vec& th) {
    nn::Mlp n2 = net;
    n2.params() = th;
    return (n2.forward(x).array() * g.array()).sum();
  };
  CHECK(fd_check(net.params(), grad, f, rng, 60) < 1e-6);
}

TEST_CASE("orthogonal initialization") {
  Rng rng(3);
  nn::Mlp net(6, {8}, 3);
  net.init_orthogonal(rng, 0.01);
  const Mat w0 = Eigen::Map<const Mat>(net.params().data(), 8, 6);
  CHECK((w0.transpose() * w0 - 2.0 * Mat::Identity(6, 6)).norm() < 1e-10);
  const Mat w1 = Eigen::Map<const Mat>(net.params().data() + 8 * 7, 3, 8);
  CHECK((w1 * w1.transpose() - 1e-4 * Mat::Identity(3, 3)).norm() < 1e-14);
  CHECK(net.params().segment(48, 8).isZero(0.0));
}

TEST_CASE("Adam first step and gradient clipping") {
  nn::Adam a(3, 0.1, 10.0);
  Vec p = Vec::Zero(3);
  a.step(p, (Vec(3) << 2.0, -0.5, 0.0).finished());
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-6));
  CHECK(p[2] == 0.0);

  nn::Adam b(2, 0.1, 1.0);
  Vec q = Vec::Zero(2);
  b.step(q, (Vec(2) << 30.0, 40.0).finished());
  CHECK(b.first_moment()[0] == doctest::Approx(0.1 * 0.6));
  CHECK(b.second_moment()[1] == doctest::Approx(0.001 * 0.64));
  CHECK(b.steps() == 1);
}

// --- shared pieces ----------------------------------------------------------

TEST_CASE("GAE hand values and direct sums") {
  const Vec a = gae(Vec::Ones(3), 0.5, 0.1);
  CHECK(a[0] == doctest::Approx(1.0525));
  CHECK(a[1] == doctest::Approx(1.05));
  CHECK(a[2] == doctest::Approx(1.0));

  Rng rng(4);
  const Vec d = random_mat(rng, 30, 1);
  const Vec g = gae(d, 0.9, 0.7);
  for (int i = 0; i < 30; ++i) {
    double want = 0.0;
    for (int j = i; j < 30; ++j) want += std::pow(0.63, j - i) * d[j];
    CHECK(g[i] == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("value loss gradient") {
  Rng rng(5);
  nn::Mlp v(4, {8}, 2, nn::Activation::kTanh);
  v.init_orthogonal(rng, 1.0);
  const Mat o = random_mat(rng, 4, 7);
  const Mat t = random_mat(rng, 2, 7);
  const auto lg = value_loss(v, o, t);
  CHECK(lg.loss == doctest::Approx((v.forward(o) - t).squaredNorm() / 7));
  auto f = [&](const Vec& th) {
    nn::Mlp n2 = v;
    n2.params() = th;
    return value_loss(n2, o, t).loss;
  };
  CHECK(fd_check(v.params(), lg.grad, f, rng) < 1e-6);
}

TEST_CASE("Gaussian log-density and KL closed forms") {
  Rng rng(6);
  GaussianPolicy p(3, 2, {5}, rng, -0.7);
  const Mat o = random_mat(rng, 3, 4);
  const Mat a = random_mat(rng, 2, 4, 0.5);
  const Mat mu = p.means(o);
  const Vec lp = p.log_probs(o, a);
  for (int j = 0; j < 4; ++j) {
    double want = 0.0;
    for (int d = 0; d < 2; ++d) {
      const double s = std::exp(-0.7);
      want += -0.5 * std::pow((a(d, j) - mu(d, j)) / s, 2) - std::log(s) - 0.5 * std::log(2 * kPi);
    }
    CHECK(lp[j] == doctest::Approx(want).epsilon(1e-12));
  }

  const Mat mq = random_mat(rng, 2, 4);
  const Vec lsP = (Vec(2) << -0.3, 0.2).finished(), lsQ = (Vec(2) << 0.1, -0.5).finished();
  const Vec kl = gaussian_kl(mu, lsP, mq, lsQ);
  for (int j = 0; j < 4; ++j) {
    double want = 0.0;
    for (int d = 0; d < 2; ++d) {
      const double sp = std::exp(lsP[d]), sq = std::exp(lsQ[d]);
      want += std::log(sq / sp) + (sp * sp + std::pow(mu(d, j) - mq(d, j), 2)) / (2 * sq * sq) - 0.5;
    }
    CHECK(kl[j] == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(gaussian_kl(mu, lsP, mu, lsP).isZero(1e-14));
  CHECK(mean_kl(p, p, o) == 0.0);
}

namespace {

PolicyBatch random_batch(Rng& rng, const GaussianPolicy& pi, int B, int numCost) {
  PolicyBatch b;
  b.obs = random_mat(rng, pi.obs_dim(), B);
  b.actions = pi.means(b.obs) + random_mat(rng, pi.act_dim(), B, 0.3);
  b.adv = random_mat(rng, B, 1);
  b.costAdv = random_mat(rng, numCost, B);
  b.oldLogp = pi.log_probs(b.obs, b.actions) + random_mat(rng, B, 1, 0.3);
  return b;
}

}  // namespace

TEST_CASE("improvement loss value and gradient") {
  Rng rng(7);
  GaussianPolicy pi(4, 3, {8}, rng, -0.5);
  for (auto& p : pi.net().params()) p = 0.4 * standard_normal(rng);
  const auto b = random_batch(rng, pi, 12, 2);
  for (double eps : {0.2, 100.0}) {
    const auto lg = cup_improve_loss(pi, b, eps);
    const Vec ratio = (pi.log_probs(b.obs, b.actions) - b.oldLogp).array().exp();
    double want = 0.0;
    for (int j = 0; j < 12; ++j)
      want += std::min(ratio[j] * b.adv[j], std::clamp(ratio[j], 1 - eps, 1 + eps) * b.adv[j]);
    CHECK(lg.loss == doctest::Approx(-want / 12).epsilon(1e-12));
    auto f = [&](const Vec& th) {
      GaussianPolicy q = pi;
      q.set_parameters(th);
      return cup_improve_loss(q, b, eps).loss;
    };
    CHECK(fd_check(pi.parameters(), lg.grad, f, rng, 60) < 1e-5);
  }
}

TEST_CASE("projection loss value and gradient") {
  Rng rng(8);
  GaussianPolicy pi(4, 3, {8}, rng, -0.5);
  GaussianPolicy pre = pi;
  for (auto& p : pi.net().params()) p += 0.2 * standard_normal(rng);
  pi.log_std() << -0.4, -0.6, -0.45;
  const auto b = random_batch(rng, pi, 12, 2);
  const Vec nu = (Vec(2) << 0.7, 2.0).finished();
  const double factor = (1 - 0.05) / 0.5;
  const auto lg = cup_project_loss(pi, pre, b, nu, factor);
  const Vec kl = gaussian_kl(pi.means(b.obs), pi.log_std(), pre.means(b.obs), pre.log_std());
  const Vec ratio = (pi.log_probs(b.obs, b.actions) - b.oldLogp).array().exp();
  double want = 0.0;
  for (int j = 0; j < 12; ++j) want += kl[j] + factor * ratio[j] * nu.dot(b.costAdv.col(j));
  CHECK(lg.loss == doctest::Approx(want / 12).epsilon(1e-12));
  auto f = [&](const Vec& th) {
    GaussianPolicy q = pi;
    q.set_parameters(th);
    return cup_project_loss(q, pre, b, nu, factor).loss;
  };
  CHECK(fd_check(pi.parameters(), lg.grad, f, rng, 60) < 1e-5);
}

TEST_CASE("dual update is a projected step") {
  const Vec nu = (Vec(3) << 1.0, 0.01, 9.99).finished();
  const Vec jc = (Vec(3) << 0.5, -2.0, 3.0).finished();
  const Vec out = update_nu(nu, 0.06, jc, 0.0, 10.0);
  CHECK(out[0] == doctest::Approx(1.03));
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 10.0);
  CHECK(update_nu(nu, 0.06, jc, 0.5, 10.0)[0] == doctest::Approx(1.0));
}

// --- CUP agent --------------------------------------------------------------

namespace {

// One-step bandit: reward grows with the action, the cost limit binds at a = 0.3.
double run_bandit(CupAgent& agent, int rounds) {
  const Vec o = (Vec(2) << 1.0, -0.5).finished();
  double tail = 0.0;
  for (int r = 0; r < rounds; ++r) {
    std::vector<Transition> traj;
    for (int i = 0; i < 50; ++i) {
      const Vec a = agent.act(o, true);
      const double x = std::clamp(a[0], 0.0, 1.0);
      traj.push_back({o, a, x, o, Vec::Constant(1, x / 0.3 - 1.0)});
    }
    agent.update(traj);
    if (r >= rounds - 20) tail += std::clamp(agent.act(o, false)[0], 0.0, 1.0) / 20;
  }
  return tail;
}

}  // namespace

TEST_CASE("CUP respects a binding cost limit that PPO ignores") {
  CupHyper h;
  h.minibatch = 10;
  h.lrPolicy = 3e-3;
  h.lrValue = 3e-3;
  h.alphaNu = 0.2;
  CupAgent cup(2, 1, 1, {16}, h, 11, CupAgent::Mode::kCup);
  CupAgent ppo(2, 1, 1, {16}, h, 11, CupAgent::Mode::kPpo);
  const double aCup = run_bandit(cup, 300);
  const double aPpo = run_bandit(ppo, 300);
  MESSAGE("cup " << aCup << " ppo " << aPpo << " nu " << cup.nu()[0]);
  CHECK(aPpo > 0.8);
  CHECK(aCup < 0.45);
  CHECK(cup.nu()[0] > 0.0);
  CHECK(ppo.nu()[0] == h.nuInit);
}

TEST_CASE("KL early stopping in both steps is measured against the pre-update policy") {
  Rng rng(12);
  auto traj = [&] {
    std::vector<Transition> t;
    for (int i = 0; i < 50; ++i) {
      const Vec o = random_mat(rng, 3, 1);
      t.push_back({o, random_mat(rng, 2, 1), standard_normal(rng), random_mat(rng, 3, 1),
                   random_mat(rng, 1, 1)});
    }
    return t;
  }();

  CupHyper tight;
  tight.klBound = 1e-12;
  CupAgent a(3, 2, 1, {8}, tight, 1, CupAgent::Mode::kCup);
  const GaussianPolicy before = a.policy();
  const auto st = a.update(traj);
  CHECK(st.improveEpochs == 1);
  CHECK(st.projectEpochs == 1);
  Mat obs(3, 50);
  for (int i = 0; i < 50; ++i) obs.col(i) = traj[static_cast<size_t>(i)].obs;
  CHECK(st.klProject == doctest::Approx(mean_kl(a.policy(), before, obs)).epsilon(1e-12));

  CupHyper loose;
  loose.klBound = 1e9;
  CupAgent b(3, 2, 1, {8}, loose, 1, CupAgent::Mode::kCup);
  const auto sb = b.update(traj);
  CHECK(sb.improveEpochs == 20);
  CHECK(sb.projectEpochs == 20);

  CupAgent c(3, 2, 1, {8}, loose, 1, CupAgent::Mode::kPpo);
  const auto sc = c.update(traj);
  CHECK(sc.projectEpochs == 0);
  CHECK(c.update({}).improveEpochs == 0);
}

// --- D3QN -------------------------------------------------------------------

TEST_CASE("dueling aggregation") {
  Rng rng(13);
  const Mat head = random_mat(rng, 5, 3);
  const Mat q = dueling_aggregate(head);
  for (int j = 0; j < 3; ++j) CHECK(q.col(j).mean() == doctest::Approx(head(0, j)));
  Mat shifted = head;
  shifted.bottomRows(4).array() += 3.0;
  CHECK((dueling_aggregate(shifted) - q).norm() < 1e-12);
}

TEST_CASE("D3QN loss uses the double-Q target and has the right gradient") {
  Rng rng(14);
  QNetwork online(3, 4, {8}, rng), target(3, 4, {8}, rng);
  std::vector<QTransition> items;
  for (int i = 0; i < 10; ++i)
    items.push_back({random_mat(rng, 3, 1), uniform_index(rng, 4), standard_normal(rng), random_mat(rng, 3, 1)});
  std::vector<const QTransition*> batch;
  for (auto& t : items) batch.push_back(&t);
  const auto lg = d3qn_loss(online, target, batch, 0.5);
  double want = 0.0;
  for (const auto& t : items) {
    Eigen::Index best = 0;
    online.q_values(t.nextObs).maxCoeff(&best);
    const double y = t.reward + 0.5 * target.q_values(t.nextObs)[best];
    want += std::pow(online.q_values(t.obs)[t.action] - y, 2);
  }
  CHECK(lg.loss == doctest::Approx(want / 20).epsilon(1e-12));
  auto f = [&](const Vec& th) {
    QNetwork q = online;
    q.net().params() = th;
    return d3qn_loss(q, target, batch, 0.5).loss;
  };
  CHECK(fd_check(online.net().params(), lg.grad, f, rng, 60) < 1e-5);
}

TEST_CASE("epsilon schedule") {
  double eps = 0.3;
  int steps = 0;
  while (eps > 0.005) {
    eps = decay_eps(eps);
    ++steps;
  }
  CHECK(eps == 0.005);
  CHECK(steps == static_cast<int>(std::ceil(std::log(0.005 / 0.3) / std::log(0.995))));
  CHECK(decay_eps(0.005) == 0.005);
}

TEST_CASE("epsilon-greedy") {
  Rng rng(15);
  const Vec q = (Vec(4) << 0.1, 0.9, 0.9, 0.3).finished();
  for (int i = 0; i < 20; ++i) CHECK(epsilon_greedy(q, 0.0, rng) == 1);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 40000; ++i) ++counts[static_cast<size_t>(epsilon_greedy(q, 1.0, rng))];
  for (int c : counts) CHECK(std::abs(c - 10000) < 400);
}

TEST_CASE("replay memory is a FIFO and samples without replacement") {
  ReplayMemory m(3);
  for (int i = 0; i < 5; ++i) m.push({Vec::Zero(1), i, 0.0, Vec::Zero(1)});
  CHECK(m.size() == 3);
  CHECK(m.at(0).action == 2);
  CHECK(m.at(2).action == 4);
  Rng rng(16);
  const auto s = m.sample(3, rng);
  std::set<int> seen;
  for (auto* t : s) seen.insert(t->action);
  CHECK(seen.size() == 3);
  CHECK(m.sample(10, rng).size() == 3);
}

TEST_CASE("target sync fires every period") {
  TargetSync s(50);
  int copies = 0;
  for (int i = 0; i < 200; ++i) copies += s.tick();
  CHECK(copies == 4);
}

TEST_CASE("D3QN agent wiring") {
  D3qnHyper h;
  h.batch = 4;
  h.memory = 10;
  D3qnAgent a(2, 3, {8}, h, 5);
  CHECK(a.eps() == 0.3);
  CHECK_FALSE(a.ready());
  for (int i = 0; i < 4; ++i) a.remember({Vec::Ones(2), i % 3, 1.0, Vec::Ones(2)});
  CHECK(a.ready());
  const Vec before = a.online().net().params();
  a.learn();
  CHECK(a.online().net().params() != before);
  CHECK(a.target().net().params() != a.online().net().params());
  for (int i = 0; i < 49; ++i) CHECK_FALSE(a.maybe_sync());
  CHECK(a.maybe_sync());
  CHECK(a.target().net().params() == a.online().net().params());
  a.decay();
  CHECK(a.eps() == doctest::Approx(0.3 * 0.995));
}
