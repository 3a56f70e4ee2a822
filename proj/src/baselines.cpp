#include "catn/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

#include <spdlog/spdlog.h>

namespace catn::baselines {

AssociationMap sc_associate(const Mat& strengths) {
  const int numBs = static_cast<int>(strengths.rows());
  std::vector<int> serving(static_cast<size_t>(strengths.cols()), 0);
  for (Eigen::Index k = 0; k < strengths.cols(); ++k) {
    int best = 0;
    for (int n = 1; n < numBs; ++n)
      if (strengths(n, k) > strengths(best, k)) best = n;
    serving[static_cast<size_t>(k)] = best;
  }
  return AssociationMap(numBs, std::move(serving));
}

// ---------------------------------------------------------------------------
// DCD

Mat dcd_utilities(const Vec& q, const Mat& strengths, const Vec& noise, int numAntennas) {
  const Eigen::Index numBs = strengths.rows();
  const Eigen::Index numTu = strengths.cols();
  Mat u(numBs, numTu);
  for (Eigen::Index k = 0; k < numTu; ++k) {
    double total = 0.0;
    for (Eigen::Index m = 0; m < numBs; ++m) total += strengths(m, k) * q[m];
    for (Eigen::Index n = 0; n < numBs; ++n) {
      const double signal = strengths(n, k) * q[n];
      const double sinr = signal / (total - signal + noise[k]);
      if (!(sinr > 0.0)) {
        throw std::domain_error("dcd: zero SINR on link (BS " + std::to_string(n) + ", TU " +
                                std::to_string(k) + ")");
      }
      u(n, k) = std::log(numAntennas * std::log2(1.0 + sinr));
    }
  }
  return u;
}

double dcd_dual_objective(const Mat& utility, const Vec& mu, double nu) {
  double g = 0.0;
  for (Eigen::Index k = 0; k < utility.cols(); ++k) g += (utility.col(k) - mu).maxCoeff();
  for (Eigen::Index n = 0; n < mu.size(); ++n) g += std::exp(mu[n] - nu - 1.0);
  return g + nu * static_cast<double>(utility.cols());
}

double dcd_assignment_value(const Mat& utility, const Vec& mu, double nu,
                            const std::vector<int>& serving) {
  double g = 0.0;
  for (size_t k = 0; k < serving.size(); ++k)
    g += utility(serving[k], static_cast<Eigen::Index>(k)) - mu[serving[k]];
  for (Eigen::Index n = 0; n < mu.size(); ++n) g += std::exp(mu[n] - nu - 1.0);
  return g + nu * static_cast<double>(utility.cols());
}

namespace {

double nu_from_prices(const Vec& mu, int numTu) {
  double s = 0.0;
  for (Eigen::Index n = 0; n < mu.size(); ++n) s += std::exp(mu[n] - 1.0);
  return std::log(s / numTu);
}

// sup{ m : e^{m - nu - 1} <= |U_n(m)| }. |U_n(m)| counts TUs whose margin
// t_k = u_{n,k} - max_{j != n}(u_{j,k} - mu_j) is >= m, so it is a step function
// with breakpoints at the t_k and the sup is max_j min(t_(j), nu + 1 + log j)
// over the margins sorted in descending order.
double price_update(const Mat& utility, const Vec& mu, double nu, int n) {
  const Eigen::Index numBs = utility.rows();
  const Eigen::Index numTu = utility.cols();
  std::vector<double> margin(static_cast<size_t>(numTu));
  for (Eigen::Index k = 0; k < numTu; ++k) {
    double rival = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < numBs; ++j)
      if (j != n) rival = std::max(rival, utility(j, k) - mu[j]);
    margin[static_cast<size_t>(k)] = utility(n, k) - rival;
  }
  std::sort(margin.begin(), margin.end(), std::greater<>());
  double best = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < margin.size(); ++j) {
    const double cap = nu + 1.0 + std::log(static_cast<double>(j + 1));
    best = std::max(best, std::min(margin[j], cap));
  }
  return best;
}

// Ties (within a relative 1e-9) go to the BS with fewer TUs assigned so far,
// then to the lower index.
std::vector<int> argmax_assignment(const Mat& utility, const Vec& mu) {
  std::vector<int> serving(static_cast<size_t>(utility.cols()));
  std::vector<int> load(static_cast<size_t>(utility.rows()), 0);
  for (Eigen::Index k = 0; k < utility.cols(); ++k) {
    const double top = (utility.col(k) - mu).maxCoeff();
    const double tol = 1e-9 * std::max(1.0, std::abs(top));
    int best = -1;
    for (int n = 0; n < utility.rows(); ++n) {
      if (utility(n, k) - mu[n] < top - tol) continue;
      if (best < 0 || load[static_cast<size_t>(n)] < load[static_cast<size_t>(best)]) best = n;
    }
    serving[static_cast<size_t>(k)] = best;
    ++load[static_cast<size_t>(best)];
  }
  return serving;
}

}  // namespace

DcdResult dcd_associate(const Vec& q, const Mat& strengths, const Vec& noise, int numAntennas,
                        const DcdOptions& opts) {
  for (Eigen::Index n = 0; n < q.size(); ++n)
    if (!(q[n] > 0.0)) throw std::invalid_argument("dcd: BS powers must be > 0");
  DcdResult res;
  const int numBs = static_cast<int>(strengths.rows());
  const int numTu = static_cast<int>(strengths.cols());
  res.utility = dcd_utilities(q, strengths, noise, numAntennas);
  res.mu = Vec::Zero(numBs);
  res.nu = nu_from_prices(res.mu, numTu);
  double g = dcd_dual_objective(res.utility, res.mu, res.nu);
  res.dualHistory.push_back(g);

  for (int it = 1; it <= opts.maxIterations; ++it) {
    for (int n = 0; n < numBs; ++n) res.mu[n] = price_update(res.utility, res.mu, res.nu, n);
    res.nu = nu_from_prices(res.mu, numTu);
    const double gNext = dcd_dual_objective(res.utility, res.mu, res.nu);
    res.dualHistory.push_back(gNext);
    res.iterations = it;
    if (!std::isfinite(gNext)) throw std::runtime_error("dcd: dual objective became non-finite");
    const bool done = std::abs(g - gNext) <= opts.tolerance * std::max(1.0, std::abs(gNext));
    g = gNext;
    if (done) {
      res.converged = true;
      break;
    }
  }
  res.assoc = AssociationMap(numBs, argmax_assignment(res.utility, res.mu));
  return res;
}

// ---------------------------------------------------------------------------
// Stage 1

double stage1_utility(const Vec& q, const Mat& strengths, const Vec& noise, int numAntennas,
                      const AssociationMap& assoc) {
  const auto loads = assoc.loads();
  double total = 0.0;
  for (int k = 0; k < assoc.numTu(); ++k) {
    const int n = assoc.serving(k);
    double interference = noise[k];
    for (Eigen::Index m = 0; m < strengths.rows(); ++m)
      if (m != n) interference += strengths(m, k) * q[m];
    const double sinr = strengths(n, k) * q[n] / interference;
    total += std::log(numAntennas * std::log2(1.0 + sinr)) -
             std::log(static_cast<double>(loads[static_cast<size_t>(n)]));
  }
  return total;
}

namespace {

// Gradient of stage1_utility with respect to x = log q.
Vec utility_gradient(const Vec& x, const Mat& strengths, const Vec& noise,
                     const AssociationMap& assoc) {
  const Vec q = x.array().exp();
  Vec grad = Vec::Zero(x.size());
  for (int k = 0; k < assoc.numTu(); ++k) {
    const int n = assoc.serving(k);
    double interference = noise[k];
    for (Eigen::Index m = 0; m < strengths.rows(); ++m)
      if (m != n) interference += strengths(m, k) * q[m];
    const double sinr = strengths(n, k) * q[n] / interference;
    const double dUdS = 1.0 / ((1.0 + sinr) * std::log1p(sinr));
    grad[n] += dUdS * sinr;
    for (Eigen::Index m = 0; m < strengths.rows(); ++m)
      if (m != n) grad[m] -= dUdS * sinr * strengths(m, k) * q[m] / interference;
  }
  return grad;
}

}  // namespace

Vec newton_power_update(const Vec& q0, const Mat& strengths, const Vec& noise, int numAntennas,
                        const AssociationMap& assoc, double pMax, const Stage1Options& opts,
                        bool* fellBack) {
  const Eigen::Index numBs = q0.size();
  const double lo = std::log(pMax * opts.minPowerFraction);
  const double hi = std::log(pMax);
  auto project = [&](Vec x) {
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo, hi);
    return x;
  };
  auto objective = [&](const Vec& x) {
    return stage1_utility(x.array().exp().matrix(), strengths, noise, numAntennas, assoc);
  };

  Vec x = project(q0.array().log().matrix());
  double fx = objective(x);
  if (fellBack) *fellBack = false;

  for (int step = 0; step < opts.maxNewtonSteps; ++step) {
    const Vec grad = utility_gradient(x, strengths, noise, assoc);
    Mat hess(numBs, numBs);
    constexpr double h = 1e-5;
    for (Eigen::Index i = 0; i < numBs; ++i) {
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      hess.col(i) = (utility_gradient(xp, strengths, noise, assoc) -
                     utility_gradient(xm, strengths, noise, assoc)) /
                    (2.0 * h);
    }
    hess = 0.5 * (hess + hess.transpose());
    const double top = Eigen::SelfAdjointEigenSolver<Mat>(hess, Eigen::EigenvaluesOnly)
                           .eigenvalues()
                           .maxCoeff();
    const double shift = std::max(0.0, top + 1e-8);
    hess.diagonal().array() -= shift;
    const Vec dir = -hess.ldlt().solve(grad);
    if (!dir.allFinite()) {
      if (fellBack) *fellBack = true;
      spdlog::warn("stage1: Newton step diverged; falling back to full power");
      return Vec::Constant(numBs, pMax);
    }

    double t = 1.0;
    bool improved = false;
    Vec xNext;
    double fNext = fx;
    while (t > 1e-8) {
      xNext = project(x + t * dir);
      fNext = objective(xNext);
      if (std::isfinite(fNext) && fNext > fx) {
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) break;
    const double gain = fNext - fx;
    x = xNext;
    fx = fNext;
    if (gain < 1e-12 * std::max(1.0, std::abs(fx))) break;
  }
  if (!std::isfinite(fx)) {
    if (fellBack) *fellBack = true;
    spdlog::warn("stage1: non-finite utility; falling back to full power");
    return Vec::Constant(numBs, pMax);
  }
  return x.array().exp();
}

Stage1Result stage1_ua_power(const Mat& strengths, const Vec& noise, int numAntennas, double pMax,
                             const Stage1Options& opts) {
  const int numBs = static_cast<int>(strengths.rows());
  Stage1Result best;
  best.q = Vec::Constant(numBs, pMax);
  best.assoc = dcd_associate(best.q, strengths, noise, numAntennas, opts.dcd).assoc;
  best.utility = stage1_utility(best.q, strengths, noise, numAntennas, best.assoc);
  if (opts.fixedPower || numBs == 1) return best;

  AssociationMap assoc = best.assoc;
  Vec q = best.q;
  for (int round = 1; round <= opts.maxRounds; ++round) {
    bool fell = false;
    q = newton_power_update(q, strengths, noise, numAntennas, assoc, pMax, opts, &fell);
    best.newtonFallback = best.newtonFallback || fell;
    const double uSame = stage1_utility(q, strengths, noise, numAntennas, assoc);
    if (uSame > best.utility) {
      best.assoc = assoc;
      best.q = q;
      best.utility = uSame;
    }
    AssociationMap next = dcd_associate(q, strengths, noise, numAntennas, opts.dcd).assoc;
    const double uNext = stage1_utility(q, strengths, noise, numAntennas, next);
    if (uNext > best.utility) {
      best.assoc = next;
      best.q = q;
      best.utility = uNext;
    }
    best.rounds = round;
    if (next == assoc) break;
    assoc = std::move(next);
  }
  return best;
}

// ---------------------------------------------------------------------------
// WMMSE

BeamformerSet mrt_beamformers(const phy::ChannelSet& ch, const AssociationMap& assoc, double pMax) {
  BeamformerSet bf = BeamformerSet::zeros(assoc.numTu(), ch.numAntennas);
  const auto loads = assoc.loads();
  for (int k = 0; k < assoc.numTu(); ++k) {
    const int n = assoc.serving(k);
    const CVec& h = ch.h(n, k);
    const double nrm = h.norm();
    if (nrm == 0.0) continue;
    bf.w[static_cast<size_t>(k)] =
        std::sqrt(pMax / loads[static_cast<size_t>(n)]) * h / nrm;
  }
  return bf;
}

BeamformerSet truncate_to_interference(const phy::ChannelSet& ch, const AssociationMap& assoc,
                                       const BeamformerSet& bf, double iMax) {
  if (!std::isfinite(iMax)) return bf;
  const auto au = phy::au_interference(ch, assoc, bf);
  double scale = 1.0;
  for (Eigen::Index l = 0; l < au.rho.size(); ++l)
    if (au.rho[l] > iMax) scale = std::min(scale, iMax / au.rho[l]);
  BeamformerSet out = bf;
  if (scale < 1.0)
    for (auto& w : out.w) w *= std::sqrt(scale);
  return out;
}

namespace {

struct BsSolve {
  Eigen::SelfAdjointEigenSolver<CMat> eig;
  std::vector<int> users;
  std::vector<CVec> proj;  // U^H b_k
};

// Power of the regularized solution at eta.
double solve_power(const BsSolve& s, double eta) {
  const Vec& lam = s.eig.eigenvalues();
  double p = 0.0;
  for (const CVec& c : s.proj)
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      const double d = lam[i] + eta;
      p += std::norm(c[i]) / (d * d);
    }
  return p;
}

}  // namespace

WmmseResult wmmse_cbf(const phy::ChannelSet& ch, const AssociationMap& assoc, const Vec& noise,
                      double pMax, double iMax, const std::optional<BeamformerSet>& init,
                      const WmmseOptions& opts) {
  const int numBs = ch.numBs;
  const int numTu = ch.numTu;
  const int numAu = ch.numAu;
  const int m = ch.numAntennas;
  const bool interferenceActive = numAu > 0 && std::isfinite(iMax);

  // Work in units where the noise reference and I_max are both one.
  const double noiseRef = noise.mean();
  const double hScale = 1.0 / std::sqrt(noiseRef);
  const double gScale = interferenceActive ? 1.0 / std::sqrt(iMax) : 0.0;
  const Vec noiseN = noise / noiseRef;
  auto hN = [&](int n, int k) { return CVec(ch.h(n, k) * hScale); };
  std::vector<CVec> gN(static_cast<size_t>(numBs * numAu));
  for (int n = 0; n < numBs; ++n)
    for (int l = 0; l < numAu; ++l) gN[static_cast<size_t>(n * numAu + l)] = ch.g(n, l) * gScale;

  WmmseResult res;
  res.mu = Vec::Zero(numAu);
  res.eta = Vec::Zero(numBs);

  // Initial point: full power (warm start or MRT), pulled inside the interference limit.
  BeamformerSet bf = mrt_beamformers(ch, assoc, pMax);
  if (init) {
    for (int k = 0; k < numTu; ++k) {
      const CVec& w0 = init->w[static_cast<size_t>(k)];
      if (w0.size() == m && w0.squaredNorm() > 0.0) bf.w[static_cast<size_t>(k)] = w0;
    }
    for (int n = 0; n < numBs; ++n) {
      const double p = bf.bsPower(assoc, n);
      if (p > pMax)
        for (int k : assoc.users(n)) bf.w[static_cast<size_t>(k)] *= std::sqrt(pMax / p);
    }
  }
  bf = truncate_to_interference(ch, assoc, bf, iMax);

  auto record = [&](const BeamformerSet& b) {
    const auto snap = phy::evaluate(ch, assoc, b, noise);
    res.objective.push_back(snap.sumRate());
    double excess = -pMax;
    for (int n = 0; n < numBs; ++n) excess = std::max(excess, b.bsPower(assoc, n) - pMax);
    res.maxPowerExcess.push_back(excess);
    res.rhoHistory.push_back(snap.rho);
    return snap.sumRate();
  };
  double obj = record(bf);

  std::vector<std::vector<int>> users(static_cast<size_t>(numBs));
  for (int n = 0; n < numBs; ++n) users[static_cast<size_t>(n)] = assoc.users(n);

  for (int it = 1; it <= opts.maxIterations; ++it) {
    // Receive-side update.
    Vec u(numTu), alpha(numTu);
    std::vector<Complex> v(static_cast<size_t>(numTu));
    for (int k = 0; k < numTu; ++k) {
      double total = noiseN[k];
      Complex desired{};
      for (int i = 0; i < numTu; ++i) {
        const Complex y = hN(assoc.serving(i), k).dot(bf.w[static_cast<size_t>(i)]);
        total += std::norm(y);
        if (i == k) desired = y;
      }
      const double interference = std::max(total - std::norm(desired), 1e-300);
      u[k] = std::norm(desired) / interference;
      v[static_cast<size_t>(k)] = std::sqrt(1.0 + u[k]) * desired / total;
      alpha[k] = std::norm(v[static_cast<size_t>(k)]);
    }

    // Per-BS quadratic terms that do not depend on the duals.
    std::vector<CMat> base(static_cast<size_t>(numBs), CMat::Zero(m, m));
    std::vector<std::vector<CVec>> rhs(static_cast<size_t>(numBs));
    for (int n = 0; n < numBs; ++n) {
      for (int i = 0; i < numTu; ++i) {
        const CVec h = hN(n, i);
        base[static_cast<size_t>(n)] += alpha[i] * h * h.adjoint();
      }
      for (int k : users[static_cast<size_t>(n)])
        rhs[static_cast<size_t>(n)].push_back(std::sqrt(1.0 + u[k]) * v[static_cast<size_t>(k)] *
                                              hN(n, k));
    }

    // Beamformers for a given dual vector mu; eta per BS by bisection.
    auto solve = [&](const Vec& mu, Vec& etaOut) {
      BeamformerSet out = BeamformerSet::zeros(numTu, m);
      for (int n = 0; n < numBs; ++n) {
        const auto& us = users[static_cast<size_t>(n)];
        if (us.empty()) {
          etaOut[n] = 0.0;
          continue;
        }
        CMat d = base[static_cast<size_t>(n)];
        for (int l = 0; l < numAu; ++l) {
          const CVec& g = gN[static_cast<size_t>(n * numAu + l)];
          d += mu[l] * g * g.adjoint();
        }
        BsSolve s;
        s.eig.compute(d);
        const CMat& vecs = s.eig.eigenvectors();
        for (const CVec& b : rhs[static_cast<size_t>(n)]) s.proj.push_back(vecs.adjoint() * b);
        const double lamMin = s.eig.eigenvalues().minCoeff();
        double eta = std::max(opts.etaFloor, opts.etaFloor - lamMin);
        if (solve_power(s, eta) > pMax) {
          double lo = eta;
          double total = 0.0;
          for (const CVec& c : s.proj) total += c.squaredNorm();
          double hi = std::max(lo * 2.0, std::sqrt(total / pMax) + std::abs(lamMin));
          while (solve_power(s, hi) > pMax) hi *= 2.0;
          for (int iter = 0; iter < 200; ++iter) {
            const double mid = 0.5 * (lo + hi);
            if (solve_power(s, mid) > pMax) lo = mid; else hi = mid;
            if (hi - lo <= 1e-13 * hi) break;
          }
          eta = hi;  // feasible side of the bracket
        }
        etaOut[n] = eta;
        const Vec& lam = s.eig.eigenvalues();
        for (size_t j = 0; j < us.size(); ++j) {
          CVec c = s.proj[j];
          for (Eigen::Index i = 0; i < c.size(); ++i) c[i] /= (lam[i] + eta);
          out.w[static_cast<size_t>(us[j])] = vecs * c;
        }
      }
      return out;
    };
    auto rhoN = [&](const BeamformerSet& b) {
      Vec r = Vec::Zero(numAu);
      for (int k = 0; k < numTu; ++k)
        for (int l = 0; l < numAu; ++l)
          r[l] += std::norm(gN[static_cast<size_t>(assoc.serving(k) * numAu + l)].dot(
              b.w[static_cast<size_t>(k)]));
      return r;
    };

    Vec mu = res.mu;
    Vec eta(numBs);
    BeamformerSet next;
    if (!interferenceActive) {
      next = solve(mu, eta);
    } else {
      // Cyclic exact coordinate minimization of the dual over each mu_l.
      for (int sweep = 0; sweep < opts.maxDualSweeps; ++sweep) {
        for (int l = 0; l < numAu; ++l) {
          Vec trial = mu;
          trial[l] = 0.0;
          if (rhoN(solve(trial, eta))[l] <= 1.0) {
            mu[l] = 0.0;
            continue;
          }
          double hi = std::max(mu[l], 1e-6);
          trial[l] = hi;
          while (rhoN(solve(trial, eta))[l] > 1.0) {
            hi *= 4.0;
            trial[l] = hi;
            if (hi > 1e30) break;
          }
          double lo = 0.0;
          for (int iter = 0; iter < 100; ++iter) {
            const double mid = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
            trial[l] = mid;
            if (rhoN(solve(trial, eta))[l] > 1.0) lo = mid; else hi = mid;
            if (hi - lo <= 1e-12 * hi) break;
          }
          mu[l] = hi;
        }
        next = solve(mu, eta);
        const Vec r = rhoN(next);
        bool settled = true;
        for (int l = 0; l < numAu; ++l) {
          if (r[l] > 1.0 + 1e-9) settled = false;
          if (mu[l] > 0.0 && r[l] < 1.0 - 1e-6) settled = false;
        }
        if (settled || numAu == 1) break;
      }
      if (mu.maxCoeff() > 0.0) res.muActivated = true;
    }
    res.mu = mu;
    res.eta = eta;
    bf = std::move(next);
    const double objNext = record(bf);
    res.iterations = it;
    const bool done = std::abs(objNext - obj) <= opts.tolerance * std::max(1.0, std::abs(objNext));
    obj = objNext;
    if (done) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged) {
    spdlog::debug("wmmse: no convergence after {} iterations", opts.maxIterations);
  }
  res.bf = std::move(bf);
  return res;
}

}  // namespace catn::baselines
