#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "lowres/error.hpp"

namespace lowres {

/// A discrete probability distribution: non-negative entries summing to 1
/// (within 1e-9).
class ProbDist {
 public:
  static constexpr double kSumTolerance = 1e-9;

  explicit ProbDist(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw Error("distribution is empty");
    double s = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw Error("distribution has a negative or non-finite entry");
      s += v;
    }
    if (std::abs(s - 1.0) > kSumTolerance) throw Error("distribution sums to " + std::to_string(s) + ", not 1");
  }

  static ProbDist softmax(std::span<const double> logits) {
    if (logits.empty()) throw Error("softmax of an empty vector");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
    for (double& v : p) v /= z;
    return ProbDist(std::move(p));
  }

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const { return p_; }

 private:
  std::vector<double> p_;
};

struct RDropConfig {
  double kl_weight = 5.0;
  double epsilon = 1e-12;  // floor applied before taking logs

  void validate() const {
    if (!(kl_weight >= 0.0)) throw Error("rdrop: kl_weight must be non-negative");
    if (!(epsilon > 0.0)) throw Error("rdrop: epsilon must be positive");
  }
};

/// KL(P || Q) in nats, with 0 log 0 = 0 and Q floored at epsilon.
inline double kl_divergence(const ProbDist& p, const ProbDist& q, double epsilon = 1e-12) {
  if (p.size() != q.size())
    throw Error("kl: dimension mismatch (" + std::to_string(p.size()) + " vs " + std::to_string(q.size()) + ")");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    kl += p[i] * (std::log(p[i]) - std::log(std::max(q[i], epsilon)));
  }
  return kl;
}

inline double bidirectional_kl(const ProbDist& p, const ProbDist& q, double epsilon = 1e-12) {
  return 0.5 * (kl_divergence(p, q, epsilon) + kl_divergence(q, p, epsilon));
}

/// Per-token mean of  -log P1[t] - log P2[t] + lambda * bidirectional_kl(P1, P2).
inline double rdrop_loss(const std::vector<ProbDist>& p1, const std::vector<ProbDist>& p2,
                         const std::vector<std::size_t>& targets, const RDropConfig& cfg = {}) {
  cfg.validate();
  if (p1.size() != p2.size() || p1.size() != targets.size())
    throw Error("rdrop: position counts differ (" + std::to_string(p1.size()) + ", " + std::to_string(p2.size()) +
                ", " + std::to_string(targets.size()) + ")");
  if (p1.empty()) throw Error("rdrop: no positions");
  double total = 0.0;
  for (std::size_t k = 0; k < p1.size(); ++k) {
    if (p1[k].size() != p2[k].size())
      throw Error("rdrop: position " + std::to_string(k) + " has distributions of different sizes");
    const std::size_t t = targets[k];
    if (t >= p1[k].size())
      throw Error("rdrop: target " + std::to_string(t) + " out of range at position " + std::to_string(k));
    total += -std::log(std::max(p1[k][t], cfg.epsilon)) - std::log(std::max(p2[k][t], cfg.epsilon)) +
             cfg.kl_weight * bidirectional_kl(p1[k], p2[k], cfg.epsilon);
  }
  return total / static_cast<double>(p1.size());
}

struct RDropGradient {
  std::vector<double> first;   // d loss / d logits of pass 1
  std::vector<double> second;  // d loss / d logits of pass 2
};

/// Analytic gradient of the single-position R-Drop loss with respect to the
/// pre-softmax scores of both passes (flooring ignored).
///
///   dL/dz1 = P - e_t + (lambda/2) [ P * (log P - log Q - KL(P||Q)) + P - Q ]
///   dL/dz2 = Q - e_t + (lambda/2) [ Q * (log Q - log P - KL(Q||P)) + Q - P ]
inline RDropGradient rdrop_logit_gradient(std::span<const double> logits1, std::span<const double> logits2,
                                          std::size_t target, const RDropConfig& cfg = {}) {
  cfg.validate();
  if (logits1.size() != logits2.size()) throw Error("rdrop: logit vectors differ in size");
  if (target >= logits1.size()) throw Error("rdrop: target out of range");
  const auto p = ProbDist::softmax(logits1);
  const auto q = ProbDist::softmax(logits2);
  const double kl_pq = kl_divergence(p, q, cfg.epsilon);
  const double kl_qp = kl_divergence(q, p, cfg.epsilon);
  const double half = 0.5 * cfg.kl_weight;
  RDropGradient g{std::vector<double>(p.size()), std::vector<double>(p.size())};
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double onehot = k == target ? 1.0 : 0.0;
    const double lp = std::log(p[k]);
    const double lq = std::log(q[k]);
    g.first[k] = p[k] - onehot + half * (p[k] * (lp - lq - kl_pq) + p[k] - q[k]);
    g.second[k] = q[k] - onehot + half * (q[k] * (lq - lp - kl_qp) + q[k] - p[k]);
  }
  return g;
}

}  // namespace lowres
