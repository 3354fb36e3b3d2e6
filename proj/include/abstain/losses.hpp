#pragma once

#include <array>
#include <optional>

#include "abstain/nn.hpp"

namespace abstain {

/// Cost of rejection d, sigmoid sharpness gamma and the mixing weight alpha
/// between the double sigmoid loss and the auxiliary cross-entropy.
struct LossConfig {
  double d = 0.25;
  double gamma = 1.0;
  double alpha = 1.0;

  LossConfig() = default;
  LossConfig(double d_, double gamma_, double alpha_ = 1.0);

  void validate() const;
};

/// Decreasing sigmoid 1 / (1 + exp(gamma * a)); the exponent is clamped to
/// [-500, 500].
double sigma(double a, double gamma = 1.0);

/// 0 for a confident correct prediction, d inside the closed band
/// |margin| <= rho, 1 for margin < -rho.
double zero_d_one_loss(double margin, double rho, double d);

/// 2d sigma(margin - rho) + 2(1 - d) sigma(margin + rho).
double double_sigmoid_loss(double margin, double rho, const LossConfig& cfg);

struct SurrogateGrads {
  double d_margin = 0.0;
  double d_rho = 0.0;
};

SurrogateGrads double_sigmoid_grads(double margin, double rho, const LossConfig& cfg);

/// Two-class softmax cross-entropy. The first logit belongs to the +1 class,
/// the second to -1.
double aux_cross_entropy(const std::array<double, 2>& logits, int label);
std::array<double, 2> aux_cross_entropy_grads(const std::array<double, 2>& logits, int label);

/// alpha * L_ds + (1 - alpha) * L_ce. Auxiliary logits are required whenever
/// alpha < 1.
double combined_loss(double margin, double rho, const std::optional<std::array<double, 2>>& aux_logits, int label,
                     const LossConfig& cfg);

struct SampleLoss {
  double loss = 0.0;
  Upstream upstream;
};

/// Loss for one sample and its gradient with respect to the network heads
/// (f, rho, aux logits), ready for backward().
SampleLoss sample_loss(const HeadOutputs& out, int label, const LossConfig& cfg);

}  // namespace abstain
