#pragma once

#include "cae/model.hpp"
#include "cae/tensor.hpp"
#include "cae/text_data.hpp"

namespace cae {

// Plain-number record of one step's objectives. `total` is the minimizing
// players' loss; the discriminator terms are reported but not part of it
// (discriminators maximize, so they train on their own objective).
struct LossBreakdown {
  double recon = 0.0;       // masked token NLL, summed over the two styles
  double gen_adv_12 = 0.0;  // generator term for the s1->s2 mapper
  double gen_adv_21 = 0.0;
  double disc_1 = 0.0;      // discriminator objectives
  double disc_2 = 0.0;
  double cycle = 0.0;       // latent round-trip L1, both directions
  double total = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lambda3 = 0.0;
};

// Mean token-level NLL of teacher-forced reconstruction for each style
// (padding masked out), summed over the two styles.
Tensor reconstruction_loss(const CaeModel& model, const Batch& batch1, const Batch& batch2);

// The adversarial game, one term per player. Fakes feeding the discriminator
// terms are detached, so disc_1/disc_2 never push gradients into the transfer
// nets; the generator terms use the non-saturating form -mean log D(fake).
struct AdversarialLosses {
  Tensor gen_12;  // -mean log D2(T12(z1))
  Tensor gen_21;  // -mean log D1(T21(z2))
  Tensor disc_1;  // -[mean log D1(z1) + mean log(1 - D1(T21(z2)))]
  Tensor disc_2;  // -[mean log D2(z2) + mean log(1 - D2(T12(z1)))]
};
AdversarialLosses adversarial_losses(const CaeModel& model, const Tensor& z1, const Tensor& z2);

// Mean over rows of |T21(T12(z1)) - z1|_1 plus the mirrored s2 term.
Tensor cycle_loss(const CaeModel& model, const Tensor& z1, const Tensor& z2);

// Fills lambdas and total = l1*recon + l2*(gen terms) + l3*cycle. Throws
// TrainingDivergenceError (message carries the components) when any component
// is non-finite.
LossBreakdown total_loss(LossBreakdown components, double lambda1, double lambda2,
                         double lambda3);

// Probability clamp bounds applied before every adversarial log.
inline constexpr double kProbClampLo = 1e-7;
inline constexpr double kProbClampHi = 1.0 - 1e-7;

}  // namespace cae
