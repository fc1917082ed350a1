#include "cae/losses.hpp"

#include <cmath>
#include <sstream>

namespace cae {

namespace {

Tensor mean_elements(const Tensor& t) {
  return scale(sum(t), 1.0 / static_cast<double>(t.numel()));
}

// -mean log p with the probability clamp applied first.
Tensor neg_mean_log(const Tensor& p) { return neg(mean_elements(log(clamp(p, kProbClampLo, kProbClampHi)))); }

Tensor one_style_reconstruction(const StyleAutoencoder& ae, const Batch& batch) {
  Tensor z = encode(ae, batch);
  Tensor logits = decode_teacher_forced(ae, z, batch);  // [B x W x V]
  const std::size_t W = batch.max_len + 1;
  Tensor flat = reshape(logits, {batch.batch_size * W, ae.vocab});
  return softmax_cross_entropy(flat, batch.decoder_targets, batch.target_weights);
}

}  // namespace

Tensor reconstruction_loss(const CaeModel& model, const Batch& batch1, const Batch& batch2) {
  if (batch1.style_label != StyleLabel::s1 || batch2.style_label != StyleLabel::s2) {
    throw ContractError("reconstruction_loss: expected batches in style order (s1, s2)");
  }
  return add(one_style_reconstruction(model.ae1, batch1),
             one_style_reconstruction(model.ae2, batch2));
}

AdversarialLosses adversarial_losses(const CaeModel& model, const Tensor& z1, const Tensor& z2) {
  Tensor fake12 = transfer(model.t12, z1);  // pretending to be style s2
  Tensor fake21 = transfer(model.t21, z2);

  AdversarialLosses out;
  // Generators: non-saturating objective on live fakes.
  out.gen_12 = neg_mean_log(discriminate(model.d2, fake12));
  out.gen_21 = neg_mean_log(discriminate(model.d1, fake21));

  // Discriminators: real latents up, detached fakes down. The detach keeps
  // these terms from training the transfer nets.
  Tensor real_term_1 = neg_mean_log(discriminate(model.d1, z1.detach()));
  Tensor fake_p_1 = discriminate(model.d1, fake21.detach());
  Tensor fake_term_1 = neg_mean_log(add_scalar(neg(fake_p_1), 1.0));
  out.disc_1 = add(real_term_1, fake_term_1);

  Tensor real_term_2 = neg_mean_log(discriminate(model.d2, z2.detach()));
  Tensor fake_p_2 = discriminate(model.d2, fake12.detach());
  Tensor fake_term_2 = neg_mean_log(add_scalar(neg(fake_p_2), 1.0));
  out.disc_2 = add(real_term_2, fake_term_2);
  return out;
}

Tensor cycle_loss(const CaeModel& model, const Tensor& z1, const Tensor& z2) {
  Tensor back1 = cycle_map(model, z1, Direction::s1_to_s2);
  Tensor back2 = cycle_map(model, z2, Direction::s2_to_s1);
  Tensor term1 = scale(l1_distance(back1, z1), 1.0 / static_cast<double>(z1.shape()[0]));
  Tensor term2 = scale(l1_distance(back2, z2), 1.0 / static_cast<double>(z2.shape()[0]));
  return add(term1, term2);
}

LossBreakdown total_loss(LossBreakdown components, double lambda1, double lambda2,
                         double lambda3) {
  LossBreakdown out = components;
  out.lambda1 = lambda1;
  out.lambda2 = lambda2;
  out.lambda3 = lambda3;
  out.total = lambda1 * out.recon + lambda2 * (out.gen_adv_12 + out.gen_adv_21) +
              lambda3 * out.cycle;
  for (double v : {out.recon, out.gen_adv_12, out.gen_adv_21, out.disc_1, out.disc_2, out.cycle,
                   out.total}) {
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "non-finite loss component: recon=" << out.recon << " gen_adv_12=" << out.gen_adv_12
         << " gen_adv_21=" << out.gen_adv_21 << " disc_1=" << out.disc_1
         << " disc_2=" << out.disc_2 << " cycle=" << out.cycle;
      throw TrainingDivergenceError(os.str());
    }
  }
  return out;
}

}  // namespace cae
