#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "cae/config.hpp"
#include "cae/tensor.hpp"
#include "cae/text_data.hpp"

namespace cae {

// Which way a latent vector is being mapped between the two styles.
enum class Direction { s1_to_s2, s2_to_s1 };

const char* direction_name(Direction d);

// Single LSTM cell. Gate rows in W/U/b are ordered input, forget,
// cell-candidate, output.
struct LstmCell {
  Tensor W;  // [4h x e]
  Tensor U;  // [4h x h]
  Tensor b;  // [4h]
  std::size_t hidden = 0;
  std::size_t input = 0;
};

struct LstmState {
  Tensor h;  // [B x h]
  Tensor c;  // [B x h]
};

LstmState lstm_initial_state(std::size_t batch, std::size_t hidden);
// One step (x_t, h_{t-1}, c_{t-1}) -> (h_t, c_t); x is [B x e].
LstmState lstm_step(const LstmCell& cell, const Tensor& x, const LstmState& prev);

// Per-style sequence autoencoder. Embedding width equals the hidden size.
struct StyleAutoencoder {
  StyleLabel style_label = StyleLabel::s1;
  Tensor embedding;   // [V x h]
  LstmCell encoder;
  LstmCell decoder;
  Tensor projection;  // [h x V] output logits map
  std::size_t hidden = 0;
  std::size_t vocab = 0;
};

// Latent style mapper: affine h -> h with tanh, affine h -> h, then L2
// normalization back onto the unit sphere.
struct TransferNet {
  Tensor W1, b1;  // [h x h], [h]
  Tensor W2, b2;  // [h x h], [h]
};

// Two-layer critic: tanh hidden layer, sigmoid probability output.
struct Discriminator {
  Tensor W1, b1;  // [h x h], [h]
  Tensor W2, b2;  // [h x 1], [1]
};

// The full parameter bundle: one autoencoder per style, one transfer net per
// direction, one discriminator per target style.
struct CaeModel {
  StyleAutoencoder ae1, ae2;
  TransferNet t12, t21;
  Discriminator d1, d2;
  std::size_t hidden = 0;
  std::size_t vocab = 0;

  const StyleAutoencoder& autoencoder(StyleLabel s) const;
  StyleAutoencoder& autoencoder(StyleLabel s);
  const TransferNet& transfer_net(Direction d) const;
  // The discriminator judging the target side of `d` (s1->s2 faces d2).
  const Discriminator& discriminator_for_target(Direction d) const;

  // Disjoint parameter groups matching the three update phases.
  std::vector<Tensor> autoencoder_parameters() const;
  std::vector<Tensor> transfer_parameters() const;
  std::vector<Tensor> discriminator_parameters() const;
  std::vector<Tensor> parameters() const;
};

// Final encoder hidden state at each sequence's true length, L2-normalized
// per row. Rejects style mismatch and zero-length rows.
Tensor encode(const StyleAutoencoder& ae, const Batch& batch);

// Teacher-forced decoder logits [B x (L+1) x V]: the decoder starts from
// hidden state z (cell state zero), consumes bos followed by the gold tokens,
// and emits one logits row per target position including the final eos.
Tensor decode_teacher_forced(const StyleAutoencoder& ae, const Tensor& z, const Batch& batch);

// z-tilde = normalize(W2' tanh(W1' z + b1) + b2), applied row-wise.
Tensor transfer(const TransferNet& net, const Tensor& z);

// Round trip through both transfer nets: first_hop s1_to_s2 gives
// t21(t12(z)), the other direction gives t12(t21(z)).
Tensor cycle_map(const CaeModel& model, const Tensor& z, Direction first_hop);

// Per-row probability in (0,1) that each z belongs to the guarded style.
Tensor discriminate(const Discriminator& d, const Tensor& z);

// Fresh model with every parameter uniform in [-r, r], r = 1/sqrt(h_n),
// deterministic in `seed`.
CaeModel init_model(const TrainConfig& config, std::size_t vocab_size, std::uint64_t seed);

}  // namespace cae
