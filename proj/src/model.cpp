#include "cae/model.hpp"

#include <cmath>

namespace cae {

namespace {

void check_latent(const Tensor& z, std::size_t hidden, const char* op) {
  if (!z.defined() || z.rank() != 2 || z.shape()[1] != hidden) {
    throw DimensionError(std::string(op) + ": expected latents of width " +
                         std::to_string(hidden) + ", got " +
                         (z.defined() ? shape_to_string(z.shape()) : std::string("<undefined>")));
  }
}

void check_unit_rows(const Tensor& z, const char* op) {
  const std::size_t h = z.shape()[1];
  for (std::size_t i = 0; i < z.shape()[0]; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < h; ++j) {
      const double v = z.value_at(i * h + j);
      sq += v * v;
    }
    if (std::fabs(std::sqrt(sq) - 1.0) > 1e-6) {
      throw ContractError(std::string(op) + ": latent row " + std::to_string(i) +
                          " is not unit-norm");
    }
  }
}

// Column t of a row-major [B x W] id matrix.
std::vector<int> id_column(const std::vector<int>& ids, std::size_t B, std::size_t W,
                           std::size_t t) {
  std::vector<int> out(B);
  for (std::size_t r = 0; r < B; ++r) out[r] = ids[r * W + t];
  return out;
}

}  // namespace

const char* direction_name(Direction d) {
  return d == Direction::s1_to_s2 ? "s1_to_s2" : "s2_to_s1";
}

// ==== LSTM ====

LstmState lstm_initial_state(std::size_t batch, std::size_t hidden) {
  return LstmState{Tensor::zeros({batch, hidden}), Tensor::zeros({batch, hidden})};
}

LstmState lstm_step(const LstmCell& cell, const Tensor& x, const LstmState& prev) {
  const std::size_t h = cell.hidden;
  Tensor gates = add(add(matmul(x, transpose(cell.W)), matmul(prev.h, transpose(cell.U))),
                     cell.b);  // [B x 4h]
  Tensor gi = sigmoid(slice_cols(gates, 0, h));
  Tensor gf = sigmoid(slice_cols(gates, h, 2 * h));
  Tensor gg = tanh(slice_cols(gates, 2 * h, 3 * h));
  Tensor go = sigmoid(slice_cols(gates, 3 * h, 4 * h));
  Tensor c = add(mul(gf, prev.c), mul(gi, gg));
  return LstmState{mul(go, tanh(c)), c};
}

// ==== CaeModel accessors ====

const StyleAutoencoder& CaeModel::autoencoder(StyleLabel s) const {
  return s == StyleLabel::s1 ? ae1 : ae2;
}

StyleAutoencoder& CaeModel::autoencoder(StyleLabel s) {
  return s == StyleLabel::s1 ? ae1 : ae2;
}

const TransferNet& CaeModel::transfer_net(Direction d) const {
  return d == Direction::s1_to_s2 ? t12 : t21;
}

const Discriminator& CaeModel::discriminator_for_target(Direction d) const {
  return d == Direction::s1_to_s2 ? d2 : d1;
}

std::vector<Tensor> CaeModel::autoencoder_parameters() const {
  std::vector<Tensor> out;
  for (const StyleAutoencoder* ae : {&ae1, &ae2}) {
    out.push_back(ae->embedding);
    for (const LstmCell* cell : {&ae->encoder, &ae->decoder}) {
      out.push_back(cell->W);
      out.push_back(cell->U);
      out.push_back(cell->b);
    }
    out.push_back(ae->projection);
  }
  return out;
}

std::vector<Tensor> CaeModel::transfer_parameters() const {
  std::vector<Tensor> out;
  for (const TransferNet* t : {&t12, &t21}) {
    out.push_back(t->W1);
    out.push_back(t->b1);
    out.push_back(t->W2);
    out.push_back(t->b2);
  }
  return out;
}

std::vector<Tensor> CaeModel::discriminator_parameters() const {
  std::vector<Tensor> out;
  for (const Discriminator* d : {&d1, &d2}) {
    out.push_back(d->W1);
    out.push_back(d->b1);
    out.push_back(d->W2);
    out.push_back(d->b2);
  }
  return out;
}

std::vector<Tensor> CaeModel::parameters() const {
  std::vector<Tensor> out = autoencoder_parameters();
  for (Tensor& t : transfer_parameters()) out.push_back(std::move(t));
  for (Tensor& t : discriminator_parameters()) out.push_back(std::move(t));
  return out;
}

// ==== forward computations ====

Tensor encode(const StyleAutoencoder& ae, const Batch& batch) {
  if (batch.style_label != ae.style_label) {
    throw ContractError(std::string("encode: batch of ") + style_name(batch.style_label) +
                        " fed to the " + style_name(ae.style_label) + " autoencoder");
  }
  const std::size_t B = batch.batch_size;
  if (B == 0) throw ContractError("encode: empty batch");
  for (std::size_t r = 0; r < B; ++r) {
    if (batch.lengths[r] == 0) {
      throw ContractError("encode: zero-length sequence at row " + std::to_string(r));
    }
  }
  const std::size_t h = ae.hidden;
  LstmState state = lstm_initial_state(B, h);
  for (std::size_t t = 0; t < batch.max_len; ++t) {
    Tensor x = embedding_lookup(ae.embedding, id_column(batch.inputs, B, batch.max_len, t));
    LstmState next = lstm_step(ae.encoder, x, state);
    // Freeze rows that are already past their true length so padding cannot
    // leak into the final state.
    std::vector<double> keep(B * h), stay(B * h);
    for (std::size_t r = 0; r < B; ++r) {
      const double live = t < batch.lengths[r] ? 1.0 : 0.0;
      for (std::size_t j = 0; j < h; ++j) {
        keep[r * h + j] = live;
        stay[r * h + j] = 1.0 - live;
      }
    }
    Tensor k = Tensor::from_values({B, h}, std::move(keep));
    Tensor s = Tensor::from_values({B, h}, std::move(stay));
    state.h = add(mul(k, next.h), mul(s, state.h));
    state.c = add(mul(k, next.c), mul(s, state.c));
  }
  return l2_normalize(state.h);
}

Tensor decode_teacher_forced(const StyleAutoencoder& ae, const Tensor& z, const Batch& batch) {
  check_latent(z, ae.hidden, "decode_teacher_forced");
  if (z.shape()[0] != batch.batch_size) {
    throw DimensionError("decode_teacher_forced: " + std::to_string(z.shape()[0]) +
                         " latents for a batch of " + std::to_string(batch.batch_size));
  }
  check_unit_rows(z, "decode_teacher_forced");
  const std::size_t B = batch.batch_size;
  const std::size_t W = batch.max_len + 1;  // gold tokens plus the closing eos
  LstmState state{z, Tensor::zeros({B, ae.hidden})};
  std::vector<Tensor> steps;
  steps.reserve(W);
  for (std::size_t t = 0; t < W; ++t) {
    Tensor x = embedding_lookup(ae.embedding, id_column(batch.decoder_inputs, B, W, t));
    state = lstm_step(ae.decoder, x, state);
    steps.push_back(matmul(state.h, ae.projection));  // [B x V]
  }
  return stack_steps(steps);  // [B x W x V]
}

Tensor transfer(const TransferNet& net, const Tensor& z) {
  check_latent(z, net.W1.shape()[0], "transfer");
  Tensor hidden = tanh(add(matmul(z, net.W1), net.b1));
  Tensor out = add(matmul(hidden, net.W2), net.b2);
  return l2_normalize(out);
}

Tensor cycle_map(const CaeModel& model, const Tensor& z, Direction first_hop) {
  if (first_hop == Direction::s1_to_s2) {
    return transfer(model.t21, transfer(model.t12, z));
  }
  return transfer(model.t12, transfer(model.t21, z));
}

Tensor discriminate(const Discriminator& d, const Tensor& z) {
  check_latent(z, d.W1.shape()[0], "discriminate");
  const std::size_t B = z.shape()[0];
  Tensor hidden = tanh(add(matmul(z, d.W1), d.b1));
  Tensor p = sigmoid(add(matmul(hidden, d.W2), d.b2));  // [B x 1]
  return reshape(p, {B});
}

// ==== initialization ====

namespace {

Tensor init_param(Shape shape, double r, std::uint64_t& state, std::string name) {
  std::vector<double> values = uniform_values(shape_numel(shape), r, state);
  return Tensor::parameter(std::move(shape), std::move(values), std::move(name));
}

LstmCell init_cell(std::size_t h, std::size_t e, double r, std::uint64_t& state,
                   const std::string& prefix) {
  LstmCell cell;
  cell.hidden = h;
  cell.input = e;
  cell.W = init_param({4 * h, e}, r, state, prefix + ".W");
  cell.U = init_param({4 * h, h}, r, state, prefix + ".U");
  cell.b = init_param({4 * h}, r, state, prefix + ".b");
  return cell;
}

StyleAutoencoder init_autoencoder(StyleLabel label, std::size_t h, std::size_t V, double r,
                                  std::uint64_t& state, const std::string& prefix) {
  StyleAutoencoder ae;
  ae.style_label = label;
  ae.hidden = h;
  ae.vocab = V;
  ae.embedding = init_param({V, h}, r, state, prefix + ".embedding");
  ae.encoder = init_cell(h, h, r, state, prefix + ".encoder");
  ae.decoder = init_cell(h, h, r, state, prefix + ".decoder");
  ae.projection = init_param({h, V}, r, state, prefix + ".projection");
  return ae;
}

TransferNet init_transfer(std::size_t h, double r, std::uint64_t& state,
                          const std::string& prefix) {
  TransferNet net;
  net.W1 = init_param({h, h}, r, state, prefix + ".W1");
  net.b1 = init_param({h}, r, state, prefix + ".b1");
  net.W2 = init_param({h, h}, r, state, prefix + ".W2");
  net.b2 = init_param({h}, r, state, prefix + ".b2");
  return net;
}

Discriminator init_discriminator(std::size_t h, double r, std::uint64_t& state,
                                 const std::string& prefix) {
  Discriminator d;
  d.W1 = init_param({h, h}, r, state, prefix + ".W1");
  d.b1 = init_param({h}, r, state, prefix + ".b1");
  d.W2 = init_param({h, 1}, r, state, prefix + ".W2");
  d.b2 = init_param({1}, r, state, prefix + ".b2");
  return d;
}

}  // namespace

CaeModel init_model(const TrainConfig& config, std::size_t vocab_size, std::uint64_t seed) {
  config.validate();
  if (vocab_size <= Vocabulary::num_specials) {
    throw ConfigError("vocabulary of size " + std::to_string(vocab_size) +
                      " has no content tokens");
  }
  const std::size_t h = config.hidden;
  const double r = 1.0 / std::sqrt(static_cast<double>(h));
  std::uint64_t state = seed;

  CaeModel model;
  model.hidden = h;
  model.vocab = vocab_size;
  // Both autoencoders draw from the same stream position: starting from
  // identical weights keeps the two latent geometries aligned, so the
  // transfer nets learn a content-preserving map instead of an arbitrary
  // distribution-matching one. The parameters stay separate and diverge
  // freely during training.
  std::uint64_t ae_state = state;
  model.ae1 = init_autoencoder(StyleLabel::s1, h, vocab_size, r, state, "ae1");
  model.ae2 = init_autoencoder(StyleLabel::s2, h, vocab_size, r, ae_state, "ae2");
  model.t12 = init_transfer(h, r, state, "t12");
  model.t21 = init_transfer(h, r, state, "t21");
  model.d1 = init_discriminator(h, r, state, "d1");
  model.d2 = init_discriminator(h, r, state, "d2");
  return model;
}

}  // namespace cae
