#include "trinity/align/losses.hpp"

#include "trinity/error.hpp"

namespace trinity::align {

namespace {

nn::Tensor scaled_similarity(const nn::Tensor& a, const nn::Tensor& b, const nn::Tensor& tau) {
  if (tau.numel() != 1) throw ContractViolation("temperature must be a scalar");
  return nn::div(nn::matmul(a, nn::transpose(b)), tau);
}

void check_pair(const nn::Tensor& h1, const nn::Tensor& h2, std::size_t rank, const char* op) {
  if (h1.rank() != rank || h1.shape() != h2.shape()) {
    throw ContractViolation(std::string(op) + ": operands " + nn::shape_str(h1.shape()) +
                            " and " + nn::shape_str(h2.shape()) + " must match with rank " +
                            std::to_string(rank));
  }
}

}  // namespace

nn::Tensor symmetric_nce(const nn::Tensor& logits) {
  if (logits.rank() < 2 || logits.dim(-1) != logits.dim(-2)) {
    throw ContractViolation("symmetric_nce: logits " + nn::shape_str(logits.shape()) +
                            " are not square");
  }
  if (logits.dim(-1) < 2) {
    throw DataError("symmetric_nce: need at least two candidates per row (no negatives)");
  }
  nn::Tensor rows = nn::mean(nn::diagonal(nn::log_softmax(logits)));
  nn::Tensor cols = nn::mean(nn::diagonal(nn::log_softmax(nn::transpose(logits))));
  return nn::scale(nn::add(rows, cols), -0.5);
}

nn::Tensor global_nce_loss(const nn::Tensor& h1, const nn::Tensor& h2, const nn::Tensor& tau) {
  check_pair(h1, h2, 2, "global_nce_loss");
  if (h1.dim(0) < 2) throw DataError("global_nce_loss: batch of 1 has no negatives");
  return symmetric_nce(scaled_similarity(h1, h2, tau));
}

nn::Tensor batchwise_local_loss(const nn::Tensor& h1, const nn::Tensor& h2,
                                const nn::Tensor& tau) {
  check_pair(h1, h2, 3, "batchwise_local_loss");
  if (h1.dim(0) < 2) throw DataError("batchwise_local_loss: batch of 1 has no negatives");
  nn::Tensor a = nn::permute(h1, {1, 0, 2});  // [L, B, D]
  nn::Tensor b = nn::permute(h2, {1, 0, 2});
  return symmetric_nce(scaled_similarity(a, b, tau));
}

nn::Tensor patchwise_local_loss(const nn::Tensor& h1, const nn::Tensor& h2,
                                const nn::Tensor& tau) {
  check_pair(h1, h2, 3, "patchwise_local_loss");
  if (h1.dim(1) < 2) throw DataError("patchwise_local_loss: grid of 1 patch has no negatives");
  return symmetric_nce(scaled_similarity(h1, h2, tau));
}

nn::Tensor global_tokens(const nn::Tensor& h) {
  if (h.rank() != 3 || h.dim(1) < 2) {
    throw ContractViolation("branch output " + nn::shape_str(h.shape()) + " is not [B, N, D]");
  }
  return nn::reshape(nn::slice(h, 1, 0, 1), {h.dim(0), h.dim(2)});
}

nn::Tensor local_tokens(const nn::Tensor& h) {
  if (h.rank() != 3 || h.dim(1) < 2) {
    throw ContractViolation("branch output " + nn::shape_str(h.shape()) + " is not [B, N, D]");
  }
  return nn::slice(h, 1, 1, h.dim(1) - 1);
}

void LossWeights::validate() const {
  if (!(local >= 0.0) || !(global >= 0.0)) {
    throw ConfigError("loss weights must be nonnegative");
  }
}

LossBreakdown trinity_loss(const model::ForwardOutput& out, const nn::Tensor& tau,
                           model::Mode mode, const model::Toggles& toggles,
                           const LossWeights& weights) {
  toggles.validate();
  weights.validate();
  const bool contextual = mode == model::Mode::kContextual;
  if (contextual && !out.h_cxt.defined()) {
    throw ConfigError("contextual loss requested but the model has no context branch");
  }
  if (!contextual && out.h_cxt.defined()) {
    throw ConfigError("context-free loss requested for a contextual model output");
  }
  LossBreakdown r;
  r.recon = out.recon_loss;
  nn::Tensor zero = nn::Tensor::scalar(0.0);
  r.global = zero;
  r.local = zero;
  auto add_term = [&](nn::Tensor& acc, const std::string& name, nn::Tensor term) {
    r.terms.emplace_back(name, term);
    acc = nn::add(acc, term);
  };
  const nn::Tensor app_g = global_tokens(out.h_app), mot_g = global_tokens(out.h_mot);
  const nn::Tensor app_l = local_tokens(out.h_app), mot_l = local_tokens(out.h_mot);
  if (contextual) {
    const nn::Tensor cxt_g = global_tokens(out.h_cxt), cxt_l = local_tokens(out.h_cxt);
    if (toggles.global) {
      add_term(r.global, "global.app_cxt", global_nce_loss(app_g, cxt_g, tau));
      add_term(r.global, "global.mot_cxt", global_nce_loss(mot_g, cxt_g, tau));
    }
    if (toggles.local_batch) {
      add_term(r.local, "batch.app_mot", batchwise_local_loss(app_l, mot_l, tau));
    }
    if (toggles.local_patch) {
      add_term(r.local, "patch.cxt_mot", patchwise_local_loss(cxt_l, mot_l, tau));
      add_term(r.local, "patch.cxt_app", patchwise_local_loss(cxt_l, app_l, tau));
      add_term(r.local, "patch.app_mot", patchwise_local_loss(app_l, mot_l, tau));
    }
  } else {
    if (toggles.global) {
      add_term(r.global, "global.app_mot", global_nce_loss(app_g, mot_g, tau));
    }
    if (toggles.local_batch) {
      add_term(r.local, "batch.app_mot", batchwise_local_loss(app_l, mot_l, tau));
    }
    if (toggles.local_patch) {
      add_term(r.local, "patch.app_mot", patchwise_local_loss(app_l, mot_l, tau));
    }
  }
  r.total = nn::add(nn::add(r.recon, nn::scale(r.local, weights.local)),
                    nn::scale(r.global, weights.global));
  return r;
}

}  // namespace trinity::align
