#pragma once

#include <string>
#include <utility>
#include <vector>

#include "trinity/model/config.hpp"
#include "trinity/model/trinity_model.hpp"
#include "trinity/numerics/tensor.hpp"

namespace trinity::align {

/// Mean of the row-wise and column-wise cross entropies against diagonal
/// targets, averaged over any leading dimensions. logits: [..., n, n].
nn::Tensor symmetric_nce(const nn::Tensor& logits);

/// h1, h2: [B, D] unit rows; tau: scalar tensor.
nn::Tensor global_nce_loss(const nn::Tensor& h1, const nn::Tensor& h2, const nn::Tensor& tau);

/// h1, h2: [B, L, D]. One B×B NCE per location, averaged over locations.
nn::Tensor batchwise_local_loss(const nn::Tensor& h1, const nn::Tensor& h2,
                                const nn::Tensor& tau);

/// h1, h2: [B, L, D]. One L×L NCE per sample, averaged over samples.
nn::Tensor patchwise_local_loss(const nn::Tensor& h1, const nn::Tensor& h2,
                                const nn::Tensor& tau);

/// Head token [B, D] and local tokens [B, N−1, D] of a branch output.
nn::Tensor global_tokens(const nn::Tensor& h);
nn::Tensor local_tokens(const nn::Tensor& h);

struct LossWeights {
  double local = 1.0;   // β₁
  double global = 1.0;  // β₂

  void validate() const;
};

struct LossBreakdown {
  nn::Tensor total;
  nn::Tensor recon;
  nn::Tensor global;  // sum of global terms (zero scalar when none)
  nn::Tensor local;
  /// Individual alignment terms, e.g. {"global.app_cxt", ...}.
  std::vector<std::pair<std::string, nn::Tensor>> terms;
};

/// Contextual: L_global = app–cxt + mot–cxt;
///   L_local = batch(app, mot) + patch(cxt, mot) + patch(cxt, app) + patch(app, mot).
/// Context-free: L_global = app–mot; L_local = batch(app, mot) + patch(app, mot).
/// total = L_recon + β₁·L_local + β₂·L_global. Toggles drop terms.
LossBreakdown trinity_loss(const model::ForwardOutput& out, const nn::Tensor& tau,
                           model::Mode mode, const model::Toggles& toggles,
                           const LossWeights& weights = {});

}  // namespace trinity::align
