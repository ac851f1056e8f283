#pragma once

#include <cstdint>
#include <vector>

#include "hydro/ade/encoder.hpp"
#include "hydro/attack/scenario.hpp"

namespace hydro::ade {

struct LabeledWindow {
  Matrix window;  // [W, d_r] raw residuals
  attack::AttackClass label = attack::AttackClass::None;
};

// FreezeEncoder adapts only the classifier head of a pretrained encoder,
// e.g. when recalibrating on new plant data without disturbing embeddings.
enum class FreezeMode { None, FreezeEncoder };

struct AdeTrainReport {
  double initial_val = 0.0;
  double best_val = 0.0;
  std::vector<double> val_losses;
  bool mmd_active = false;  // both attack classes were present in training
};

struct AdeTrainOptions {
  bool verbose = false;
  AdeTrainReport* report = nullptr;
};

// Minimizes mean cross-entropy plus mmd_sign * beta * MMD^2 between the
// single-point and multi-stage embeddings of each batch (the discrimination
// term; skipped whenever a batch lacks one of the attack classes). Early
// stopping and plateau decay track the same loss on the validation split.
// `init` resumes from existing parameters and keeps their whitening frame;
// otherwise whitening is fitted to the training windows.
AdeParams train_ade(const std::vector<LabeledWindow>& train, const std::vector<LabeledWindow>& val,
                    const AdeConfig& cfg, std::uint64_t seed,
                    FreezeMode freeze = FreezeMode::None, const AdeParams* init = nullptr,
                    const AdeTrainOptions& opts = {});

int class_index(attack::AttackClass c);

// Unbiased MMD^2 between the embeddings of the two attack classes under the
// median-heuristic bandwidth; the quantity the discrimination term shapes.
double latent_attack_mmd(const std::vector<LabeledWindow>& data, const AdeParams& p);

}  // namespace hydro::ade
