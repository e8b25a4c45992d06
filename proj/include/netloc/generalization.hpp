#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "netloc/localizer_engine.hpp"
#include "netloc/suite_store.hpp"

namespace netloc {

struct FoldReport {
  std::size_t fold_index = 0;
  std::size_t mask_size = 0;
  double test_t = 0.0;
  double test_p = 1.0;
  bool significant = false;
  // Fraction of mask units individually significant on the test split;
  // filled only when CrossValOptions::per_unit is set, NaN otherwise.
  double unit_fraction = 0.0;
  std::string diagnostic;
};

struct CrossValOptions {
  std::size_t k = 10;
  std::uint64_t seed = 0;
  double alpha = 0.05;  // held-out test level
  double cap_fraction = 0.01;
  StatOptions stat;  // localization settings on the training split
  bool per_unit = false;
};

/// Fold of every stimulus, per condition tensor used by `cfg` (keyed like
/// independently; the control of a paired suite part reuses its target's
/// independently; the control of a paired localizer reuses its target's
/// permutation so pairs stay together.
struct FoldAssignment {
  std::vector<std::string> keys;
  std::vector<std::vector<std::size_t>> fold_of;  // parallel to keys, one entry per stimulus
};

FoldAssignment assign_folds(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg, std::size_t k,
                            std::uint64_t seed);

/// k-fold check that a localization generalizes to held-out stimuli: localize
/// on k-1 folds, then Welch-test the per-stimulus mean activation over the
/// mask units (sign-aligned by the training statistic) between held-out
/// target and control stimuli.
std::vector<FoldReport> kfold_generalization(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg,
                                             const CrossValOptions& opts);

std::size_t count_significant(std::span<const FoldReport> folds);

}  // namespace netloc
