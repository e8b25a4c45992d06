#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "netloc/design_matrix.hpp"
#include "netloc/effects.hpp"
#include "netloc/suite_store.hpp"

namespace netloc {

enum class NoiseKind { Gaussian, StudentT3 };

struct PlantSpec {
  std::size_t n_layers = 8;
  std::size_t hidden_dim = 128;
  std::size_t n_per_condition = 100;
  std::vector<UnitId> planted_units;  // shifted in every target condition
  std::vector<UnitId> distractor_units;  // shifted in the first target condition only
  double effect_size = 2.0;  // mean shift in noise-sd units
  double noise_sd = 1.0;
  NoiseKind noise = NoiseKind::Gaussian;  // StudentT3 is rescaled to unit variance
  std::uint64_t seed = 0;
  std::string suite_name = "LatentBeliefs";
  std::string model_id = "synthetic";
  bool paired = false;  // one target and one control set sharing stimulus ids
};

void validate(const PlantSpec& spec);

/// `count` distinct units drawn uniformly from the L x d grid, sorted.
std::vector<UnitId> random_units(std::size_t n_layers, std::size_t hidden_dim, std::size_t count, std::uint64_t seed);

struct PlantedSuite {
  LocalizerSuite suite;  // placeholder stimuli
  std::vector<ActivationTensor> tensors;  // one per condition, targets first
  std::vector<UnitId> truth;  // sorted planted units
};

/// Conditions are named target_1.. and control_1..; deterministic in the seed.
PlantedSuite generate_planted_suite(const PlantSpec& spec, std::size_t n_target_sets = 1,
                                    std::size_t n_control_sets = 1);

struct Recovery {
  double precision = 0.0;
  double recall = 0.0;
  bool precision_defined = true;  // false for an empty mask (precision reported as 0)
  bool recall_defined = true;  // false for an empty truth (recall reported as 0)
};

Recovery recovery_score(const SubnetworkMask& mask, const std::vector<UnitId>& truth);

struct EffectLogSpec {
  double intact_acc = 0.75;
  double tom_effect = 0.0;  // accuracy drop under target ablation
  double prag_effect = 0.0;
  double syntax_effect = 0.0;
  double control_effect = 0.0;  // drop under control ablation on ToM and pragmatics
  std::size_t n_models = 4;
  std::size_t n_datasets = 3;  // per domain
  std::size_t n_items = 100;
  double jitter_sd = 0.03;  // per (model, dataset) shift of the intact probability
  std::string localizer = "LatentBeliefs-simple";
  std::uint64_t seed = 0;
};

struct EffectLog {
  std::vector<AccuracyRecord> records;
  std::vector<std::string> warnings;
};

/// Bernoulli item outcomes around condition-shifted probabilities; shifted
/// probabilities outside [0, 1] are clipped with a warning.
EffectLog generate_effect_log(const EffectLogSpec& spec);

struct BehavioralSpec {
  std::size_t n_models = 20;
  std::size_t n_datasets = 4;  // per ToM and pragmatics domain
  std::size_t n_syntax_datasets = 1;
  std::size_t n_items = 200;
  bool shared_skill = true;  // ToM and pragmatics driven by one latent skill
  double skill_sd = 0.6;  // logit scale
  double dataset_sd = 0.3;
  double noise_sd = 0.1;
  std::uint64_t seed = 0;
};

std::vector<BehavioralRow> generate_behavioral_table(const BehavioralSpec& spec);

struct AtomsSpec {
  std::size_t n_datasets = 12;
  std::size_t n_items = 100;
  double percepts_effect = 1.0;  // logit difference between datasets with and without percepts
  double dataset_sd = 0.1;
  std::uint64_t seed = 0;
};

/// Eight models crossed with `n_datasets` ToM datasets; only the percepts flag
/// moves accuracy.
std::vector<AtomsRow> generate_atoms_rows(const AtomsSpec& spec);
AtomsData generate_atoms_data(const AtomsSpec& spec);

}  // namespace netloc
