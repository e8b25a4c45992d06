#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "netloc/suite_store.hpp"

namespace netloc {

inline constexpr std::array<std::string_view, 8> kLocalizerNames = {
    "LatentBeliefs-simple",      "CommunicativeIntent-simple",      "GameBeliefs-simple", "MoralIntent-simple",
    "All-simple",                "LatentBeliefs-conjunctive",       "CommunicativeIntent-conjunctive",
    "LB+CI-conjunctive",
};

inline constexpr std::array<std::string_view, 4> kSuiteNames = {"LatentBeliefs", "CommunicativeIntent", "GameBeliefs",
                                                                "MoralIntent"};

bool is_localizer_name(std::string_view name);

/// The conditions one member suite contributes to a localizer.
struct SuitePart {
  std::string suite;
  std::vector<std::string> target_conditions;
  std::vector<std::string> control_conditions;
  bool paired = false;  // one target and one control condition with aligned stimulus ids
};

struct LocalizerConfig {
  std::string name;
  Method method = Method::Simple;
  bool paired = false;  // every part is paired, so the simple statistic is a paired t
  std::vector<SuitePart> parts;

  std::vector<std::string> member_suites() const;
};

/// Builds one of the eight named localizers from the suites it draws on.
LocalizerConfig make_localizer(std::string_view name, std::span<const LocalizerSuite> suites);

/// All eight localizers; every one of the four named suites must be present.
std::vector<LocalizerConfig> enumerate_localizers(std::span<const LocalizerSuite> suites);

/// How a conjunctive statistic gets its p-value.
enum class ConjunctionP {
  MinimizingPair,  // p of the pair attaining the minimum t
  MaxP,            // largest two-sided p over all pairs
};

enum class FdrScope { Model, Layer };

struct StatOptions {
  double alpha = 0.05;
  FdrMethod fdr = FdrMethod::BenjaminiHochberg;
  FdrScope scope = FdrScope::Model;
  ConjunctionP conjunction_p = ConjunctionP::MinimizingPair;
  bool cross_suite_pairs = false;  // pair every target with every control across member suites
  unsigned threads = 1;
};

struct UnitStatMap {
  std::string model_id;
  std::string localizer_name;
  Method method = Method::Simple;
  bool paired = false;
  std::size_t n_layers = 0;
  std::size_t hidden_dim = 0;
  double alpha = 0.05;
  FdrMethod fdr = FdrMethod::BenjaminiHochberg;
  // Flattened [L, d], layer-major.
  std::vector<double> m;
  std::vector<double> df;
  std::vector<double> p;
  std::vector<bool> significant;

  std::size_t size() const { return m.size(); }
  static UnitId unit_at(std::size_t flat, std::size_t hidden_dim) {
    return UnitId{static_cast<std::uint32_t>(flat / hidden_dim), static_cast<std::uint32_t>(flat % hidden_dim)};
  }
  std::size_t flat(UnitId u) const { return static_cast<std::size_t>(u.layer) * hidden_dim + u.index; }
  bool operator==(const UnitStatMap&) const = default;
};

/// Conditions required by `cfg` that have no tensor in `tensors`, as "suite/condition".
std::vector<std::string> missing_conditions(const LocalizerConfig& cfg, std::span<const ActivationTensor> tensors);

/// Per-unit t-statistic of the union of all target conditions against the
/// union of all control conditions (paired t when cfg.paired).
UnitStatMap simple_statistic(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg,
                             const StatOptions& opts = {});

/// Per-unit signed minimum of the t over all target x control pairs. A pair
/// from a paired part uses the paired t, every other pair the Welch t, so a
/// simple suite gives exactly the simple statistic.
UnitStatMap conjunctive_statistic(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg,
                                  const StatOptions& opts = {});

/// Dispatches on cfg.method.
UnitStatMap localize(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg,
                     const StatOptions& opts = {});

/// Recomputes `significant` from `p` under the given rule.
void apply_significance(UnitStatMap& stats, double alpha, FdrMethod method, FdrScope scope);

struct Diagnostics {
  std::vector<std::string> warnings;
};

/// Significant units, capped at ceil(cap_fraction * L * d) by largest |m|
/// with ties broken by (layer, index).
SubnetworkMask select_target_subnetwork(const UnitStatMap& stats, double cap_fraction = 0.01,
                                        Diagnostics* diag = nullptr);

/// The `size` non-significant units with smallest |m|, ties by (layer, index).
SubnetworkMask select_least_active(const UnitStatMap& stats, std::size_t size, double cap_fraction = 0.01);

struct LayerCount {
  std::size_t layer = 0;
  std::size_t selected = 0;
  double percent = 0.0;  // of the layer's d units
};

std::vector<LayerCount> layer_distribution(const SubnetworkMask& mask);

/// CSV rows "model_id,localizer,selection,layer,selected,percent" for each mask.
void write_layer_distribution_csv(std::ostream& out, std::span<const SubnetworkMask> masks);

}  // namespace netloc
