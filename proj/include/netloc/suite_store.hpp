#pragma once

// Data model and on-disk formats shared by every netloc module.
//
// Layouts:
//   suite          one JSON object per line, one line per stimulus
//   activations    directory holding `manifest` (key=value text) and
//                  `activations.bin` (little-endian binary32, [n, L, d])
//   mask           canonical key=value header followed by "layer index" lines
//   accuracy log   one JSON object per line, append-only

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace netloc {

struct Stimulus {
  std::string id;
  std::string instruction;
  std::string story;
  std::string question;
  std::vector<std::string> options;
  std::string answer_prefix;
  std::optional<int> correct_index;  // absent for localizer stimuli

  bool operator==(const Stimulus&) const = default;
};

struct StimulusSet {
  std::string condition_name;
  std::vector<Stimulus> stimuli;

  bool operator==(const StimulusSet&) const = default;
};

struct LocalizerSuite {
  std::string name;
  std::vector<StimulusSet> target_sets;
  std::vector<StimulusSet> control_sets;
  // Paired suites have one target and one control set whose items are
  // index-aligned and share ids.
  bool paired = false;

  bool is_simple() const { return target_sets.size() == 1 && control_sets.size() == 1; }
  bool operator==(const LocalizerSuite&) const = default;
};

/// Throws ValidationError describing the first violated invariant.
void validate(const LocalizerSuite& suite);

void write_suite(const LocalizerSuite& suite, const std::filesystem::path& path);
LocalizerSuite read_suite(const std::filesystem::path& path);

/// Provenance recorded when the producer does not supply one.
inline constexpr std::string_view kDefaultProvenance =
    "block_output_post_residual;pooling=last_token";

/// Last-token activations for one condition, shape [n_stimuli, n_layers, hidden_dim].
struct ActivationTensor {
  std::string model_id;
  std::string suite_name;
  std::string condition_name;
  std::string provenance{kDefaultProvenance};
  std::vector<std::string> stimulus_ids;
  std::size_t n_layers = 0;
  std::size_t hidden_dim = 0;
  std::vector<float> values;

  std::size_t n_stimuli() const { return stimulus_ids.size(); }
  std::size_t units() const { return n_layers * hidden_dim; }
  float at(std::size_t stimulus, std::size_t layer, std::size_t unit) const {
    return values[(stimulus * n_layers + layer) * hidden_dim + unit];
  }
  /// Activations of one stimulus over all L*d units, layer-major.
  std::span<const float> stimulus_row(std::size_t stimulus) const {
    return std::span<const float>(values).subspan(stimulus * units(), units());
  }

  bool operator==(const ActivationTensor&) const = default;
};

void validate(const ActivationTensor& tensor);

/// Writes `manifest` and `activations.bin` into `dir`, creating it if needed.
void write_activation_tensor(const ActivationTensor& tensor, const std::filesystem::path& dir);
ActivationTensor read_activation_tensor(const std::filesystem::path& dir);

/// Rows of `tensor` selected by `rows`, in the given order.
ActivationTensor subset_rows(const ActivationTensor& tensor, std::span<const std::size_t> rows);

struct UnitId {
  std::uint32_t layer = 0;
  std::uint32_t index = 0;

  auto operator<=>(const UnitId&) const = default;
};

enum class SelectionKind { Target, LeastActive };
enum class Method { Simple, Conjunctive };
enum class FdrMethod { BenjaminiHochberg, Bonferroni, None };

std::string_view to_string(SelectionKind kind);
std::string_view to_string(Method method);
std::string_view to_string(FdrMethod method);
SelectionKind parse_selection_kind(std::string_view text);
Method parse_method(std::string_view text);
FdrMethod parse_fdr_method(std::string_view text);

struct MaskMeta {
  double alpha = 0.05;
  double cap_fraction = 0.01;
  Method method = Method::Simple;
  bool paired = false;
  FdrMethod fdr_method = FdrMethod::BenjaminiHochberg;

  bool operator==(const MaskMeta&) const = default;
};

struct SubnetworkMask {
  std::string model_id;
  std::string localizer_name;
  SelectionKind selection_kind = SelectionKind::Target;
  std::size_t n_layers = 0;
  std::size_t hidden_dim = 0;
  std::vector<UnitId> units;  // ascending by (layer, index)
  MaskMeta meta;

  bool operator==(const SubnetworkMask&) const = default;
};

/// Largest admissible mask for a model with `total_units` units.
std::size_t mask_capacity(double cap_fraction, std::size_t total_units);

void validate(const SubnetworkMask& mask);
std::string serialize_mask(const SubnetworkMask& mask);
SubnetworkMask parse_mask(std::string_view text);
void write_mask(const SubnetworkMask& mask, const std::filesystem::path& path);
SubnetworkMask read_mask(const std::filesystem::path& path);

enum class Domain { Tom, Pragmatics, Syntax };
enum class Condition { Intact, TargetAblation, ControlAblation };

std::string_view to_string(Domain domain);
std::string_view to_string(Condition condition);
Domain parse_domain(std::string_view text);
Condition parse_condition(std::string_view text);

struct AccuracyRecord {
  std::string model_id;
  std::string dataset_id;
  Domain domain = Domain::Tom;
  Condition condition = Condition::Intact;
  std::string localizer_name;  // empty iff condition == Intact
  std::string item_id;
  bool correct = false;

  auto operator<=>(const AccuracyRecord&) const = default;
};

void validate(const AccuracyRecord& record);
std::string serialize_record(const AccuracyRecord& record);
AccuracyRecord parse_record(std::string_view line);
/// Appends records to the log at `path`, creating the file if needed.
void append_accuracy_records(const std::filesystem::path& path, std::span<const AccuracyRecord> records);
std::vector<AccuracyRecord> read_accuracy_log(const std::filesystem::path& path);

}  // namespace netloc
