#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "netloc/beta_regression.hpp"
#include "netloc/design_matrix.hpp"
#include "netloc/suite_store.hpp"

namespace netloc {

inline constexpr double kWaldZ95 = 1.959963984540054;

struct Correlation {
  double r = 0.0;
  double p = 1.0;  // two-sided
  std::size_t n = 0;
};

/// Sample correlation with p from t = r sqrt((n-2)/(1-r^2)) on n-2 df.
Correlation pearson_r(std::span<const double> x, std::span<const double> y);

/// (y (n-1) + 0.5) / n, mapping [0, 1] into the open interval.
std::vector<double> smooth_response(std::span<const double> y, double n);
double smooth_response(double y, double n);

/// How a contrast interval is read.
enum class Direction {
  Less,          // interval entirely below 0
  Greater,       // interval entirely above 0
  TwoSided,      // interval excludes 0
  NotGreater,    // no credible increase: ci_low <= 0
  NotLess,       // no credible decrease: ci_high >= 0
  NoDifference,  // interval covers 0
};

std::string_view to_string(Direction d);

struct ContrastResult {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Direction direction = Direction::TwoSided;
  bool supported = false;
  bool degenerate = false;  // zero-width interval
};

/// Wald contrast w' beta with a 95% interval from w' Sigma w.
ContrastResult contrast(const RegressionFit& fit, const Eigen::VectorXd& weights, Direction direction,
                        std::string name = {});
bool is_supported(Direction direction, double ci_low, double ci_high);

// ---------------------------------------------------------------------------
// Ablation logs

/// Ablation level of a cell: "intact", "target:<localizer>" or "control:<localizer>".
std::string ablation_label(const AccuracyRecord& r);

struct CellAccuracy {
  std::string model_id;
  std::string dataset_id;
  Domain domain = Domain::Tom;
  std::string ablation;
  std::size_t n_items = 0;
  std::size_t n_correct = 0;
  double accuracy() const { return n_items ? static_cast<double>(n_correct) / static_cast<double>(n_items) : 0.0; }
};

/// Mean accuracy per (model, dataset, ablation level), sorted by those keys.
std::vector<CellAccuracy> aggregate_cells(std::span<const AccuracyRecord> log);

/// Raw causal effects (intact minus ablated accuracy) for one localizer on one
/// (model, dataset).
struct DescriptiveEffect {
  std::string model_id;
  std::string dataset_id;
  Domain domain = Domain::Tom;
  std::string localizer;
  double intact = 0.0;
  double target_ablated = 0.0;
  double control_ablated = 0.0;
  double target_effect = 0.0;
  double control_effect = 0.0;
};

std::vector<DescriptiveEffect> descriptive_effects(std::span<const AccuracyRecord> log);

struct AblationReport {
  std::vector<ContrastResult> contrasts;  // P1.1, P1.2, P2.1, P2.2, P3.1, P3.2
  std::vector<DescriptiveEffect> descriptive;
  std::vector<std::string> notes;
};

/// Fits accuracy ~ model + ablation * domain + dataset-within-domain on cell
/// means and evaluates the six ablation predictions on the logit scale,
/// averaging over localizers and models.
AblationReport evaluate_ablation_predictions(std::span<const AccuracyRecord> log);

/// "P3.1 supported; others unsupported" and similar.
std::string verdict_summary(std::span<const ContrastResult> contrasts);

void write_contrast_csv(std::ostream& out, std::span<const ContrastResult> contrasts);
void write_descriptive_csv(std::ostream& out, std::span<const DescriptiveEffect> effects);
void write_ablation_verdict(std::ostream& out, const AblationReport& report);

// ---------------------------------------------------------------------------
// Behavioral accuracies

/// Mean accuracy of one model on one evaluation dataset.
struct BehavioralRow {
  std::string model_id;
  std::string family;
  double size_billions = 0.0;
  std::string model_type;  // "base" or "instruct"
  std::string dataset_id;
  std::string ds_type;  // whether instructions/options were in context
  Domain domain = Domain::Tom;
  double accuracy = 0.0;
  std::size_t n_items = 0;
};

/// "small" (<= 8B), "medium" (<= 32B) or "large" (<= 72B).
std::string size_bucket(double size_billions);

struct LooComparison {
  double elpd0 = 0.0;
  double elpd1 = 0.0;
  double elpd_diff = 0.0;  // elpd1 - elpd0
  double se_diff = 0.0;
  std::vector<double> pointwise_diff;
};

/// Pointwise held-out log densities from exact leave-one-out refits.
std::vector<double> loo_pointwise(const DesignMatrix& d, unsigned threads = 1);
/// Exact-refit leave-one-out comparison; positive elpd_diff favors m1.
LooComparison loo_compare(const DesignMatrix& m0, const DesignMatrix& m1, unsigned threads = 1);

struct BehavioralReport {
  Correlation p1;
  bool p1_supported = false;
  ContrastResult p2;
  bool p3_evaluated = false;
  LooComparison p3;
  bool p3_supported = false;
  std::vector<std::string> warnings;
  std::vector<std::string> notes;
};

/// CSV with header model_id,family,size_billions,model_type,dataset_id,ds_type,domain,accuracy,n_items.
void write_behavioral_csv(std::ostream& out, std::span<const BehavioralRow> rows);
std::vector<BehavioralRow> read_behavioral_csv(std::istream& in);

BehavioralReport evaluate_behavioral_predictions(std::span<const BehavioralRow> rows, unsigned threads = 1);
void write_behavioral_verdict(std::ostream& out, const BehavioralReport& report);

// ---------------------------------------------------------------------------
// ATOMS predictor subsets

inline constexpr std::array<std::string_view, 7> kAtomsNames = {
    "beliefs", "intentions", "desires", "emotions", "knowledge", "percepts", "non_literal_communication"};

struct AtomsModelScore {
  unsigned subset = 0;  // bit i set = kAtomsNames[i] included
  std::vector<std::string> predictors;
  double elpd = 0.0;
  double se = 0.0;
  double elpd_diff_to_best = 0.0;  // <= 0
  double se_diff_to_best = 0.0;
};

/// A ToM accuracy row with the dataset's ATOMS annotation (0/1 per aspect).
struct AtomsRow {
  BehavioralRow row;
  std::array<int, 7> flags{};
};

struct AtomsData {
  DesignMatrix base;  // family + size * model_type + ds_type
  Eigen::MatrixXi flags;  // rows x 7, 0/1
};

/// Base design over the rows; terms whose factor has a single level are left out.
AtomsData atoms_design(std::span<const AtomsRow> rows);

/// Behavioral CSV columns followed by one 0/1 column per ATOMS aspect.
void write_atoms_rows_csv(std::ostream& out, std::span<const AtomsRow> rows);
std::vector<AtomsRow> read_atoms_rows_csv(std::istream& in);

/// LOO score of the base design extended by every subset of the seven ATOMS
/// flags (one row of `flags` per design row, entries 0/1), best first; ties
/// by subset index.
std::vector<AtomsModelScore> atoms_subset_search(const DesignMatrix& base, const Eigen::MatrixXi& flags,
                                                 unsigned threads = 1);
void write_atoms_csv(std::ostream& out, std::span<const AtomsModelScore> scores);

}  // namespace netloc
