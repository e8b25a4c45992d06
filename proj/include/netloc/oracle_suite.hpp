#pragma once

// Synthetic oracle checks shared by `netloc bench` and the acceptance suite.
// Every check is seed-deterministic and independent of the thread count.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace netloc {

struct OracleCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool at_most = false;  // pass when value <= threshold instead of >=
  bool passed = false;
  std::string detail;
};

// Planted recovery: L=8, d=128, 10 planted units, effect 2 sd, n=100 per condition.
// Value: smallest per-seed min(precision, recall).
OracleCheck check_planted_recovery(std::size_t seeds, unsigned threads);
// Fraction of null seeds with any significant unit after FDR; also requires
// every least-active mask to be disjoint from its target mask.
OracleCheck check_null_calibration(std::size_t seeds, unsigned threads);
// Seeds on which conjunctive and simple statistics of a simple suite (every
// third one paired) are array-equal.
OracleCheck check_conjunction_reduction(std::size_t seeds, unsigned threads);
// Seeds on which a distractor planted in one of two target sets is in the
// simple mask and absent from the conjunctive mask.
OracleCheck check_conjunction_selectivity(std::size_t seeds, unsigned threads);
// Smallest number of significant folds (k = 10) over planted seeds.
OracleCheck check_crossval_planted(std::size_t seeds, unsigned threads);
// Mean number of significant folds over null seeds.
OracleCheck check_crossval_null(std::size_t seeds, unsigned threads);
// Smallest per-parameter fraction of simulations whose estimate of
// (beta0, beta1, log phi) lies within 2 asymptotic SEs of the truth.
OracleCheck check_beta_recovery(std::size_t sims, unsigned threads);
// Largest relative deviation between the analytic gradient and central differences.
OracleCheck check_beta_gradient(std::size_t points);
// Fraction of planted-effect logs with all six ablation predictions supported.
OracleCheck check_prediction_planted(std::size_t seeds, unsigned threads);
// 1 when a log with identical accuracies everywhere supports only P3.1.
OracleCheck check_prediction_null();
// Fraction of simulations where adding the true predictor gives elpd_diff > 0.
OracleCheck check_loo_true_predictor(std::size_t sims, std::size_t n_obs, unsigned threads);
// |elpd_diff| for identical designs (must be exactly 0).
OracleCheck check_loo_identical();
// Fraction of seeds where every percepts-containing ATOMS model outscores the base model.
OracleCheck check_atoms_percepts(std::size_t seeds, unsigned threads);

struct OracleSuiteOptions {
  std::size_t seeds = 20;
  unsigned threads = 1;
  bool include_atoms = false;
};

std::vector<OracleCheck> run_oracle_suite(const OracleSuiteOptions& opts);

}  // namespace netloc
