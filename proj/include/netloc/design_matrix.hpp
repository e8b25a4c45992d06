#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace netloc {

/// One model term and the design columns it occupies.
struct Term {
  enum class Kind { Intercept, Factor, Numeric, Interaction, Nested };

  std::string name;
  Kind kind = Kind::Intercept;
  std::vector<std::string> levels;  // Factor: level order used for sum coding
  std::vector<std::size_t> components;  // Interaction: indices of the two component terms
  std::size_t first_column = 0;
  std::size_t n_columns = 0;
};

/// Regression design with sum-coded factors. Each factor with K levels
/// contributes K-1 columns: level j < K maps to the j-th unit vector and the
/// last level to all -1, so every coded column averages to zero over levels.
struct DesignMatrix {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  std::vector<std::string> columns;
  std::vector<Term> terms;

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(x.cols()); }

  /// Coefficient weights giving the linear predictor at the named factor
  /// levels, averaged over every factor not named (numeric terms at their
  /// centered mean, nested factors averaged within group).
  Eigen::VectorXd cell_weights(const std::map<std::string, std::string>& at) const;

  /// Copy without row `i`.
  DesignMatrix drop_row(std::size_t i) const;
  /// Copy with columns appended after the existing ones.
  DesignMatrix with_columns(const Eigen::MatrixXd& extra, std::span<const std::string> names) const;
};

class DesignBuilder {
 public:
  explicit DesignBuilder(std::size_t n_rows);

  DesignBuilder& intercept();
  /// Sum-coded factor; level order defaults to ascending by name.
  DesignBuilder& factor(const std::string& name, std::vector<std::string> values,
                        std::vector<std::string> level_order = {});
  DesignBuilder& numeric(const std::string& name, std::vector<double> values, bool center = true);
  /// Products of every coded column of two earlier terms.
  DesignBuilder& interaction(const std::string& a, const std::string& b);
  /// Factor sum-coded separately inside each group; groups with one level add nothing.
  DesignBuilder& nested(const std::string& name, std::vector<std::string> values, std::vector<std::string> groups);

  /// Validates (no constant non-intercept column, response strictly inside
  /// (0, 1)) and assembles the matrix.
  DesignMatrix build(std::vector<double> response) const;

  /// Code vector of `level` for a factor term (length = n_columns).
  static Eigen::VectorXd sum_code(const Term& term, const std::string& level);

 private:
  std::size_t n_rows_;
  std::vector<Term> terms_;
  std::vector<Eigen::MatrixXd> blocks_;

  std::size_t find(const std::string& name) const;
  void push(Term term, Eigen::MatrixXd block);
};

}  // namespace netloc
