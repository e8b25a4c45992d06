#include "netloc/design_matrix.hpp"

#include <algorithm>
#include <map>
#include <optional>
#include <set>

#include "netloc/error.hpp"

namespace netloc {

DesignBuilder::DesignBuilder(std::size_t n_rows) : n_rows_(n_rows) {}

std::size_t DesignBuilder::find(const std::string& name) const {
  for (std::size_t t = 0; t < terms_.size(); ++t)
    if (terms_[t].name == name) return t;
  throw ValidationError("design: unknown term '" + name + "'");
}

void DesignBuilder::push(Term term, Eigen::MatrixXd block) {
  for (const auto& t : terms_)
    if (t.name == term.name) throw ValidationError("design: duplicate term '" + term.name + "'");
  term.n_columns = static_cast<std::size_t>(block.cols());
  terms_.push_back(std::move(term));
  blocks_.push_back(std::move(block));
}

DesignBuilder& DesignBuilder::intercept() {
  Term t;
  t.name = "(Intercept)";
  t.kind = Term::Kind::Intercept;
  push(std::move(t), Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(n_rows_), 1));
  return *this;
}

Eigen::VectorXd DesignBuilder::sum_code(const Term& term, const std::string& level) {
  const auto& levels = term.levels;
  const auto it = std::find(levels.begin(), levels.end(), level);
  if (it == levels.end()) throw ValidationError("design: factor " + term.name + " has no level '" + level + "'");
  const auto k = static_cast<Eigen::Index>(levels.size());
  Eigen::VectorXd code = Eigen::VectorXd::Zero(k - 1);
  const auto j = static_cast<Eigen::Index>(it - levels.begin());
  if (j == k - 1)
    code.setConstant(-1.0);
  else
    code(j) = 1.0;
  return code;
}

DesignBuilder& DesignBuilder::factor(const std::string& name, std::vector<std::string> values,
                                     std::vector<std::string> level_order) {
  if (values.size() != n_rows_) throw ValidationError("design: factor " + name + " has wrong length");
  std::set<std::string> present(values.begin(), values.end());
  if (level_order.empty()) {
    level_order.assign(present.begin(), present.end());
  } else {
    for (const auto& v : present)
      if (std::find(level_order.begin(), level_order.end(), v) == level_order.end())
        throw ValidationError("design: level '" + v + "' of " + name + " missing from level order");
    std::erase_if(level_order, [&](const std::string& l) { return !present.count(l); });
  }
  Term t;
  t.name = name;
  t.kind = Term::Kind::Factor;
  t.levels = level_order;
  const auto k = static_cast<Eigen::Index>(level_order.size());
  Eigen::MatrixXd block(static_cast<Eigen::Index>(n_rows_), std::max<Eigen::Index>(k - 1, 0));
  for (std::size_t r = 0; r < n_rows_; ++r)
    if (k > 1) block.row(static_cast<Eigen::Index>(r)) = sum_code(t, values[r]).transpose();
  push(std::move(t), std::move(block));
  return *this;
}

DesignBuilder& DesignBuilder::numeric(const std::string& name, std::vector<double> values, bool center) {
  if (values.size() != n_rows_) throw ValidationError("design: numeric " + name + " has wrong length");
  Eigen::MatrixXd block(static_cast<Eigen::Index>(n_rows_), 1);
  for (std::size_t r = 0; r < n_rows_; ++r) block(static_cast<Eigen::Index>(r), 0) = values[r];
  if (center) block.array() -= block.mean();
  Term t;
  t.name = name;
  t.kind = Term::Kind::Numeric;
  push(std::move(t), std::move(block));
  return *this;
}

DesignBuilder& DesignBuilder::interaction(const std::string& a, const std::string& b) {
  const auto ia = find(a);
  const auto ib = find(b);
  const auto& A = blocks_[ia];
  const auto& B = blocks_[ib];
  Eigen::MatrixXd block(static_cast<Eigen::Index>(n_rows_), A.cols() * B.cols());
  for (Eigen::Index i = 0; i < A.cols(); ++i)
    for (Eigen::Index j = 0; j < B.cols(); ++j) block.col(i * B.cols() + j) = A.col(i).cwiseProduct(B.col(j));
  Term t;
  t.name = a + ":" + b;
  t.kind = Term::Kind::Interaction;
  t.components = {ia, ib};
  push(std::move(t), std::move(block));
  return *this;
}

DesignBuilder& DesignBuilder::nested(const std::string& name, std::vector<std::string> values,
                                     std::vector<std::string> groups) {
  if (values.size() != n_rows_ || groups.size() != n_rows_)
    throw ValidationError("design: nested factor " + name + " has wrong length");
  std::map<std::string, std::set<std::string>> levels_by_group;
  for (std::size_t r = 0; r < n_rows_; ++r) levels_by_group[groups[r]].insert(values[r]);
  for (const auto& [g, levels] : levels_by_group)
    for (const auto& [g2, levels2] : levels_by_group)
      if (g < g2)
        for (const auto& l : levels)
          if (levels2.count(l)) throw ValidationError("design: level '" + l + "' of " + name + " spans groups");
  std::size_t cols = 0;
  for (const auto& [g, levels] : levels_by_group) cols += levels.size() - 1;
  Eigen::MatrixXd block = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_rows_), static_cast<Eigen::Index>(cols));
  std::size_t offset = 0;
  for (const auto& [g, levels] : levels_by_group) {
    const std::vector<std::string> ordered(levels.begin(), levels.end());
    for (std::size_t r = 0; r < n_rows_; ++r) {
      if (groups[r] != g) continue;
      const auto j = static_cast<std::size_t>(std::find(ordered.begin(), ordered.end(), values[r]) - ordered.begin());
      for (std::size_t c = 0; c + 1 < ordered.size(); ++c)
        block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(offset + c)) =
            j == ordered.size() - 1 ? -1.0 : (j == c ? 1.0 : 0.0);
    }
    offset += ordered.size() - 1;
  }
  Term t;
  t.name = name;
  t.kind = Term::Kind::Nested;
  push(std::move(t), std::move(block));
  return *this;
}

DesignMatrix DesignBuilder::build(std::vector<double> response) const {
  if (response.size() != n_rows_) throw ValidationError("design: response has wrong length");
  for (double v : response)
    if (!(v > 0.0 && v < 1.0))
      throw ValidationError("design: response must lie strictly inside (0, 1); smooth boundary values first");
  std::size_t total = 0;
  for (const auto& b : blocks_) total += static_cast<std::size_t>(b.cols());
  DesignMatrix d;
  d.x.resize(static_cast<Eigen::Index>(n_rows_), static_cast<Eigen::Index>(total));
  d.y = Eigen::Map<const Eigen::VectorXd>(response.data(), static_cast<Eigen::Index>(response.size()));
  std::size_t col = 0;
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    Term term = terms_[t];
    term.first_column = col;
    const auto& block = blocks_[t];
    for (Eigen::Index c = 0; c < block.cols(); ++c) {
      d.x.col(static_cast<Eigen::Index>(col)) = block.col(c);
      const bool constant = n_rows_ > 0 && (block.col(c).array() == block(0, c)).all();
      if (constant && term.kind != Term::Kind::Intercept)
        throw ValidationError("design: column " + std::to_string(c) + " of term " + term.name + " is constant");
      d.columns.push_back(term.n_columns == 1 ? term.name : term.name + "[" + std::to_string(c) + "]");
      ++col;
    }
    d.terms.push_back(std::move(term));
  }
  return d;
}

Eigen::VectorXd DesignMatrix::cell_weights(const std::map<std::string, std::string>& at) const {
  for (const auto& [name, level] : at) {
    const bool known = std::any_of(terms.begin(), terms.end(), [&](const Term& t) {
      return t.name == name && t.kind == Term::Kind::Factor;
    });
    if (!known) throw ValidationError("design: '" + name + "' is not a factor term");
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
  auto code_of = [&](const Term& t) -> std::optional<Eigen::VectorXd> {
    if (t.kind == Term::Kind::Intercept) return Eigen::VectorXd::Ones(1);
    if (t.kind != Term::Kind::Factor) return std::nullopt;
    const auto it = at.find(t.name);
    if (it == at.end()) return std::nullopt;
    if (t.n_columns == 0) return Eigen::VectorXd();
    return DesignBuilder::sum_code(t, it->second);
  };
  for (const auto& t : terms) {
    if (t.n_columns == 0) continue;
    std::optional<Eigen::VectorXd> code;
    if (t.kind == Term::Kind::Interaction) {
      const auto a = code_of(terms[t.components[0]]);
      const auto b = code_of(terms[t.components[1]]);
      if (a && b) {
        Eigen::VectorXd prod(a->size() * b->size());
        for (Eigen::Index i = 0; i < a->size(); ++i)
          for (Eigen::Index j = 0; j < b->size(); ++j) prod(i * b->size() + j) = (*a)(i) * (*b)(j);
        code = prod;
      }
    } else {
      code = code_of(t);
    }
    if (code) w.segment(static_cast<Eigen::Index>(t.first_column), static_cast<Eigen::Index>(t.n_columns)) = *code;
  }
  return w;
}

DesignMatrix DesignMatrix::drop_row(std::size_t i) const {
  DesignMatrix d;
  d.columns = columns;
  d.terms = terms;
  const auto n = x.rows();
  const auto r = static_cast<Eigen::Index>(i);
  d.x.resize(n - 1, x.cols());
  d.y.resize(n - 1);
  d.x.topRows(r) = x.topRows(r);
  d.x.bottomRows(n - 1 - r) = x.bottomRows(n - 1 - r);
  d.y.head(r) = y.head(r);
  d.y.tail(n - 1 - r) = y.tail(n - 1 - r);
  return d;
}

DesignMatrix DesignMatrix::with_columns(const Eigen::MatrixXd& extra, std::span<const std::string> names) const {
  if (extra.rows() != x.rows() || static_cast<std::size_t>(extra.cols()) != names.size())
    throw ValidationError("design: appended block has wrong shape");
  DesignMatrix d;
  d.y = y;
  d.terms = terms;
  d.columns = columns;
  d.x.resize(x.rows(), x.cols() + extra.cols());
  d.x << x, extra;
  for (std::size_t c = 0; c < names.size(); ++c) {
    Term t;
    t.name = names[c];
    t.kind = Term::Kind::Numeric;
    t.first_column = static_cast<std::size_t>(x.cols()) + c;
    t.n_columns = 1;
    d.terms.push_back(t);
    d.columns.push_back(names[c]);
  }
  return d;
}

}  // namespace netloc
