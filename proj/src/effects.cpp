#include "netloc/effects.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>

#include "netloc/error.hpp"
#include "netloc/format.hpp"
#include "netloc/parallel.hpp"
#include "netloc/unit_stats.hpp"

namespace netloc {
namespace {

double sum_in_order(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// sqrt(n * sample variance), the usual LOO standard error of a sum.
double sum_se(std::span<const double> v) {
  const auto n = v.size();
  if (n < 2) return 0.0;
  const double mean = sum_in_order(v) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(static_cast<double>(n) * ss / static_cast<double>(n - 1));
}

template <typename T>
std::size_t count_distinct(const std::vector<T>& v) {
  return std::set<T>(v.begin(), v.end()).size();
}

std::string domain_name(Domain d) { return std::string(to_string(d)); }

struct PredictionSpec {
  const char* name;
  const char* description;
};

constexpr PredictionSpec kAblationPredictions[] = {
    {"P1.1", "target-network ablation lowers ToM accuracy"},
    {"P1.2", "target ablation lowers ToM accuracy more than control ablation"},
    {"P2.1", "target-network ablation lowers pragmatics accuracy"},
    {"P2.2", "target ablation lowers pragmatics accuracy more than control ablation"},
    {"P3.1", "target-network ablation does not lower syntax accuracy"},
    {"P3.2", "the ablation effect is larger on pragmatics than on syntax"},
};

const char* description_of(const std::string& name) {
  for (const auto& p : kAblationPredictions)
    if (name == p.name) return p.description;
  return "";
}


std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

const std::string& csv_field(const std::string& s) {
  if (s.find_first_of(",\n\r\"") != std::string::npos) throw ValidationError("CSV field contains a separator: '" + s + "'");
  return s;
}

double parse_number(const std::string& text, std::size_t line, const char* what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ValidationError("line " + std::to_string(line) + ": invalid " + what + " '" + text + "'");
  return v;
}

std::size_t parse_count(const std::string& text, std::size_t line, const char* what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ValidationError("line " + std::to_string(line) + ": invalid " + what + " '" + text + "'");
  return v;
}

constexpr const char* kBehavioralHeader = "model_id,family,size_billions,model_type,dataset_id,ds_type,domain,accuracy,n_items";

void write_behavioral_fields(std::ostream& out, const BehavioralRow& r) {
  out << csv_field(r.model_id) << ',' << csv_field(r.family) << ',' << format_double(r.size_billions) << ','
      << csv_field(r.model_type) << ',' << csv_field(r.dataset_id) << ',' << csv_field(r.ds_type) << ','
      << to_string(r.domain) << ',' << format_double(r.accuracy) << ',' << r.n_items;
}

BehavioralRow parse_behavioral_fields(const std::vector<std::string>& f, std::size_t line) {
  BehavioralRow r;
  r.model_id = f[0];
  r.family = f[1];
  r.size_billions = parse_number(f[2], line, "size_billions");
  r.model_type = f[3];
  r.dataset_id = f[4];
  r.ds_type = f[5];
  r.domain = parse_domain(f[6]);
  r.accuracy = parse_number(f[7], line, "accuracy");
  r.n_items = parse_count(f[8], line, "n_items");
  return r;
}

// Reads a header-checked CSV, calling fn(fields, line_number) for each data line.
template <typename Fn>
void read_csv(std::istream& in, const std::string& header, Fn&& fn) {
  std::string line;
  if (!std::getline(in, line) || line != header) throw ValidationError("CSV header must be: " + header);
  const auto n_fields = split_csv_line(header).size();
  std::size_t no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != n_fields)
      throw ValidationError("line " + std::to_string(no) + ": expected " + std::to_string(n_fields) + " fields, found " +
                            std::to_string(f.size()));
    fn(f, no);
  }
}

std::string atoms_header() {
  std::string h = kBehavioralHeader;
  for (auto a : kAtomsNames) h += "," + std::string(a);
  return h;
}

}  // namespace

Correlation pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("pearson_r: samples differ in length");
  const auto n = x.size();
  if (n < 3) throw ValidationError("pearson_r: need at least 3 pairs, got " + std::to_string(n));
  const double mx = sum_in_order(x) / static_cast<double>(n);
  const double my = sum_in_order(y) / static_cast<double>(n);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw StatisticalError("pearson_r: a sample has zero variance");
  Correlation c;
  c.n = n;
  c.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (std::abs(c.r) == 1.0) {
    c.p = 0.0;
  } else {
    const double df = static_cast<double>(n - 2);
    const double t = c.r * std::sqrt(df / (1.0 - c.r * c.r));
    c.p = student_t_two_sided_p(t, df);
  }
  return c;
}

double smooth_response(double y, double n) {
  if (!(n >= 2.0)) throw ValidationError("smooth_response: n must be at least 2");
  if (!(y >= 0.0 && y <= 1.0)) throw ValidationError("smooth_response: value outside [0, 1]");
  return (y * (n - 1.0) + 0.5) / n;
}

std::vector<double> smooth_response(std::span<const double> y, double n) {
  std::vector<double> out;
  out.reserve(y.size());
  for (double v : y) out.push_back(smooth_response(v, n));
  return out;
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::Less: return "less";
    case Direction::Greater: return "greater";
    case Direction::TwoSided: return "two_sided";
    case Direction::NotGreater: return "not_greater";
    case Direction::NotLess: return "not_less";
    case Direction::NoDifference: return "no_difference";
  }
  return "?";
}

bool is_supported(Direction direction, double ci_low, double ci_high) {
  switch (direction) {
    case Direction::Less: return ci_high < 0.0;
    case Direction::Greater: return ci_low > 0.0;
    case Direction::TwoSided: return ci_low > 0.0 || ci_high < 0.0;
    case Direction::NotGreater: return ci_low <= 0.0;
    case Direction::NotLess: return ci_high >= 0.0;
    case Direction::NoDifference: return ci_low <= 0.0 && ci_high >= 0.0;
  }
  return false;
}

ContrastResult contrast(const RegressionFit& fit, const Eigen::VectorXd& weights, Direction direction,
                        std::string name) {
  const auto p = fit.beta.size();
  if (weights.size() != p) throw ValidationError("contrast: weight vector has wrong length");
  ContrastResult c;
  c.name = std::move(name);
  c.direction = direction;
  c.estimate = weights.dot(fit.beta);
  const double var = weights.dot(fit.covariance.topLeftCorner(p, p) * weights);
  c.se = std::sqrt(std::max(var, 0.0));
  c.ci_low = c.estimate - kWaldZ95 * c.se;
  c.ci_high = c.estimate + kWaldZ95 * c.se;
  c.degenerate = c.se == 0.0;
  c.supported = is_supported(direction, c.ci_low, c.ci_high);
  return c;
}

// ---------------------------------------------------------------------------

std::string ablation_label(const AccuracyRecord& r) {
  switch (r.condition) {
    case Condition::Intact: return "intact";
    case Condition::TargetAblation: return "target:" + r.localizer_name;
    case Condition::ControlAblation: return "control:" + r.localizer_name;
  }
  return "";
}

std::vector<CellAccuracy> aggregate_cells(std::span<const AccuracyRecord> log) {
  std::map<std::tuple<std::string, std::string, std::string>, CellAccuracy> cells;
  std::map<std::string, Domain> domain_of;
  for (const auto& r : log) {
    validate(r);
    auto [it, fresh] = domain_of.emplace(r.dataset_id, r.domain);
    if (!fresh && it->second != r.domain)
      throw ValidationError("dataset " + r.dataset_id + " appears under more than one domain");
    const auto label = ablation_label(r);
    auto& c = cells[{r.model_id, r.dataset_id, label}];
    if (c.n_items == 0) {
      c.model_id = r.model_id;
      c.dataset_id = r.dataset_id;
      c.domain = r.domain;
      c.ablation = label;
    }
    ++c.n_items;
    if (r.correct) ++c.n_correct;
  }
  std::vector<CellAccuracy> out;
  out.reserve(cells.size());
  for (auto& [k, c] : cells) out.push_back(std::move(c));
  return out;
}

std::vector<DescriptiveEffect> descriptive_effects(std::span<const AccuracyRecord> log) {
  const auto cells = aggregate_cells(log);
  std::map<std::tuple<std::string, std::string, std::string>, const CellAccuracy*> index;
  std::set<std::string> localizers;
  for (const auto& c : cells) {
    index[{c.model_id, c.dataset_id, c.ablation}] = &c;
    if (c.ablation.starts_with("target:")) localizers.insert(c.ablation.substr(7));
    if (c.ablation.starts_with("control:")) localizers.insert(c.ablation.substr(8));
  }
  std::vector<DescriptiveEffect> out;
  for (const auto& c : cells) {
    if (c.ablation != "intact") continue;
    for (const auto& loc : localizers) {
      const auto t = index.find({c.model_id, c.dataset_id, "target:" + loc});
      const auto k = index.find({c.model_id, c.dataset_id, "control:" + loc});
      if (t == index.end() || k == index.end()) continue;
      DescriptiveEffect e;
      e.model_id = c.model_id;
      e.dataset_id = c.dataset_id;
      e.domain = c.domain;
      e.localizer = loc;
      e.intact = c.accuracy();
      e.target_ablated = t->second->accuracy();
      e.control_ablated = k->second->accuracy();
      e.target_effect = e.intact - e.target_ablated;
      e.control_effect = e.intact - e.control_ablated;
      out.push_back(std::move(e));
    }
  }
  return out;
}

AblationReport evaluate_ablation_predictions(std::span<const AccuracyRecord> log) {
  if (log.empty()) throw ValidationError("accuracy log is empty");
  const auto cells = aggregate_cells(log);

  std::set<std::string> localizers;
  std::set<std::pair<std::string, std::string>> model_dataset;
  std::set<std::tuple<std::string, std::string, std::string>> present;
  std::set<Domain> domains;
  for (const auto& c : cells) {
    model_dataset.insert({c.model_id, c.dataset_id});
    present.insert({c.model_id, c.dataset_id, c.ablation});
    domains.insert(c.domain);
    if (c.ablation.starts_with("target:")) localizers.insert(c.ablation.substr(7));
    if (c.ablation.starts_with("control:")) localizers.insert(c.ablation.substr(8));
  }
  if (localizers.empty()) throw ValidationError("accuracy log has no ablation records");
  for (Domain d : {Domain::Tom, Domain::Pragmatics, Domain::Syntax})
    if (!domains.count(d)) throw ValidationError("accuracy log has no " + domain_name(d) + " datasets");

  std::vector<std::string> levels = {"intact"};
  for (const auto& l : localizers) levels.push_back("target:" + l);
  for (const auto& l : localizers) levels.push_back("control:" + l);
  std::vector<std::string> gaps;
  for (const auto& [m, ds] : model_dataset)
    for (const auto& lvl : levels)
      if (!present.count({m, ds, lvl})) gaps.push_back(m + "/" + ds + "/" + lvl);
  if (!gaps.empty()) {
    std::string msg = "accuracy log is missing " + std::to_string(gaps.size()) + " condition cell(s):";
    for (const auto& g : gaps) msg += " " + g;
    throw ValidationError(msg);
  }

  AblationReport report;
  report.descriptive = descriptive_effects(log);
  report.notes.push_back("estimates are on the logit scale from a maximum-likelihood beta regression with 95% Wald "
                         "intervals, averaged over models and localizers");
  report.notes.push_back("P3.1 is a no-credible-decrease reading (non-inferiority style), not evidence of absence");

  const auto n = cells.size();
  std::vector<double> y(n);
  std::vector<std::string> model(n), ablation(n), domain(n), dataset(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = smooth_response(cells[i].accuracy(), static_cast<double>(cells[i].n_items));
    model[i] = cells[i].model_id;
    ablation[i] = cells[i].ablation;
    domain[i] = domain_name(cells[i].domain);
    dataset[i] = cells[i].dataset_id;
  }

  const bool constant = std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); });
  std::vector<Eigen::VectorXd> weights;
  RegressionFit fit;
  if (!constant) {
    DesignBuilder b(n);
    b.intercept().factor("model", model).factor("ablation", ablation, levels).factor("domain", domain);
    b.interaction("ablation", "domain").nested("dataset", dataset, domain);
    const auto design = b.build(y);
    fit = beta_regression_fit(design);
    auto w = [&](const std::string& a, Domain d) {
      return design.cell_weights({{"ablation", a}, {"domain", domain_name(d)}});
    };
    const auto p = static_cast<Eigen::Index>(design.cols());
    auto mean_over = [&](const char* prefix, Domain d) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(p);
      for (const auto& l : localizers) acc += w(prefix + l, d);
      return Eigen::VectorXd(acc / static_cast<double>(localizers.size()));
    };
    const Eigen::VectorXd tom_drop = w("intact", Domain::Tom) - mean_over("target:", Domain::Tom);
    const Eigen::VectorXd prag_drop = w("intact", Domain::Pragmatics) - mean_over("target:", Domain::Pragmatics);
    const Eigen::VectorXd syn_drop = w("intact", Domain::Syntax) - mean_over("target:", Domain::Syntax);
    weights = {
        tom_drop,
        mean_over("control:", Domain::Tom) - mean_over("target:", Domain::Tom),
        prag_drop,
        mean_over("control:", Domain::Pragmatics) - mean_over("target:", Domain::Pragmatics),
        syn_drop,
        prag_drop - syn_drop,
    };
  } else {
    report.notes.push_back("every cell has the same accuracy: all contrasts are exactly 0 with degenerate intervals");
  }

  const Direction dirs[] = {Direction::Greater, Direction::Greater, Direction::Greater,
                            Direction::Greater, Direction::NotGreater, Direction::Greater};
  for (std::size_t k = 0; k < 6; ++k) {
    if (constant) {
      ContrastResult c;
      c.name = kAblationPredictions[k].name;
      c.direction = dirs[k];
      c.degenerate = true;
      c.supported = is_supported(dirs[k], 0.0, 0.0);
      report.contrasts.push_back(std::move(c));
    } else {
      report.contrasts.push_back(contrast(fit, weights[k], dirs[k], kAblationPredictions[k].name));
    }
  }
  return report;
}

std::string verdict_summary(std::span<const ContrastResult> contrasts) {
  std::vector<std::string> yes;
  for (const auto& c : contrasts)
    if (c.supported) yes.push_back(c.name);
  if (yes.empty()) return "no prediction supported";
  if (yes.size() == contrasts.size()) return "all predictions supported";
  std::string out;
  for (std::size_t i = 0; i < yes.size(); ++i) out += (i ? ", " : "") + yes[i];
  return out + " supported; others unsupported";
}

void write_contrast_csv(std::ostream& out, std::span<const ContrastResult> contrasts) {
  out << "name,estimate,se,ci_low,ci_high,direction,supported,degenerate\n";
  for (const auto& c : contrasts)
    out << c.name << ',' << format_double(c.estimate) << ',' << format_double(c.se) << ','
        << format_double(c.ci_low) << ',' << format_double(c.ci_high) << ',' << to_string(c.direction) << ','
        << (c.supported ? "true" : "false") << ',' << (c.degenerate ? "true" : "false") << '\n';
}

void write_descriptive_csv(std::ostream& out, std::span<const DescriptiveEffect> effects) {
  out << "model_id,dataset_id,domain,localizer,intact,target_ablated,control_ablated,target_effect,control_effect\n";
  for (const auto& e : effects)
    out << e.model_id << ',' << e.dataset_id << ',' << to_string(e.domain) << ',' << e.localizer << ','
        << format_double(e.intact) << ',' << format_double(e.target_ablated) << ','
        << format_double(e.control_ablated) << ',' << format_double(e.target_effect) << ','
        << format_double(e.control_effect) << '\n';
}

void write_ablation_verdict(std::ostream& out, const AblationReport& report) {
  for (const auto& c : report.contrasts) {
    out << c.name << ' ' << (c.supported ? "supported" : "unsupported") << ": " << description_of(c.name)
        << " (estimate " << format_fixed(c.estimate, 3) << " [" << format_fixed(c.ci_low, 3) << ", "
        << format_fixed(c.ci_high, 3) << "]" << (c.degenerate ? ", degenerate" : "") << ")\n";
  }
  out << "summary: " << verdict_summary(report.contrasts) << '\n';
  for (const auto& n : report.notes) out << "note: " << n << '\n';
}

// ---------------------------------------------------------------------------

std::string size_bucket(double size_billions) {
  if (!(size_billions > 0.0)) throw ValidationError("model size must be positive");
  if (size_billions <= 8.0) return "small";
  if (size_billions <= 32.0) return "medium";
  if (size_billions <= 72.0) return "large";
  throw ValidationError("model size " + format_double(size_billions) + "B exceeds the 72B bucket");
}

std::vector<double> loo_pointwise(const DesignMatrix& d, unsigned threads) {
  const auto full = beta_regression_fit(d);
  const auto n = d.rows();
  std::vector<double> lpd(n);
  std::vector<std::string> errors(n);
  FitOptions opts;
  opts.start = full.params();
  parallel_for(n, threads, [&](std::size_t i) {
    try {
      const auto fit = beta_regression_fit(d.drop_row(i), opts);
      const auto r = static_cast<Eigen::Index>(i);
      const double mu = inverse_logit(d.x.row(r).dot(fit.beta));
      lpd[i] = beta_log_density(d.y(r), mu, fit.phi);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < n; ++i)
    if (!errors[i].empty()) throw StatisticalError("LOO fold " + std::to_string(i) + ": " + errors[i]);
  return lpd;
}

LooComparison loo_compare(const DesignMatrix& m0, const DesignMatrix& m1, unsigned threads) {
  if (m0.rows() != m1.rows() || m0.y != m1.y) throw ValidationError("loo_compare: designs have different responses");
  const auto p0 = loo_pointwise(m0, threads);
  const auto p1 = loo_pointwise(m1, threads);
  LooComparison c;
  c.pointwise_diff.resize(p0.size());
  for (std::size_t i = 0; i < p0.size(); ++i) c.pointwise_diff[i] = p1[i] - p0[i];
  c.elpd0 = sum_in_order(p0);
  c.elpd1 = sum_in_order(p1);
  c.elpd_diff = sum_in_order(c.pointwise_diff);
  c.se_diff = sum_se(c.pointwise_diff);
  return c;
}

namespace {

struct ModelAttrs {
  std::string family;
  double size = 0.0;
  std::string type;
  bool operator==(const ModelAttrs&) const = default;
};

struct BehavioralDesignParts {
  std::vector<std::string> family, size, type;
};

void add_model_terms(DesignBuilder& b, const BehavioralDesignParts& parts, bool with_family) {
  const bool fam = with_family && count_distinct(parts.family) > 1;
  const bool size = count_distinct(parts.size) > 1;
  const bool type = count_distinct(parts.type) > 1;
  if (fam) b.factor("family", parts.family);
  if (size) b.factor("size", parts.size, {"small", "medium", "large"});
  if (type) b.factor("model_type", parts.type);
  if (size && type) b.interaction("size", "model_type");
}

}  // namespace

BehavioralReport evaluate_behavioral_predictions(std::span<const BehavioralRow> rows, unsigned threads) {
  std::map<std::string, ModelAttrs> models;
  for (const auto& r : rows) {
    if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0))
      throw ValidationError("accuracy of " + r.model_id + " on " + r.dataset_id + " is outside [0, 1]");
    if (r.n_items < 2) throw ValidationError("dataset " + r.dataset_id + " needs at least 2 items");
    ModelAttrs a{r.family, r.size_billions, r.model_type};
    auto [it, fresh] = models.emplace(r.model_id, a);
    if (!fresh && !(it->second == a))
      throw ValidationError("model " + r.model_id + " has inconsistent family, size or type");
  }
  if (models.size() < 3)
    throw ValidationError("behavioral analysis needs at least 3 models, got " + std::to_string(models.size()));

  BehavioralReport report;

  // Per-model means by domain (items weighted equally within a dataset mean).
  struct Means {
    double sum[3] = {0, 0, 0};
    std::size_t count[3] = {0, 0, 0};
    std::size_t items[3] = {0, 0, 0};
    double mean(Domain d) const { return sum[static_cast<int>(d)] / static_cast<double>(count[static_cast<int>(d)]); }
    bool has(Domain d) const { return count[static_cast<int>(d)] > 0; }
  };
  std::map<std::string, Means> means;
  for (const auto& r : rows) {
    auto& m = means[r.model_id];
    const auto k = static_cast<int>(r.domain);
    m.sum[k] += r.accuracy;
    ++m.count[k];
    m.items[k] += r.n_items;
  }

  // P1
  {
    std::vector<double> tom, prag;
    for (const auto& [id, m] : means)
      if (m.has(Domain::Tom) && m.has(Domain::Pragmatics)) {
        tom.push_back(m.mean(Domain::Tom));
        prag.push_back(m.mean(Domain::Pragmatics));
      }
    report.p1 = pearson_r(tom, prag);
    report.p1_supported = report.p1.r > 0.0 && report.p1.p < 0.05;
  }

  // P2
  {
    std::vector<const BehavioralRow*> sel;
    for (const auto& r : rows)
      if (r.domain != Domain::Syntax) sel.push_back(&r);
    const auto n = sel.size();
    BehavioralDesignParts parts;
    std::vector<std::string> ds_type(n), domain(n), dataset(n), group(n);
    std::vector<double> y(n);
    std::map<std::string, std::set<std::string>> datasets_by_domain;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& r = *sel[i];
      parts.family.push_back(r.family);
      parts.size.push_back(size_bucket(r.size_billions));
      parts.type.push_back(r.model_type);
      ds_type[i] = r.ds_type;
      domain[i] = domain_name(r.domain);
      dataset[i] = r.dataset_id;
      group[i] = domain[i] + "/" + r.ds_type;
      y[i] = smooth_response(r.accuracy, static_cast<double>(r.n_items));
      datasets_by_domain[domain[i]].insert(r.dataset_id);
    }
    if (datasets_by_domain.size() < 2)
      throw ValidationError("behavioral analysis needs both ToM and pragmatics datasets");
    std::size_t n_datasets = 0;
    for (const auto& [d, s] : datasets_by_domain) {
      n_datasets += s.size();
      if (s.size() == 1)
        report.warnings.push_back("only one " + d + " dataset: the by-dataset effect is degenerate in that domain");
    }
    DesignBuilder b(n);
    b.intercept();
    add_model_terms(b, parts, true);
    if (count_distinct(ds_type) > 1) b.factor("ds_type", ds_type);
    b.factor("domain", domain);
    if (n_datasets <= 40) {
      b.nested("dataset", dataset, group);
      report.notes.push_back("random by-dataset intercepts approximated by fixed dataset effects nested in domain "
                             "and dataset type");
    } else {
      report.notes.push_back("more than 40 datasets: by-dataset effects omitted");
    }
    const auto design = b.build(y);
    const auto fit = beta_regression_fit(design);
    const Eigen::VectorXd w = design.cell_weights({{"domain", domain_name(Domain::Tom)}}) -
                              design.cell_weights({{"domain", domain_name(Domain::Pragmatics)}});
    report.p2 = contrast(fit, w, Direction::NoDifference, "P2");
  }

  // P3
  {
    std::vector<double> y, syn, tom;
    BehavioralDesignParts parts;
    for (const auto& [id, m] : means) {
      if (!(m.has(Domain::Tom) && m.has(Domain::Pragmatics) && m.has(Domain::Syntax))) continue;
      const auto& a = models.at(id);
      y.push_back(smooth_response(m.mean(Domain::Pragmatics),
                                  static_cast<double>(m.items[static_cast<int>(Domain::Pragmatics)])));
      syn.push_back(m.mean(Domain::Syntax));
      tom.push_back(m.mean(Domain::Tom));
      parts.family.push_back(a.family);
      parts.size.push_back(size_bucket(a.size));
      parts.type.push_back(a.type);
    }
    if (y.size() < 3) {
      report.notes.push_back("P3 not evaluated: fewer than 3 models have ToM, pragmatics and syntax accuracies");
    } else {
      auto design_with = [&](const char* name, const std::vector<double>& predictor) {
        DesignBuilder b(y.size());
        b.intercept();
        add_model_terms(b, parts, false);
        b.numeric(name, predictor);
        return b.build(y);
      };
      report.p3 = loo_compare(design_with("syntax_accuracy", syn), design_with("tom_accuracy", tom), threads);
      report.p3_evaluated = true;
      report.p3_supported = report.p3.elpd_diff > 2.0 * report.p3.se_diff;
    }
  }
  return report;
}

void write_behavioral_csv(std::ostream& out, std::span<const BehavioralRow> rows) {
  out << kBehavioralHeader << '\n';
  for (const auto& r : rows) {
    write_behavioral_fields(out, r);
    out << '\n';
  }
}

std::vector<BehavioralRow> read_behavioral_csv(std::istream& in) {
  std::vector<BehavioralRow> rows;
  read_csv(in, kBehavioralHeader, [&](const std::vector<std::string>& f, std::size_t no) {
    rows.push_back(parse_behavioral_fields(f, no));
  });
  return rows;
}

void write_behavioral_verdict(std::ostream& out, const BehavioralReport& r) {
  out << "P1 " << (r.p1_supported ? "supported" : "unsupported") << ": ToM and pragmatics accuracy correlate across "
      << "models (r = " << format_fixed(r.p1.r, 3) << ", p = " << format_double(r.p1.p) << ", n = " << r.p1.n
      << ")\n";
  out << "P2 " << (r.p2.supported ? "supported" : "unsupported") << ": no ToM vs pragmatics domain difference "
      << "(estimate " << format_fixed(r.p2.estimate, 3) << " [" << format_fixed(r.p2.ci_low, 3) << ", "
      << format_fixed(r.p2.ci_high, 3) << "])\n";
  if (r.p3_evaluated)
    out << "P3 " << (r.p3_supported ? "supported" : "unsupported")
        << ": ToM accuracy predicts pragmatics accuracy better than syntax accuracy (elpd_diff "
        << format_fixed(r.p3.elpd_diff, 3) << ", se " << format_fixed(r.p3.se_diff, 3) << ")\n";
  else
    out << "P3 not evaluated\n";
  for (const auto& w : r.warnings) out << "warning: " << w << '\n';
  for (const auto& n : r.notes) out << "note: " << n << '\n';
}

// ---------------------------------------------------------------------------

AtomsData atoms_design(std::span<const AtomsRow> rows) {
  const auto n = rows.size();
  if (n == 0) throw ValidationError("ATOMS table is empty");
  BehavioralDesignParts parts;
  std::vector<std::string> ds_type;
  std::vector<double> y;
  AtomsData out;
  out.flags.resize(static_cast<Eigen::Index>(n), 7);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = rows[i].row;
    if (r.domain != Domain::Tom) throw ValidationError("ATOMS rows must be ToM datasets; " + r.dataset_id + " is not");
    parts.family.push_back(r.family);
    parts.size.push_back(size_bucket(r.size_billions));
    parts.type.push_back(r.model_type);
    ds_type.push_back(r.ds_type);
    y.push_back(smooth_response(r.accuracy, static_cast<double>(r.n_items)));
    for (int j = 0; j < 7; ++j) out.flags(static_cast<Eigen::Index>(i), j) = rows[i].flags[static_cast<std::size_t>(j)];
  }
  DesignBuilder b(n);
  b.intercept();
  add_model_terms(b, parts, true);
  if (count_distinct(ds_type) > 1) b.factor("ds_type", ds_type);
  out.base = b.build(y);
  return out;
}

void write_atoms_rows_csv(std::ostream& out, std::span<const AtomsRow> rows) {
  out << atoms_header() << '\n';
  for (const auto& a : rows) {
    write_behavioral_fields(out, a.row);
    for (int f : a.flags) out << ',' << f;
    out << '\n';
  }
}

std::vector<AtomsRow> read_atoms_rows_csv(std::istream& in) {
  std::vector<AtomsRow> rows;
  read_csv(in, atoms_header(), [&](const std::vector<std::string>& f, std::size_t no) {
    AtomsRow a;
    a.row = parse_behavioral_fields(f, no);
    for (std::size_t j = 0; j < 7; ++j) {
      const auto& v = f[9 + j];
      if (v != "0" && v != "1")
        throw ValidationError("line " + std::to_string(no) + ": ATOMS flag " + std::string(kAtomsNames[j]) +
                              " must be 0 or 1");
      a.flags[j] = v == "1";
    }
    rows.push_back(std::move(a));
  });
  return rows;
}

std::vector<AtomsModelScore> atoms_subset_search(const DesignMatrix& base, const Eigen::MatrixXi& flags,
                                                 unsigned threads) {
  constexpr unsigned kAtoms = static_cast<unsigned>(kAtomsNames.size());
  if (flags.cols() != static_cast<Eigen::Index>(kAtoms)) throw ValidationError("ATOMS search needs 7 flag columns");
  if (flags.rows() != base.x.rows()) throw ValidationError("ATOMS flags and design differ in row count");
  Eigen::MatrixXd coded(flags.rows(), kAtoms);
  for (unsigned j = 0; j < kAtoms; ++j) {
    for (Eigen::Index i = 0; i < flags.rows(); ++i) {
      const int f = flags(i, j);
      if (f != 0 && f != 1) throw ValidationError("ATOMS flags must be 0 or 1");
      coded(i, j) = f ? 1.0 : -1.0;
    }
    if ((coded.col(j).array() == coded(0, j)).all())
      throw ValidationError("ATOMS flag " + std::string(kAtomsNames[j]) + " is constant");
  }

  constexpr unsigned kModels = 1u << kAtoms;
  std::vector<AtomsModelScore> scores(kModels);
  std::vector<std::vector<double>> pointwise(kModels);
  std::vector<std::string> errors(kModels);
  parallel_for(kModels, threads, [&](std::size_t s) {
    auto& sc = scores[s];
    sc.subset = static_cast<unsigned>(s);
    std::vector<Eigen::Index> cols;
    for (unsigned j = 0; j < kAtoms; ++j)
      if (s & (1u << j)) {
        cols.push_back(static_cast<Eigen::Index>(j));
        sc.predictors.emplace_back(kAtomsNames[j]);
      }
    Eigen::MatrixXd extra(coded.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) extra.col(static_cast<Eigen::Index>(c)) = coded.col(cols[c]);
    try {
      pointwise[s] = loo_pointwise(base.with_columns(extra, sc.predictors), 1);
    } catch (const std::exception& e) {
      errors[s] = e.what();
    }
  });
  for (unsigned s = 0; s < kModels; ++s)
    if (!errors[s].empty()) {
      std::string name = "base";
      for (const auto& p : scores[s].predictors) name += " + " + p;
      throw StatisticalError("ATOMS model '" + name + "': " + errors[s]);
    }
  for (unsigned s = 0; s < kModels; ++s) {
    scores[s].elpd = sum_in_order(pointwise[s]);
    scores[s].se = sum_se(pointwise[s]);
  }
  std::vector<unsigned> order(kModels);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](unsigned a, unsigned b) { return scores[a].elpd > scores[b].elpd; });
  const auto& best = pointwise[order.front()];
  std::vector<AtomsModelScore> ranked;
  ranked.reserve(kModels);
  for (unsigned s : order) {
    auto sc = scores[s];
    std::vector<double> diff(best.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = pointwise[s][i] - best[i];
    sc.elpd_diff_to_best = sum_in_order(diff);
    sc.se_diff_to_best = sum_se(diff);
    ranked.push_back(std::move(sc));
  }
  return ranked;
}

void write_atoms_csv(std::ostream& out, std::span<const AtomsModelScore> scores) {
  out << "rank,subset,predictors,elpd,se,elpd_diff_to_best,se_diff_to_best\n";
  for (std::size_t r = 0; r < scores.size(); ++r) {
    const auto& s = scores[r];
    std::string preds = "base";
    for (const auto& p : s.predictors) preds += "+" + p;
    out << r + 1 << ',' << s.subset << ',' << preds << ',' << format_double(s.elpd) << ',' << format_double(s.se)
        << ',' << format_double(s.elpd_diff_to_best) << ',' << format_double(s.se_diff_to_best) << '\n';
  }
}

}  // namespace netloc
