#include "netloc/suite_store.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "netloc/error.hpp"

namespace netloc {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr std::string_view kSuiteFormat = "netloc-suite/1";
constexpr std::string_view kActivationFormat = "netloc-activations/1";
constexpr std::string_view kMaskFormat = "netloc-mask/1";
constexpr std::string_view kManifestName = "manifest";
constexpr std::string_view kPayloadName = "activations.bin";

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ValidationError("invalid number for " + std::string(what) + ": '" + std::string(text) + "'");
  return v;
}

std::size_t parse_size(std::string_view text, std::string_view what) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ValidationError("invalid integer for " + std::string(what) + ": '" + std::string(text) + "'");
  return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw ValidationError("invalid boolean for " + std::string(what) + ": '" + std::string(text) + "'");
}

void require_single_line(std::string_view value, std::string_view field) {
  if (value.find_first_of("\r\n") != std::string_view::npos)
    throw ValidationError(std::string(field) + " must not contain line breaks");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw ValidationError("write failed for " + path.string());
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

// Ordered key=value reader; repeated keys are kept in order.
struct KeyValues {
  std::vector<std::pair<std::string, std::string>> entries;

  const std::string& get(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return v;
    throw ValidationError("missing field '" + std::string(key) + "'");
  }
  std::vector<std::string> all(std::string_view key) const {
    std::vector<std::string> out;
    for (const auto& [k, v] : entries)
      if (k == key) out.push_back(v);
    return out;
  }
};

KeyValues parse_key_values(std::span<const std::string_view> lines) {
  KeyValues kv;
  for (auto line : lines) {
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ValidationError("malformed line (expected key=value): '" + std::string(line) + "'");
    kv.entries.emplace_back(std::string(line.substr(0, eq)), std::string(line.substr(eq + 1)));
  }
  return kv;
}

void validate_set(const StimulusSet& set, const std::string& suite, std::set<std::string>& conditions) {
  if (set.condition_name.empty()) throw ValidationError("suite " + suite + ": empty condition name");
  if (!conditions.insert(set.condition_name).second)
    throw ValidationError("suite " + suite + ": duplicate condition '" + set.condition_name + "'");
  if (set.stimuli.empty())
    throw ValidationError("suite " + suite + ": condition '" + set.condition_name + "' has no stimuli");
  std::set<std::string> ids;
  for (const auto& s : set.stimuli) {
    if (s.id.empty()) throw ValidationError("suite " + suite + ": empty stimulus id in " + set.condition_name);
    if (!ids.insert(s.id).second)
      throw ValidationError("suite " + suite + ": duplicate stimulus id '" + s.id + "' in " + set.condition_name);
    if (s.options.size() < 2)
      throw ValidationError("stimulus " + s.id + ": needs at least two options");
    if (s.correct_index && (*s.correct_index < 0 || static_cast<std::size_t>(*s.correct_index) >= s.options.size()))
      throw ValidationError("stimulus " + s.id + ": correct_index out of range");
  }
}

json stimulus_to_json(const Stimulus& s, std::string_view role, const std::string& condition) {
  json j;
  j["role"] = role;
  j["condition"] = condition;
  j["id"] = s.id;
  j["instruction"] = s.instruction;
  j["story"] = s.story;
  j["question"] = s.question;
  j["options"] = s.options;
  j["answer_prefix"] = s.answer_prefix;
  if (s.correct_index) j["correct_index"] = *s.correct_index;
  return j;
}

}  // namespace

void validate(const LocalizerSuite& suite) {
  if (suite.name.empty()) throw ValidationError("suite name is empty");
  require_single_line(suite.name, "suite name");
  if (suite.target_sets.empty()) throw ValidationError("suite " + suite.name + ": no target sets");
  if (suite.control_sets.empty()) throw ValidationError("suite " + suite.name + ": no control sets");
  std::set<std::string> conditions;
  for (const auto& s : suite.target_sets) validate_set(s, suite.name, conditions);
  for (const auto& s : suite.control_sets) validate_set(s, suite.name, conditions);
  if (suite.paired) {
    if (!suite.is_simple())
      throw ValidationError("suite " + suite.name + ": paired suites need exactly one target and one control set");
    const auto& t = suite.target_sets[0].stimuli;
    const auto& c = suite.control_sets[0].stimuli;
    if (t.size() != c.size())
      throw ValidationError("paired suite " + suite.name + " is misaligned: " + std::to_string(t.size()) +
                            " target vs " + std::to_string(c.size()) + " control stimuli");
    for (std::size_t i = 0; i < t.size(); ++i)
      if (t[i].id != c[i].id)
        throw ValidationError("paired suite " + suite.name + " is misaligned at item " + std::to_string(i) + ": '" +
                              t[i].id + "' vs '" + c[i].id + "'");
  }
}

void write_suite(const LocalizerSuite& suite, const fs::path& path) {
  validate(suite);
  json header;
  header["format"] = kSuiteFormat;
  header["suite"] = suite.name;
  header["paired"] = suite.paired;
  std::string out = header.dump() + "\n";
  for (const auto& set : suite.target_sets)
    for (const auto& s : set.stimuli) out += stimulus_to_json(s, "target", set.condition_name).dump() + "\n";
  for (const auto& set : suite.control_sets)
    for (const auto& s : set.stimuli) out += stimulus_to_json(s, "control", set.condition_name).dump() + "\n";
  write_file(path, out);
}

LocalizerSuite read_suite(const fs::path& path) {
  const std::string text = read_file(path);
  LocalizerSuite suite;
  bool have_header = false;
  std::size_t line_no = 0;
  for (auto line : split_lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (j.value("format", "") != kSuiteFormat)
          throw ValidationError(path.string() + ": not a suite file (bad format header)");
        suite.name = j.at("suite").get<std::string>();
        suite.paired = j.at("paired").get<bool>();
        have_header = true;
        continue;
      }
      Stimulus s;
      s.id = j.at("id").get<std::string>();
      s.instruction = j.at("instruction").get<std::string>();
      s.story = j.at("story").get<std::string>();
      s.question = j.at("question").get<std::string>();
      s.options = j.at("options").get<std::vector<std::string>>();
      s.answer_prefix = j.at("answer_prefix").get<std::string>();
      if (j.contains("correct_index")) s.correct_index = j.at("correct_index").get<int>();
      const auto role = j.at("role").get<std::string>();
      const auto condition = j.at("condition").get<std::string>();
      std::vector<StimulusSet>* sets = nullptr;
      if (role == "target")
        sets = &suite.target_sets;
      else if (role == "control")
        sets = &suite.control_sets;
      else
        throw ValidationError("unknown role '" + role + "'");
      auto it = std::find_if(sets->begin(), sets->end(),
                             [&](const StimulusSet& set) { return set.condition_name == condition; });
      if (it == sets->end()) {
        sets->push_back(StimulusSet{condition, {}});
        it = std::prev(sets->end());
      }
      it->stimuli.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw ValidationError(path.string() + ": empty suite file");
  validate(suite);
  return suite;
}

void validate(const ActivationTensor& t) {
  if (t.n_layers == 0) throw ValidationError("activation tensor: n_layers must be >= 1");
  if (t.hidden_dim == 0) throw ValidationError("activation tensor: hidden_dim must be >= 1");
  if (t.stimulus_ids.empty()) throw ValidationError("activation tensor: no stimuli");
  for (auto field : {&t.model_id, &t.suite_name, &t.condition_name, &t.provenance}) require_single_line(*field, "manifest field");
  for (const auto& id : t.stimulus_ids) {
    if (id.empty()) throw ValidationError("activation tensor: empty stimulus id");
    require_single_line(id, "stimulus id");
  }
  const std::size_t expected = t.n_stimuli() * t.n_layers * t.hidden_dim;
  if (t.values.size() != expected)
    throw ValidationError("activation tensor: dimension mismatch, expected " + std::to_string(expected) +
                          " values, found " + std::to_string(t.values.size()));
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    if (!std::isfinite(t.values[k])) {
      const std::size_t s = k / t.units();
      const std::size_t l = (k % t.units()) / t.hidden_dim;
      const std::size_t i = k % t.hidden_dim;
      throw ValidationError("activation tensor: non-finite value at (stimulus " + std::to_string(s) + ", layer " +
                            std::to_string(l) + ", unit " + std::to_string(i) + ")");
    }
  }
}

void write_activation_tensor(const ActivationTensor& t, const fs::path& dir) {
  validate(t);
  std::string manifest;
  manifest += "format=" + std::string(kActivationFormat) + "\n";
  manifest += "model_id=" + t.model_id + "\n";
  manifest += "suite=" + t.suite_name + "\n";
  manifest += "condition=" + t.condition_name + "\n";
  manifest += "provenance=" + t.provenance + "\n";
  manifest += "dtype=f32le\n";
  manifest += "n_stimuli=" + std::to_string(t.n_stimuli()) + "\n";
  manifest += "n_layers=" + std::to_string(t.n_layers) + "\n";
  manifest += "hidden_dim=" + std::to_string(t.hidden_dim) + "\n";
  manifest += "element_count=" + std::to_string(t.values.size()) + "\n";
  for (const auto& id : t.stimulus_ids) manifest += "stimulus_id=" + id + "\n";

  std::string payload(t.values.size() * 4, '\0');
  for (std::size_t k = 0; k < t.values.size(); ++k) {
    const auto bits = std::bit_cast<std::uint32_t>(t.values[k]);
    for (int b = 0; b < 4; ++b) payload[4 * k + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
  }
  fs::create_directories(dir);
  write_file(dir / kPayloadName, payload);
  write_file(dir / kManifestName, manifest);
}

ActivationTensor read_activation_tensor(const fs::path& dir) {
  const auto manifest_text = read_file(dir / kManifestName);
  const auto lines = split_lines(manifest_text);
  const auto kv = parse_key_values(lines);
  if (kv.get("format") != kActivationFormat) throw ValidationError(dir.string() + ": unknown manifest format");
  if (kv.get("dtype") != "f32le") throw ValidationError(dir.string() + ": unknown dtype '" + kv.get("dtype") + "'");

  ActivationTensor t;
  t.model_id = kv.get("model_id");
  t.suite_name = kv.get("suite");
  t.condition_name = kv.get("condition");
  t.provenance = kv.get("provenance");
  t.n_layers = parse_size(kv.get("n_layers"), "n_layers");
  t.hidden_dim = parse_size(kv.get("hidden_dim"), "hidden_dim");
  t.stimulus_ids = kv.all("stimulus_id");
  const std::size_t n = parse_size(kv.get("n_stimuli"), "n_stimuli");
  const std::size_t count = parse_size(kv.get("element_count"), "element_count");
  if (t.n_layers == 0) throw ValidationError(dir.string() + ": manifest n_layers must be >= 1");
  if (t.hidden_dim == 0) throw ValidationError(dir.string() + ": manifest hidden_dim must be >= 1");
  if (n != t.stimulus_ids.size())
    throw ValidationError(dir.string() + ": manifest lists " + std::to_string(t.stimulus_ids.size()) +
                          " stimulus ids but n_stimuli=" + std::to_string(n));
  if (count != n * t.n_layers * t.hidden_dim)
    throw ValidationError(dir.string() + ": element_count " + std::to_string(count) + " does not match shape");

  const auto payload = read_file(dir / kPayloadName);
  if (payload.size() != count * 4)
    throw ValidationError("expected " + std::to_string(count * 4) + " bytes, found " + std::to_string(payload.size()));
  t.values.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b)
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(payload[4 * k + b])) << (8 * b);
    t.values[k] = std::bit_cast<float>(bits);
  }
  validate(t);
  return t;
}

ActivationTensor subset_rows(const ActivationTensor& t, std::span<const std::size_t> rows) {
  ActivationTensor out;
  out.model_id = t.model_id;
  out.suite_name = t.suite_name;
  out.condition_name = t.condition_name;
  out.provenance = t.provenance;
  out.n_layers = t.n_layers;
  out.hidden_dim = t.hidden_dim;
  out.stimulus_ids.reserve(rows.size());
  out.values.reserve(rows.size() * t.units());
  for (auto r : rows) {
    if (r >= t.n_stimuli()) throw ValidationError("subset_rows: row out of range");
    out.stimulus_ids.push_back(t.stimulus_ids[r]);
    auto row = t.stimulus_row(r);
    out.values.insert(out.values.end(), row.begin(), row.end());
  }
  return out;
}

std::string_view to_string(SelectionKind kind) {
  return kind == SelectionKind::Target ? "target" : "least_active";
}

std::string_view to_string(Method method) { return method == Method::Simple ? "simple" : "conjunctive"; }

std::string_view to_string(FdrMethod method) {
  switch (method) {
    case FdrMethod::BenjaminiHochberg: return "bh";
    case FdrMethod::Bonferroni: return "bonferroni";
    case FdrMethod::None: return "none";
  }
  return "bh";
}

SelectionKind parse_selection_kind(std::string_view text) {
  if (text == "target") return SelectionKind::Target;
  if (text == "least_active") return SelectionKind::LeastActive;
  throw ValidationError("unknown selection kind '" + std::string(text) + "'");
}

Method parse_method(std::string_view text) {
  if (text == "simple") return Method::Simple;
  if (text == "conjunctive") return Method::Conjunctive;
  throw ValidationError("unknown method '" + std::string(text) + "'");
}

FdrMethod parse_fdr_method(std::string_view text) {
  if (text == "bh") return FdrMethod::BenjaminiHochberg;
  if (text == "bonferroni") return FdrMethod::Bonferroni;
  if (text == "none") return FdrMethod::None;
  throw ValidationError("unknown fdr method '" + std::string(text) + "'");
}

std::size_t mask_capacity(double cap_fraction, std::size_t total_units) {
  // The 1e-9 slack keeps products such as 0.01 * 1000 from rounding up.
  const double raw = cap_fraction * static_cast<double>(total_units);
  return static_cast<std::size_t>(std::ceil(raw - 1e-9));
}

void validate(const SubnetworkMask& mask) {
  require_single_line(mask.model_id, "model_id");
  require_single_line(mask.localizer_name, "localizer");
  if (mask.n_layers == 0 || mask.hidden_dim == 0) throw ValidationError("mask: model dimensions must be positive");
  if (!(mask.meta.cap_fraction > 0.0 && mask.meta.cap_fraction <= 1.0))
    throw ValidationError("mask: cap_fraction must lie in (0, 1]");
  for (std::size_t k = 0; k < mask.units.size(); ++k) {
    const auto& u = mask.units[k];
    if (u.layer >= mask.n_layers || u.index >= mask.hidden_dim)
      throw ValidationError("mask: unit (" + std::to_string(u.layer) + ", " + std::to_string(u.index) +
                            ") out of range");
    if (k > 0 && !(mask.units[k - 1] < u)) throw ValidationError("mask: units not strictly ascending");
  }
  const auto cap = mask_capacity(mask.meta.cap_fraction, mask.n_layers * mask.hidden_dim);
  if (mask.units.size() > cap)
    throw ValidationError("mask: " + std::to_string(mask.units.size()) + " units exceed cap of " + std::to_string(cap));
}

std::string serialize_mask(const SubnetworkMask& mask) {
  validate(mask);
  std::string out;
  out += "format=" + std::string(kMaskFormat) + "\n";
  out += "model_id=" + mask.model_id + "\n";
  out += "localizer=" + mask.localizer_name + "\n";
  out += "selection=" + std::string(to_string(mask.selection_kind)) + "\n";
  out += "method=" + std::string(to_string(mask.meta.method)) + "\n";
  out += "paired=" + std::string(mask.meta.paired ? "true" : "false") + "\n";
  out += "fdr=" + std::string(to_string(mask.meta.fdr_method)) + "\n";
  out += "alpha=" + format_double(mask.meta.alpha) + "\n";
  out += "cap_fraction=" + format_double(mask.meta.cap_fraction) + "\n";
  out += "n_layers=" + std::to_string(mask.n_layers) + "\n";
  out += "hidden_dim=" + std::to_string(mask.hidden_dim) + "\n";
  out += "n_units=" + std::to_string(mask.units.size()) + "\n";
  for (const auto& u : mask.units) out += std::to_string(u.layer) + " " + std::to_string(u.index) + "\n";
  return out;
}

SubnetworkMask parse_mask(std::string_view text) {
  const auto lines = split_lines(text);
  std::vector<std::string_view> header;
  std::vector<std::string_view> body;
  for (auto line : lines) {
    if (line.empty()) continue;
    (line.find('=') != std::string_view::npos ? header : body).push_back(line);
  }
  const auto kv = parse_key_values(header);
  if (kv.get("format") != kMaskFormat) throw ValidationError("not a mask file (bad format header)");
  SubnetworkMask mask;
  mask.model_id = kv.get("model_id");
  mask.localizer_name = kv.get("localizer");
  mask.selection_kind = parse_selection_kind(kv.get("selection"));
  mask.meta.method = parse_method(kv.get("method"));
  mask.meta.paired = parse_bool(kv.get("paired"), "paired");
  mask.meta.fdr_method = parse_fdr_method(kv.get("fdr"));
  mask.meta.alpha = parse_double(kv.get("alpha"), "alpha");
  mask.meta.cap_fraction = parse_double(kv.get("cap_fraction"), "cap_fraction");
  mask.n_layers = parse_size(kv.get("n_layers"), "n_layers");
  mask.hidden_dim = parse_size(kv.get("hidden_dim"), "hidden_dim");
  const auto n_units = parse_size(kv.get("n_units"), "n_units");
  for (auto line : body) {
    auto sp = line.find(' ');
    if (sp == std::string_view::npos) throw ValidationError("mask: malformed unit line '" + std::string(line) + "'");
    UnitId u;
    u.layer = static_cast<std::uint32_t>(parse_size(line.substr(0, sp), "layer"));
    u.index = static_cast<std::uint32_t>(parse_size(line.substr(sp + 1), "index"));
    mask.units.push_back(u);
  }
  if (mask.units.size() != n_units)
    throw ValidationError("mask: header declares " + std::to_string(n_units) + " units, found " +
                          std::to_string(mask.units.size()));
  validate(mask);
  return mask;
}

void write_mask(const SubnetworkMask& mask, const fs::path& path) { write_file(path, serialize_mask(mask)); }

SubnetworkMask read_mask(const fs::path& path) { return parse_mask(read_file(path)); }

std::string_view to_string(Domain domain) {
  switch (domain) {
    case Domain::Tom: return "tom";
    case Domain::Pragmatics: return "pragmatics";
    case Domain::Syntax: return "syntax";
  }
  return "tom";
}

std::string_view to_string(Condition condition) {
  switch (condition) {
    case Condition::Intact: return "intact";
    case Condition::TargetAblation: return "target_ablation";
    case Condition::ControlAblation: return "control_ablation";
  }
  return "intact";
}

Domain parse_domain(std::string_view text) {
  if (text == "tom") return Domain::Tom;
  if (text == "pragmatics") return Domain::Pragmatics;
  if (text == "syntax") return Domain::Syntax;
  throw ValidationError("unknown domain '" + std::string(text) + "'");
}

Condition parse_condition(std::string_view text) {
  if (text == "intact") return Condition::Intact;
  if (text == "target_ablation") return Condition::TargetAblation;
  if (text == "control_ablation") return Condition::ControlAblation;
  throw ValidationError("unknown condition '" + std::string(text) + "'");
}

void validate(const AccuracyRecord& r) {
  if (r.model_id.empty() || r.dataset_id.empty() || r.item_id.empty())
    throw ValidationError("accuracy record: model_id, dataset_id and item_id are required");
  if ((r.condition == Condition::Intact) != r.localizer_name.empty())
    throw ValidationError("accuracy record " + r.item_id +
                          ": localizer_name must be empty exactly for the intact condition");
}

std::string serialize_record(const AccuracyRecord& r) {
  validate(r);
  json j;
  j["model_id"] = r.model_id;
  j["dataset_id"] = r.dataset_id;
  j["domain"] = to_string(r.domain);
  j["condition"] = to_string(r.condition);
  j["localizer_name"] = r.localizer_name;
  j["item_id"] = r.item_id;
  j["correct"] = r.correct;
  return j.dump();
}

AccuracyRecord parse_record(std::string_view line) {
  AccuracyRecord r;
  try {
    const auto j = json::parse(line);
    r.model_id = j.at("model_id").get<std::string>();
    r.dataset_id = j.at("dataset_id").get<std::string>();
    r.domain = parse_domain(j.at("domain").get<std::string>());
    r.condition = parse_condition(j.at("condition").get<std::string>());
    r.localizer_name = j.at("localizer_name").get<std::string>();
    r.item_id = j.at("item_id").get<std::string>();
    r.correct = j.at("correct").get<bool>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("accuracy record: ") + e.what());
  }
  validate(r);
  return r;
}

void append_accuracy_records(const fs::path& path, std::span<const AccuracyRecord> records) {
  std::string out;
  for (const auto& r : records) out += serialize_record(r) + "\n";
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::app);
  if (!f) throw ValidationError("cannot append to " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

std::vector<AccuracyRecord> read_accuracy_log(const fs::path& path) {
  const auto text = read_file(path);
  std::vector<AccuracyRecord> records;
  std::size_t line_no = 0;
  for (auto line : split_lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(parse_record(line));
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

}  // namespace netloc
