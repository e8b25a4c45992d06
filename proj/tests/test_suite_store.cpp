#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "netloc/error.hpp"
#include "netloc/suite_store.hpp"
#include "test_util.hpp"

using namespace netloc;
namespace fs = std::filesystem;

namespace {

Stimulus stim(const std::string& id, std::optional<int> correct = std::nullopt) {
  return Stimulus{id, "Read the story.", "Sally puts the ball in the basket.", "Where will Sally look?",
                  {"basket", "box"}, "Answer:", correct};
}

LocalizerSuite paired_suite(std::size_t n_target, std::size_t n_control) {
  LocalizerSuite s;
  s.name = "LatentBeliefs";
  s.paired = true;
  StimulusSet t{"false_belief", {}}, c{"true_belief", {}};
  for (std::size_t i = 0; i < n_target; ++i) t.stimuli.push_back(stim("item_" + std::to_string(i)));
  for (std::size_t i = 0; i < n_control; ++i) c.stimuli.push_back(stim("item_" + std::to_string(i)));
  s.target_sets.push_back(t);
  s.control_sets.push_back(c);
  return s;
}

ActivationTensor tensor(std::size_t n, std::size_t L, std::size_t d) {
  ActivationTensor t;
  t.model_id = "org/toy";
  t.suite_name = "LatentBeliefs";
  t.condition_name = "false_belief";
  t.n_layers = L;
  t.hidden_dim = d;
  for (std::size_t i = 0; i < n; ++i) t.stimulus_ids.push_back("s" + std::to_string(i));
  t.values.assign(n * L * d, 0.0f);
  return t;
}

}  // namespace

TEST_CASE("suite round trip and simplicity") {
  TempDir tmp("suite");
  auto s = paired_suite(3, 3);
  s.target_sets[0].stimuli[1].correct_index = 1;
  CHECK(s.is_simple());
  write_suite(s, tmp.path / "lb.suite");
  CHECK(read_suite(tmp.path / "lb.suite") == s);

  LocalizerSuite multi;
  multi.name = "CommunicativeIntent";
  multi.target_sets = {{"irony", {stim("a")}}, {"deceit", {stim("b")}}};
  multi.control_sets = {{"literal", {stim("c")}}};
  CHECK_FALSE(multi.is_simple());
  write_suite(multi, tmp.path / "ci.suite");
  CHECK(read_suite(tmp.path / "ci.suite") == multi);
}

TEST_CASE("suite invariants") {
  CHECK_THROWS_AS(validate(paired_suite(100, 99)), ValidationError);
  auto shuffled = paired_suite(3, 3);
  std::swap(shuffled.control_sets[0].stimuli[0], shuffled.control_sets[0].stimuli[1]);
  CHECK_THROWS_AS(validate(shuffled), ValidationError);

  auto one_option = paired_suite(2, 2);
  one_option.target_sets[0].stimuli[0].options = {"only"};
  CHECK_THROWS_AS(validate(one_option), ValidationError);

  auto bad_index = paired_suite(2, 2);
  bad_index.target_sets[0].stimuli[0].correct_index = 2;
  CHECK_THROWS_AS(validate(bad_index), ValidationError);

  auto dup = paired_suite(2, 2);
  dup.paired = false;
  dup.target_sets[0].stimuli[1].id = "item_0";
  CHECK_THROWS_AS(validate(dup), ValidationError);

  LocalizerSuite no_control;
  no_control.name = "X";
  no_control.target_sets = {{"t", {stim("a")}}};
  CHECK_THROWS_AS(validate(no_control), ValidationError);
}

TEST_CASE("activation store size arithmetic and round trip") {
  TempDir tmp("act");
  auto t = tensor(2, 3, 4);
  for (std::size_t k = 0; k < t.values.size(); ++k) t.values[k] = static_cast<float>(k) * 0.1f - 1.0f;
  t.values[5] = -0.0f;
  t.values[7] = 1e-40f;  // subnormal
  write_activation_tensor(t, tmp.path / "store");
  CHECK(fs::file_size(tmp.path / "store" / "activations.bin") == 96);
  CHECK(slurp(tmp.path / "store" / "manifest").find("element_count=24\n") != std::string::npos);
  const auto back = read_activation_tensor(tmp.path / "store");
  CHECK(back == t);
  CHECK(std::signbit(back.values[5]));
  CHECK(back.provenance == std::string(kDefaultProvenance));
  CHECK(back.at(1, 2, 3) == t.values[(1 * 3 + 2) * 4 + 3]);
}

TEST_CASE("activation store rejects bad input") {
  TempDir tmp("actbad");
  auto t = tensor(2, 3, 4);
  write_activation_tensor(t, tmp.path / "store");
  fs::resize_file(tmp.path / "store" / "activations.bin", 92);
  try {
    read_activation_tensor(tmp.path / "store");
    FAIL("truncated payload accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()) == "expected 96 bytes, found 92");
  }

  auto nan = tensor(2, 3, 4);
  nan.values[(1 * 3 + 2) * 4 + 1] = std::nanf("");
  try {
    write_activation_tensor(nan, tmp.path / "nan");
    FAIL("NaN accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("(stimulus 1, layer 2, unit 1)") != std::string::npos);
  }

  CHECK_THROWS_AS(validate(tensor(2, 0, 4)), ValidationError);
  auto short_values = tensor(2, 3, 4);
  short_values.values.pop_back();
  CHECK_THROWS_AS(validate(short_values), ValidationError);

  write_activation_tensor(t, tmp.path / "zero");
  auto manifest = slurp(tmp.path / "zero" / "manifest");
  manifest.replace(manifest.find("n_layers=3"), 10, "n_layers=0");
  std::ofstream(tmp.path / "zero" / "manifest", std::ios::trunc) << manifest;
  CHECK_THROWS_AS(read_activation_tensor(tmp.path / "zero"), ValidationError);
}

TEST_CASE("subset_rows keeps the requested order") {
  auto t = tensor(3, 1, 2);
  t.values = {0, 1, 10, 11, 20, 21};
  const std::vector<std::size_t> rows{2, 0};
  const auto s = subset_rows(t, rows);
  CHECK(s.stimulus_ids == std::vector<std::string>{"s2", "s0"});
  CHECK(s.values == std::vector<float>{20, 21, 0, 1});
}

TEST_CASE("mask capacity and serialization") {
  CHECK(mask_capacity(0.01, 1000) == 10);
  CHECK(mask_capacity(0.01, 1024) == 11);
  CHECK(mask_capacity(0.01, 50) == 1);

  SubnetworkMask m;
  m.model_id = "org/toy";
  m.localizer_name = "LatentBeliefs-simple";
  m.n_layers = 8;
  m.hidden_dim = 128;
  m.units = {{0, 5}, {3, 127}, {7, 0}};
  const auto text = serialize_mask(m);
  CHECK(parse_mask(text) == m);
  CHECK(serialize_mask(parse_mask(text)) == text);

  auto unsorted = m;
  std::swap(unsorted.units[0], unsorted.units[1]);
  CHECK_THROWS_AS(validate(unsorted), ValidationError);
  auto out_of_range = m;
  out_of_range.units.back() = {8, 0};
  CHECK_THROWS_AS(validate(out_of_range), ValidationError);
  auto over_cap = m;
  over_cap.units.clear();
  for (std::uint32_t i = 0; i < 12; ++i) over_cap.units.push_back({0, i});
  CHECK_THROWS_AS(validate(over_cap), ValidationError);
  CHECK_THROWS_AS(parse_mask("format=other\n"), ValidationError);
}

TEST_CASE("accuracy log append and read") {
  TempDir tmp("log");
  AccuracyRecord a{"m", "tom_1", Domain::Tom, Condition::Intact, "", "i1", true};
  AccuracyRecord b{"m", "prag_1", Domain::Pragmatics, Condition::TargetAblation, "LatentBeliefs-simple", "i2", false};
  append_accuracy_records(tmp.path / "log.jsonl", std::vector{a});
  append_accuracy_records(tmp.path / "log.jsonl", std::vector{b});
  CHECK(read_accuracy_log(tmp.path / "log.jsonl") == std::vector{a, b});
  CHECK(parse_record(serialize_record(b)) == b);

  auto bad = a;
  bad.localizer_name = "LatentBeliefs-simple";
  CHECK_THROWS_AS(validate(bad), ValidationError);
  CHECK_THROWS_AS(parse_record("{\"model_id\": 1}"), ValidationError);
}
