#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cpfusion/pipeline.hpp"

using namespace cpfusion;
using namespace cpfusion::pipeline;
namespace fs = std::filesystem;

namespace {

// One short scenario and a small slice of every experiment.
const char* kSmall = R"({
  "seed": 3,
  "scenarios": [{"name": "small", "spec": {"use_case": "UC3", "duration_s": 900, "attack_start_s": 300,
                                           "attack_end_s": 700, "seed": 5}}],
  "models": ["DT", {"algo": "GNB"}],
  "cluster": {"algos": ["kmeans"], "k_max": 4, "max_rows": 300},
  "manifold": {"algos": ["mds", "isomap"], "max_rows": 150, "models": ["DT"]},
  "cotrain": {"bases": ["DT"], "max_loops": 5, "seeds": [1, 2]}
})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return Errc::InvalidArgument;
}

}  // namespace

TEST_CASE("config parsing keeps defaults and rejects unknown keys") {
  const auto c = config_from_json("{}");
  CHECK(c.scenarios.size() == 4);
  CHECK(c.label_mode == LabelChoice::Both);
  CHECK(c.cotrain.labeled_parts == 1);
  CHECK(c.cotrain.unlabeled_parts == 2);

  const auto s = config_from_json(kSmall);
  REQUIRE(s.scenarios.size() == 1);
  CHECK(s.scenarios[0].spec->duration_s == 900.0);
  CHECK(s.scenarios[0].spec->n_masters == 1);
  CHECK(s.models.size() == 2);
  CHECK(s.cotrain.seeds == std::vector<std::uint64_t>{1, 2});

  CHECK(code_of([] { config_from_json(R"({"sead": 1})"); }) == Errc::ConfigError);
  CHECK(code_of([] { config_from_json(R"({"cotrain": {"ratio": "1-2"}})"); }) == Errc::ConfigError);
  CHECK(code_of([] { config_from_json(R"({"models": [{"algo": "DT", "params": {"depth": 3}}]})"); }) == Errc::ConfigError);
  CHECK(code_of([] { config_from_json(R"({"scenarios": [{"bundle": "/nonexistent/bundle"}]})"); }) == Errc::ConfigError);
  CHECK(code_of([] { config_from_json(R"({"scenarios": [{"spec": {"attack_start_s": 2000}}]})"); }) == Errc::ConfigError);
  CHECK(code_of([] { config_from_json("not json"); }) == Errc::ConfigError);
}

TEST_CASE("config hash covers every value") {
  const auto a = config_from_json(kSmall);
  CHECK(config_hash(a) == config_hash(config_from_json(kSmall)));
  CHECK(config_hash(a) == config_hash(config_from_json(config_to_json(a))));
  auto b = a;
  b.scenarios[0].spec->grid_response_factor = 1.31;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.cotrain.max_loops = 6;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.manifold.dim = 3;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("feature columns and the Snort guard") {
  CHECK(feature_columns(FeatureSet::PureCyber, false).size() == 19);
  CHECK(feature_columns(FeatureSet::PurePhysical, false).size() == 9);
  CHECK(feature_columns(FeatureSet::CyberPhysical, false).size() == 28);
  const auto guarded = feature_columns(FeatureSet::CyberPhysical, true);
  CHECK(guarded.size() == 26);
  for (auto i : guarded) {
    CHECK(i != index_of(Column::SnortAlert));
    CHECK(i != index_of(Column::AlertType));
  }
  CHECK(feature_columns(FeatureSet::PurePhysical, true).size() == 9);
}

TEST_CASE("tables round-trip through CSV and compare") {
  Table t{"labels", "t", {"scenario", "classifier", "snort_f1", "window_f1"}, {{"a,b", "DT", "0.8000", "0.9500"}, {"x\"y", "RF", "0.5", "nan"}}};
  const auto dir = fs::temp_directory_path() / "cpfusion_table_test";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "labels.csv", std::ios::binary);
    out << t.csv();
  }
  const auto back = read_table_csv(dir / "labels.csv");
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
  fs::remove_all(dir);

  const auto c = compare(t, "labels");
  CHECK(c.header == std::vector<std::string>{"scenario", "classifier", "snort_f1", "window_f1", "delta"});
  CHECK(c.rows[0][4] == "0.1500");
  CHECK(c.rows[1][4] == "nan");
  CHECK(code_of([&] { compare(t, "colours"); }) == Errc::InvalidArgument);
  CHECK(code_of([&] { compare(t, "cotrain"); }) == Errc::ColumnNotFound);

  const auto text = t.text();
  CHECK(text.find("scenario  classifier") != std::string::npos);
}

TEST_CASE("a small pipeline is complete and deterministic") {
  const auto cfg = config_from_json(kSmall);
  const auto r = run_pipeline(cfg);
  for (const char* name : {"labels", "classifiers", "feature_sets", "feature_selection", "shapiro_ranking", "cotrain",
                           "cluster_sweep", "cluster_optimal", "cluster_robustness", "manifold"}) {
    CAPTURE(name);
    REQUIRE(r.find(name) != nullptr);
    CHECK_FALSE(r.find(name)->rows.empty());
  }
  // three metric blocks after the two key columns
  CHECK(r.find("feature_sets")->header.size() == 2 + 9);
  CHECK(r.find("labels")->rows.size() == 2);
  CHECK(r.find("cotrain")->rows.size() == 2);
  CHECK(r.find("cluster_sweep")->rows.size() == 3);
  CHECK(r.find("manifold")->rows.size() == 3);  // two embeddings and the raw baseline
  CHECK(r.artifacts.count("correlation_small.csv") == 1);
  CHECK(r.provenance.find(r.config_hash) != std::string::npos);

  const auto again = run_pipeline(cfg);
  REQUIRE(again.tables.size() == r.tables.size());
  for (std::size_t i = 0; i < r.tables.size(); ++i) CHECK(again.tables[i].csv() == r.tables[i].csv());
  CHECK(again.provenance == r.provenance);

  const auto dir = fs::temp_directory_path() / "cpfusion_report_test";
  fs::remove_all(dir);
  write_report(r, dir);
  CHECK(slurp(dir / "cotrain.csv") == r.find("cotrain")->csv());
  CHECK(fs::exists(dir / "summary.txt"));
  CHECK(fs::exists(dir / "provenance.json"));
  CHECK_FALSE(fs::exists(dir.parent_path() / ".cpfusion_report_test.staging"));
  fs::remove_all(dir);
}

TEST_CASE("failures name their stage") {
  auto cfg = config_from_json(kSmall);
  cfg.scenarios[0].spec->attack = false;  // one class only: nothing to train
  try {
    run_pipeline(cfg);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage ") != std::string::npos);
    CHECK(e.category() == ErrorCategory::Data);
  }
}

TEST_CASE("switched-off experiments emit no tables") {
  auto cfg = config_from_json(kSmall);
  cfg.supervised = false;
  cfg.feature_selection = false;
  cfg.cluster.enabled = false;
  cfg.manifold.enabled = false;
  const auto r = run_pipeline(cfg);
  REQUIRE(r.tables.size() == 1);
  CHECK(r.tables[0].name == "cotrain");
  CHECK(r.artifacts.empty());
  // the cotrain rows do not depend on which other experiments ran
  CHECK(r.tables[0].csv() == run_pipeline(config_from_json(kSmall)).find("cotrain")->csv());
  CHECK(config_hash(cfg) != config_hash(config_from_json(kSmall)));
}
