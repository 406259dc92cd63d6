#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cpfusion/cluster.hpp"
#include "cpfusion/common.hpp"
#include "cpfusion/fusion.hpp"
#include "cpfusion/learn.hpp"
#include "cpfusion/manifold.hpp"
#include "cpfusion/scenario.hpp"

// End-to-end orchestration: scenarios -> fused, labeled feature matrices ->
// the configured experiment matrix -> report tables.
namespace cpfusion::pipeline {

inline constexpr std::string_view kVersion = "1.0.0";

/// A scenario is either generated from a spec or read from a bundle directory.
struct ScenarioSource {
  std::string name;
  std::optional<scenario::ScenarioSpec> spec;
  std::filesystem::path bundle;
};

enum class LabelChoice { AttackWindow, Snort, Both };
enum class FeatureSet { PureCyber, PurePhysical, CyberPhysical };
std::string_view feature_set_name(FeatureSet set) noexcept;
std::optional<FeatureSet> parse_feature_set(std::string_view name) noexcept;

struct ModelEntry {
  learn::Algo algo = learn::Algo::DT;
  learn::Hyperparams params;
  learn::Grid grid;  // empty: no search
};

struct ClusterConfig {
  bool enabled = true;
  std::vector<cluster::Algo> algos{std::begin(cluster::kAllAlgos), std::end(cluster::kAllAlgos)};
  int k_min = 2;
  int k_max = 10;
  std::size_t max_rows = 2000;
  int robustness_k = 3;
};

struct ManifoldConfig {
  bool enabled = true;
  std::vector<manifold::Algo> algos{std::begin(manifold::kAllAlgos), std::end(manifold::kAllAlgos)};
  int dim = 2;
  std::size_t max_rows = 600;
  std::vector<learn::Algo> models{learn::Algo::SVC, learn::Algo::KNN, learn::Algo::DT, learn::Algo::RF,
                                  learn::Algo::GNB, learn::Algo::BNB, learn::Algo::MLP};
};

struct CotrainConfig {
  bool enabled = true;
  std::vector<learn::Algo> bases{learn::Algo::LR, learn::Algo::SVC, learn::Algo::DT, learn::Algo::RF,
                                 learn::Algo::GNB, learn::Algo::BNB, learn::Algo::MLP};
  int labeled_parts = 1;
  int unlabeled_parts = 2;
  int max_loops = 50;
  std::vector<std::string> cyber_columns;  // empty: the 19 cyber/security columns
  std::vector<std::uint64_t> seeds;        // empty: the global seed
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::vector<ScenarioSource> scenarios;
  fusion::PhysicalMode physical_mode = fusion::PhysicalMode::Drop;
  fusion::ScaleMethod scale = fusion::ScaleMethod::MinMax;
  LabelChoice label_mode = LabelChoice::Both;
  double test_fraction = 0.3;
  double pca_threshold = 0.95;
  double shapiro_cutoff = 0.7;
  std::vector<ModelEntry> models;
  std::size_t grid_folds = 5;
  std::vector<FeatureSet> feature_sets{FeatureSet::PureCyber, FeatureSet::PurePhysical, FeatureSet::CyberPhysical};
  /// The labels, classifiers and feature_sets tables.
  bool supervised = true;
  bool feature_selection = true;
  ClusterConfig cluster;
  ManifoldConfig manifold;
  CotrainConfig cotrain;
};

/// UC1..UC4 generated with their default specs, every classifier, every
/// experiment enabled.
PipelineConfig default_config();

/// Keys absent from the text keep their defaults; unknown keys, bad values and
/// missing bundle directories throw Error{ConfigError}. Relative bundle paths
/// resolve against `base_dir`.
PipelineConfig config_from_json(std::string_view text, const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path);

/// Canonical text of every field; the config hash is FNV-1a over it.
std::string config_to_json(const PipelineConfig& config);
std::string config_hash(const PipelineConfig& config);

// ------------------------------------------------------------------ datasets

struct Dataset {
  std::string name;
  scenario::ScenarioSpec spec;             // from the generator or the bundle manifest
  std::vector<fusion::FusedRecord> table;  // imputed
  fusion::FeatureMatrix x;                 // encoded and scaled
  std::vector<std::string> window_labels;
  std::vector<std::string> snort_labels;
};

/// Fusion of one scenario, then imputation, encoding, scaling and labels.
Dataset prepare_dataset(const ScenarioSource& source, fusion::PhysicalMode mode, fusion::ScaleMethod scale);

/// Column indices of a feature set. With `snort_guard`, the two alert
/// columns are left out: they are the Snort label itself.
std::vector<std::size_t> feature_columns(FeatureSet set, bool snort_guard);

// -------------------------------------------------------------------- report

struct Table {
  std::string name;  // file stem
  std::string title;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string csv() const;
  /// Space-aligned columns under the title.
  std::string text() const;
};

struct Report {
  std::vector<Table> tables;
  /// Extra CSV files (correlation matrices), keyed by file name.
  std::map<std::string, std::string> artifacts;
  std::string config_hash;
  std::string provenance;  // JSON: hash, versions, seeds; no clock values

  const Table* find(std::string_view name) const;
  /// Every table's text form, then the provenance block.
  std::string summary() const;
};

/// Errors carry the failing stage in their message and keep their code.
Report run_pipeline(const PipelineConfig& config);

/// Writes <name>.csv per table, the artifacts, summary.txt and
/// provenance.json. Files are staged in a sibling directory and renamed, so
/// a failure leaves no partial report.
void write_report(const Report& report, const std::filesystem::path& dir);

/// Parses a table written by Table::csv.
Table read_table_csv(const std::filesystem::path& path);

/// Two-column comparison of a report table: for `labels`, F1 under Snort and
/// attack-window labels and their difference; for `feature_sets`, cyber
/// physical minus pure cyber; for `cotrain`, co-training minus supervised.
/// Throws Error{InvalidArgument} for another name.
Table compare(const Table& source, std::string_view what);

}  // namespace cpfusion::pipeline
