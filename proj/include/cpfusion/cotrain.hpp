#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cpfusion/common.hpp"
#include "cpfusion/fusion.hpp"
#include "cpfusion/learn.hpp"

// Two-view co-training over cyber and physical feature columns, with
// probability-sum fusion at prediction time.
namespace cpfusion::cotrain {

struct ViewSplit {
  std::vector<std::string> cyber;
  std::vector<std::string> physical;
};

/// The 19 cyber/security and 9 physical columns of the fused schema.
ViewSplit default_split();

/// `cyber` as given, every other column of `all` (in order) as physical.
/// Throws ColumnNotFound for a cyber name missing from `all`.
ViewSplit split_with_cyber(const std::vector<std::string>& all, const std::vector<std::string>& cyber);

struct Views {
  fusion::FeatureMatrix cyber;
  fusion::FeatureMatrix physical;
};

/// Column projection, row order preserved. Throws ColumnNotFound when a split
/// column is absent, InvalidArgument when the views overlap or leave a column
/// of `x` uncovered.
Views split_views(const fusion::FeatureMatrix& x, const ViewSplit& split);

struct LoopRecord {
  std::size_t pool_before = 0;
  std::size_t added = 0;      // distinct records moved to the labeled set
  std::size_t conflicts = 0;  // records both views claimed with different labels
};

struct CoModel {
  learn::Model cyber;
  learn::Model physical;
  ViewSplit split;
  std::vector<std::string> classes;  // shared by both models, sorted
  std::vector<LoopRecord> log;       // one entry per loop
};

/// Each loop trains both views on the labeled set; each view then claims, per
/// class, the pool record with the highest probability for that class, under
/// its own argmax label (ties: lowest pool row). Claimed records join the
/// labeled set of both views. A record claimed by both views with different
/// labels takes the more confident label, the cyber one on a tie. Stops when
/// the pool is empty or after `max_loops`; the returned models are trained on
/// the final labeled set. An empty pool runs zero loops.
/// Throws SingleClassSeed when `labeled_y` has fewer than two classes.
CoModel cotrain_fit(const learn::ClassifierSpec& base, const fusion::FeatureMatrix& labeled_x,
                    const std::vector<std::string>& labeled_y, const fusion::FeatureMatrix& unlabeled,
                    const ViewSplit& split, int max_loops = 50);

struct Prediction {
  std::vector<std::string> labels;
  Matrix proba;  // rows sum to 1, columns in class order
};

/// (p_cyber + p_physical) renormalized per row; argmax with ties to the
/// earlier class.
Prediction fuse_scores(const Matrix& p_cyber, const Matrix& p_physical, const std::vector<std::string>& classes);

/// Throws ColumnMismatch when `x` lacks a column of either view.
Prediction cotrain_predict(const CoModel& m, const fusion::FeatureMatrix& x);

/// Random labeled/unlabeled partition of row indices in the ratio
/// labeled_parts : unlabeled_parts, stratified by class. Throws
/// EmptyUnlabeled when no row is left unlabeled.
learn::Split labeled_unlabeled_split(const std::vector<std::string>& y, int labeled_parts, int unlabeled_parts,
                                     std::uint64_t seed);

}  // namespace cpfusion::cotrain
