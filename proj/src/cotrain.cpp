#include "cpfusion/cotrain.hpp"

#include <algorithm>
#include <future>
#include <map>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cpfusion/schema.hpp"

namespace cpfusion::cotrain {

namespace {

struct Claim {
  std::string label;
  double confidence;
};

// Per class, the pool row with the highest probability for it (lowest row on
// ties), claimed under the row's argmax label.
std::map<std::size_t, Claim> claims_of(const Matrix& proba, const std::vector<std::string>& classes) {
  std::map<std::size_t, Claim> out;
  const auto labels = learn::argmax_labels(proba, classes);
  for (Eigen::Index c = 0; c < proba.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < proba.rows(); ++r)
      if (proba(r, c) > proba(best, c)) best = r;
    const auto row = static_cast<std::size_t>(best);
    out[row] = {labels[row], proba.row(best).maxCoeff()};
  }
  return out;
}

fusion::FeatureMatrix stack_rows(const fusion::FeatureMatrix& a, const fusion::FeatureMatrix& b) {
  fusion::FeatureMatrix out;
  out.columns = a.columns;
  out.values.resize(a.values.rows() + b.values.rows(), a.values.cols());
  out.values << a.values, b.values;
  out.ts_us = a.ts_us;
  out.ts_us.insert(out.ts_us.end(), b.ts_us.begin(), b.ts_us.end());
  if (out.ts_us.size() != out.rows()) out.ts_us.clear();
  return out;
}

}  // namespace

ViewSplit default_split() {
  ViewSplit s;
  for (std::size_t i = 0; i < kNumColumns; ++i) {
    auto& view = i < kNumCyberColumns ? s.cyber : s.physical;
    view.emplace_back(column_spec(i).name);
  }
  return s;
}

ViewSplit split_with_cyber(const std::vector<std::string>& all, const std::vector<std::string>& cyber) {
  const std::set<std::string> in_all(all.begin(), all.end());
  for (const auto& c : cyber)
    if (!in_all.count(c)) throw Error(Errc::ColumnNotFound, fmt::format("cyber view column '{}'", c));
  const std::set<std::string> chosen(cyber.begin(), cyber.end());
  ViewSplit s;
  s.cyber = cyber;
  for (const auto& c : all)
    if (!chosen.count(c)) s.physical.push_back(c);
  return s;
}

Views split_views(const fusion::FeatureMatrix& x, const ViewSplit& split) {
  std::vector<std::size_t> ci, pi;
  for (const auto& n : split.cyber) ci.push_back(x.column_index(n));
  for (const auto& n : split.physical) pi.push_back(x.column_index(n));
  std::vector<char> seen(x.cols(), 0);
  for (auto i : ci) ++seen[i];
  for (auto i : pi) {
    if (seen[i]) throw Error(Errc::InvalidArgument, fmt::format("column '{}' is in both views", x.columns[i].name));
    ++seen[i];
  }
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i] != 1) throw Error(Errc::InvalidArgument, fmt::format("column '{}' is not in exactly one view", x.columns[i].name));
  }
  return {x.select_columns(ci), x.select_columns(pi)};
}

CoModel cotrain_fit(const learn::ClassifierSpec& base, const fusion::FeatureMatrix& labeled_x,
                    const std::vector<std::string>& labeled_y, const fusion::FeatureMatrix& unlabeled,
                    const ViewSplit& split, int max_loops) {
  if (labeled_x.rows() != labeled_y.size()) throw Error(Errc::LengthMismatch, "cotrain: labeled rows and labels differ");
  if (std::set<std::string>(labeled_y.begin(), labeled_y.end()).size() < 2) {
    throw Error(Errc::SingleClassSeed, "cotrain: labeled seed set has fewer than two classes");
  }
  const auto seed_views = split_views(labeled_x, split);
  const auto pool_views = split_views(unlabeled, split);
  // labeled rows first, then the pool; `labeled` indexes into the stack
  const auto all_cyber = stack_rows(seed_views.cyber, pool_views.cyber);
  const auto all_phys = stack_rows(seed_views.physical, pool_views.physical);
  std::vector<std::size_t> labeled(labeled_x.rows());
  for (std::size_t i = 0; i < labeled.size(); ++i) labeled[i] = i;
  std::vector<std::string> y = labeled_y;
  std::vector<std::size_t> pool(unlabeled.rows());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = labeled_x.rows() + i;

  CoModel m;
  m.split = split;
  auto fit_both = [&] {
    auto cy = std::async(std::launch::async, [&] { return learn::train(base, all_cyber.select_rows(labeled), y); });
    auto ph = learn::train(base, all_phys.select_rows(labeled), y);
    m.cyber = cy.get();
    m.physical = std::move(ph);
  };

  for (int loop = 0; loop < max_loops && !pool.empty(); ++loop) {
    fit_both();
    const auto pc = learn::predict_proba(m.cyber, all_cyber.select_rows(pool));
    const auto pp = learn::predict_proba(m.physical, all_phys.select_rows(pool));
    auto chosen = claims_of(pc, m.cyber.classes);
    LoopRecord rec;
    rec.pool_before = pool.size();
    for (auto& [row, claim] : claims_of(pp, m.physical.classes)) {
      auto it = chosen.find(row);
      if (it == chosen.end()) {
        chosen.emplace(row, claim);
      } else if (it->second.label != claim.label) {
        ++rec.conflicts;
        if (claim.confidence > it->second.confidence) it->second = claim;
      }
    }
    rec.added = chosen.size();
    // chosen is keyed by pool position, so rows join in ascending order
    std::vector<std::size_t> keep;
    std::size_t pos = 0;
    for (const auto& [row, claim] : chosen) {
      for (; pos < row; ++pos) keep.push_back(pool[pos]);
      labeled.push_back(pool[row]);
      y.push_back(claim.label);
      pos = row + 1;
    }
    for (; pos < pool.size(); ++pos) keep.push_back(pool[pos]);
    pool = std::move(keep);
    m.log.push_back(rec);
    spdlog::debug("cotrain loop {}: pool {} -> {}, {} conflicts", loop, rec.pool_before, pool.size(), rec.conflicts);
  }
  fit_both();
  m.classes = m.cyber.classes;
  if (m.physical.classes != m.classes) throw Error(Errc::InvalidArgument, "cotrain: views disagree on the class list");
  return m;
}

Prediction fuse_scores(const Matrix& p_cyber, const Matrix& p_physical, const std::vector<std::string>& classes) {
  if (p_cyber.rows() != p_physical.rows() || p_cyber.cols() != p_physical.cols() ||
      p_cyber.cols() != static_cast<Eigen::Index>(classes.size())) {
    throw Error(Errc::ShapeMismatch, "fuse_scores: probability shapes differ");
  }
  Prediction out;
  out.proba = p_cyber + p_physical;
  for (Eigen::Index i = 0; i < out.proba.rows(); ++i) {
    const double s = out.proba.row(i).sum();
    out.proba.row(i) = s > 0 ? Eigen::RowVectorXd(out.proba.row(i) / s)
                             : Eigen::RowVectorXd::Constant(out.proba.cols(), 1.0 / static_cast<double>(out.proba.cols()));
  }
  out.labels = learn::argmax_labels(out.proba, classes);
  return out;
}

Prediction cotrain_predict(const CoModel& m, const fusion::FeatureMatrix& x) {
  std::vector<std::size_t> ci, pi;
  try {
    for (const auto& n : m.split.cyber) ci.push_back(x.column_index(n));
    for (const auto& n : m.split.physical) pi.push_back(x.column_index(n));
  } catch (const Error& e) {
    throw Error(Errc::ColumnMismatch, fmt::format("cotrain_predict: {}", e.what()));
  }
  return fuse_scores(learn::predict_proba(m.cyber, x.select_columns(ci)),
                     learn::predict_proba(m.physical, x.select_columns(pi)), m.classes);
}

learn::Split labeled_unlabeled_split(const std::vector<std::string>& y, int labeled_parts, int unlabeled_parts,
                                     std::uint64_t seed) {
  if (labeled_parts <= 0 || unlabeled_parts < 0) throw Error(Errc::InvalidArgument, "cotrain: bad labeled:unlabeled ratio");
  if (unlabeled_parts == 0) throw Error(Errc::EmptyUnlabeled, "cotrain: ratio leaves no unlabeled rows");
  const double frac = static_cast<double>(unlabeled_parts) / static_cast<double>(labeled_parts + unlabeled_parts);
  auto s = learn::stratified_split(y, frac, seed);
  if (s.test.empty()) throw Error(Errc::EmptyUnlabeled, "cotrain: no row left unlabeled");
  return s;  // train = labeled, test = unlabeled
}

}  // namespace cpfusion::cotrain
