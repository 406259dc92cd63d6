#include <algorithm>
#include <cmath>
#include <numeric>

#include "learn_detail.hpp"

namespace cpfusion::learn::detail {

namespace {

constexpr double kGainEps = 1e-12;

struct TreeParams {
  int max_depth = 0;  // 0: unlimited
  int min_samples_split = 2;
  int min_samples_leaf = 1;
  int max_features = 0;  // 0: every feature
};

struct Node {
  int feature = -1;  // -1: leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::vector<double> proba;
};

double gini(const std::vector<double>& counts, double n) {
  if (n <= 0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += c * c;
  return 1.0 - s / (n * n);
}

class Tree {
 public:
  std::vector<Node> nodes;

  // Splits go left on x <= threshold, where the threshold is the largest
  // left-side training value; this keeps predictions invariant under
  // strictly increasing feature transforms.
  void fit(const Matrix& x, const std::vector<int>& y, int n_classes, std::vector<std::size_t> rows,
           const TreeParams& p, Rng* feature_rng) {
    x_ = &x;
    y_ = &y;
    k_ = n_classes;
    p_ = p;
    rng_ = feature_rng;
    nodes.clear();
    rows_ = std::move(rows);
    build(0, rows_.size(), 0);
  }

  void predict_into(const Matrix& x, Matrix& acc) const {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      int n = 0;
      while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
        const auto& node = nodes[static_cast<std::size_t>(n)];
        n = x(i, node.feature) <= node.threshold ? node.left : node.right;
      }
      const auto& pr = nodes[static_cast<std::size_t>(n)].proba;
      for (std::size_t c = 0; c < pr.size(); ++c) acc(i, static_cast<Eigen::Index>(c)) += pr[c];
    }
  }

  json save() const {
    json feat = json::array(), thr = json::array(), left = json::array(), right = json::array(), proba = json::array();
    for (const auto& n : nodes) {
      feat.push_back(n.feature);
      thr.push_back(n.threshold);
      left.push_back(n.left);
      right.push_back(n.right);
      proba.push_back(n.proba);
    }
    return {{"feature", feat}, {"threshold", thr}, {"left", left}, {"right", right}, {"proba", proba}};
  }

  void load(const json& j) {
    const auto feat = j.at("feature").get<std::vector<int>>();
    const auto thr = j.at("threshold").get<std::vector<double>>();
    const auto left = j.at("left").get<std::vector<int>>();
    const auto right = j.at("right").get<std::vector<int>>();
    const auto proba = j.at("proba").get<std::vector<std::vector<double>>>();
    nodes.resize(feat.size());
    for (std::size_t i = 0; i < feat.size(); ++i) nodes[i] = {feat[i], thr[i], left[i], right[i], proba[i]};
  }

 private:
  const Matrix* x_ = nullptr;
  const std::vector<int>* y_ = nullptr;
  int k_ = 2;
  TreeParams p_;
  Rng* rng_ = nullptr;
  std::vector<std::size_t> rows_;

  int build(std::size_t b, std::size_t e, int depth) {
    const auto n = static_cast<double>(e - b);
    std::vector<double> counts(static_cast<std::size_t>(k_), 0.0);
    for (std::size_t i = b; i < e; ++i) counts[static_cast<std::size_t>((*y_)[rows_[i]])] += 1.0;
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes.back().proba.resize(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) nodes.back().proba[c] = counts[c] / n;

    const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0; }) <= 1;
    if (pure || e - b < static_cast<std::size_t>(p_.min_samples_split) ||
        (p_.max_depth > 0 && depth >= p_.max_depth)) {
      return id;
    }

    int best_f = -1;
    double best_t = 0.0;
    double best_gain = -1.0;
    const double parent = gini(counts, n);
    std::vector<std::pair<double, int>> vals(e - b);
    std::vector<double> left(counts.size()), right(counts.size());
    for (const int f : candidate_features()) {
      for (std::size_t i = b; i < e; ++i) vals[i - b] = {(*x_)(static_cast<Eigen::Index>(rows_[i]), f), (*y_)[rows_[i]]};
      std::sort(vals.begin(), vals.end());
      std::fill(left.begin(), left.end(), 0.0);
      right = counts;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        left[static_cast<std::size_t>(vals[i].second)] += 1.0;
        right[static_cast<std::size_t>(vals[i].second)] -= 1.0;
        if (vals[i].first == vals[i + 1].first) continue;
        const auto nl = static_cast<double>(i + 1);
        const double nr = n - nl;
        if (nl < p_.min_samples_leaf || nr < p_.min_samples_leaf) continue;
        const double gain = parent - (nl / n) * gini(left, nl) - (nr / n) * gini(right, nr);
        if (best_f < 0 || gain > best_gain + kGainEps) {
          best_f = f;
          best_t = vals[i].first;
          best_gain = gain;
        }
      }
    }
    if (best_f < 0) return id;

    const auto mid = std::stable_partition(rows_.begin() + static_cast<std::ptrdiff_t>(b),
                                           rows_.begin() + static_cast<std::ptrdiff_t>(e), [&](std::size_t r) {
                                             return (*x_)(static_cast<Eigen::Index>(r), best_f) <= best_t;
                                           });
    const auto m = static_cast<std::size_t>(mid - rows_.begin());
    const int l = build(b, m, depth + 1);
    const int r = build(m, e, depth + 1);
    auto& node = nodes[static_cast<std::size_t>(id)];
    node.feature = best_f;
    node.threshold = best_t;
    node.left = l;
    node.right = r;
    return id;
  }

  std::vector<int> candidate_features() {
    const int p = static_cast<int>(x_->cols());
    std::vector<int> f(static_cast<std::size_t>(p));
    std::iota(f.begin(), f.end(), 0);
    if (rng_ && p_.max_features > 0 && p_.max_features < p) {
      // partial Fisher-Yates, then ascending so tie-breaks match a full scan
      for (int i = 0; i < p_.max_features; ++i) {
        const auto j = i + static_cast<int>(rng_->below(static_cast<std::uint64_t>(p - i)));
        std::swap(f[static_cast<std::size_t>(i)], f[static_cast<std::size_t>(j)]);
      }
      f.resize(static_cast<std::size_t>(p_.max_features));
      std::sort(f.begin(), f.end());
    }
    return f;
  }
};

TreeParams tree_params(const Hyperparams& hp) {
  TreeParams p;
  p.max_depth = static_cast<int>(hp.at("max_depth"));
  p.min_samples_split = static_cast<int>(hp.at("min_samples_split"));
  p.min_samples_leaf = static_cast<int>(hp.at("min_samples_leaf"));
  return p;
}

class DecisionTree final : public Classifier {
 public:
  explicit DecisionTree(const Hyperparams& hp) : params_(tree_params(hp)) {}

  void fit(const Matrix& x, const std::vector<int>& y, int n_classes) override {
    k_ = n_classes;
    std::vector<std::size_t> rows(y.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    tree_.fit(x, y, n_classes, std::move(rows), params_, nullptr);
  }

  Matrix predict_proba(const Matrix& x) const override {
    Matrix p = Matrix::Zero(x.rows(), k_);
    tree_.predict_into(x, p);
    return p;
  }

  json save() const override { return {{"n_classes", k_}, {"tree", tree_.save()}}; }
  void load(const json& j) override {
    k_ = j.at("n_classes").get<int>();
    tree_.load(j.at("tree"));
  }

 private:
  TreeParams params_;
  int k_ = 2;
  Tree tree_;
};

class RandomForest final : public Classifier {
 public:
  RandomForest(const Hyperparams& hp, std::uint64_t seed)
      : params_(tree_params(hp)),
        n_trees_(static_cast<int>(hp.at("n_estimators"))),
        max_features_(static_cast<int>(hp.at("max_features"))),
        bootstrap_(hp.at("bootstrap") != 0.0),
        seed_(seed) {}

  void fit(const Matrix& x, const std::vector<int>& y, int n_classes) override {
    k_ = n_classes;
    const auto n = y.size();
    TreeParams p = params_;
    const int cols = static_cast<int>(x.cols());
    p.max_features = max_features_ > 0 ? std::min(max_features_, cols)
                                       : std::max(1, static_cast<int>(std::sqrt(static_cast<double>(cols))));
    trees_.assign(static_cast<std::size_t>(n_trees_), Tree{});
    for (int t = 0; t < n_trees_; ++t) {
      Rng rng(mix_seed(seed_, static_cast<std::uint64_t>(t)));
      std::vector<std::size_t> rows(n);
      if (bootstrap_) {
        for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
      } else {
        std::iota(rows.begin(), rows.end(), std::size_t{0});
      }
      trees_[static_cast<std::size_t>(t)].fit(x, y, n_classes, std::move(rows), p, &rng);
    }
  }

  Matrix predict_proba(const Matrix& x) const override {
    Matrix p = Matrix::Zero(x.rows(), k_);
    for (const auto& t : trees_) t.predict_into(x, p);
    return p / static_cast<double>(trees_.size());
  }

  json save() const override {
    json trees = json::array();
    for (const auto& t : trees_) trees.push_back(t.save());
    return {{"n_classes", k_}, {"trees", trees}};
  }

  void load(const json& j) override {
    k_ = j.at("n_classes").get<int>();
    trees_.clear();
    for (const auto& t : j.at("trees")) {
      trees_.emplace_back();
      trees_.back().load(t);
    }
  }

 private:
  TreeParams params_;
  int n_trees_;
  int max_features_;
  bool bootstrap_;
  std::uint64_t seed_;
  int k_ = 2;
  std::vector<Tree> trees_;
};

}  // namespace

std::unique_ptr<Classifier> make_tree(const Hyperparams& params, std::uint64_t) {
  return std::make_unique<DecisionTree>(params);
}

std::unique_ptr<Classifier> make_forest(const Hyperparams& params, std::uint64_t seed) {
  return std::make_unique<RandomForest>(params, seed);
}

}  // namespace cpfusion::learn::detail
