#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>

#include "cpfusion/learn.hpp"
#include "cpfusion/rng.hpp"

using namespace cpfusion;
using namespace cpfusion::learn;

namespace {

struct Data {
  Matrix x;
  std::vector<std::string> y;
};

// Two unit-variance blobs in 2-D, centers (0,0) and (sep, sep).
Data blobs(std::uint64_t seed, int per_class, double sep) {
  Rng rng(seed);
  Data d;
  d.x.resize(2 * per_class, 2);
  for (int i = 0; i < 2 * per_class; ++i) {
    const bool b = i % 2 == 1;
    d.x(i, 0) = rng.normal() + (b ? sep : 0.0);
    d.x(i, 1) = rng.normal() + (b ? sep : 0.0);
    d.y.push_back(b ? "attacked" : "normal");
  }
  return d;
}

// Four jittered corners labeled by XOR of the corner coordinates.
Data xor_clouds(std::uint64_t seed, int per_corner, double jitter) {
  Rng rng(seed);
  Data d;
  d.x.resize(4 * per_corner, 2);
  for (int i = 0; i < 4 * per_corner; ++i) {
    const int a = i % 2, b = (i / 2) % 2;
    d.x(i, 0) = a + jitter * rng.uniform(-1, 1);
    d.x(i, 1) = b + jitter * rng.uniform(-1, 1);
    d.y.push_back((a ^ b) ? "one" : "zero");
  }
  return d;
}

fusion::FeatureMatrix named(const Matrix& m) {
  fusion::FeatureMatrix f;
  f.values = m;
  for (Eigen::Index j = 0; j < m.cols(); ++j) f.columns.push_back({"f" + std::to_string(j), ColumnKind::Numeric, {}});
  return f;
}

}  // namespace

TEST_CASE("every classifier fits separable blobs") {
  const auto d = blobs(1, 100, 6.0);
  for (auto algo : kAllAlgos) {
    CAPTURE(algo_name(algo));
    const auto m = train(ClassifierSpec(algo, {}, 3), d.x, d.y);
    const auto p = predict_proba(m, d.x);
    CHECK((p.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-9);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(evaluate(d.y, predict(m, d.x)).weighted_f1 >= 0.95);
    CHECK(m.classes == std::vector<std::string>{"attacked", "normal"});
  }
}

TEST_CASE("decision tree fits XOR at depth 2") {
  Matrix x(4, 2);
  x << 0, 0, 0, 1, 1, 0, 1, 1;
  const std::vector<std::string> y{"a", "b", "b", "a"};
  const auto m = train(ClassifierSpec(Algo::DT), x, y);
  CHECK(predict(m, x) == y);
  const auto stump = train(ClassifierSpec(Algo::DT, {{"max_depth", 1}}), x, y);
  CHECK(predict(stump, x) != y);
  CHECK(train(ClassifierSpec(Algo::DT, {{"max_depth", 2}}), x, y).impl != nullptr);
  CHECK(predict(train(ClassifierSpec(Algo::DT, {{"max_depth", 2}}), x, y), x) == y);
}

TEST_CASE("gaussian NB at +-3") {
  auto gen = [](std::uint64_t seed) {
    Rng rng(seed);
    Data d;
    d.x.resize(400, 1);
    for (int i = 0; i < 400; ++i) {
      const bool b = i % 2;
      d.x(i, 0) = rng.normal() + (b ? 3.0 : -3.0);
      d.y.push_back(b ? "attacked" : "normal");
    }
    return d;
  };
  const auto tr = gen(10), te = gen(11);
  const auto m = train(ClassifierSpec(Algo::GNB), tr.x, tr.y);
  CHECK(evaluate(te.y, predict(m, te.x)).weighted_f1 >= 0.95);
}

TEST_CASE("knn k=1 returns its own label with certainty") {
  const auto d = blobs(4, 20, 1.0);
  const auto m = train(ClassifierSpec(Algo::KNN, {{"k", 1}}), d.x, d.y);
  const auto p = predict_proba(m, d.x);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const int c = d.y[static_cast<std::size_t>(i)] == "attacked" ? 0 : 1;
    CHECK(p(i, c) == 1.0);
  }
}

TEST_CASE("svc probabilities are monotone along the margin") {
  const auto d = blobs(5, 100, 2.5);
  const auto m = train(ClassifierSpec(Algo::SVC, {}, 1), d.x, d.y);
  Matrix line(101, 2);
  for (int i = 0; i <= 100; ++i) line.row(i) << -4 + 0.1 * i, -4 + 0.1 * i;
  const auto p = predict_proba(m, line);
  int up = 0, down = 0;
  for (int i = 1; i <= 100; ++i) {
    up += p(i, 1) >= p(i - 1, 1);
    down += p(i, 1) <= p(i - 1, 1);
  }
  CHECK((up == 100 || down == 100));
  // class order: "attacked" lies toward (sep, sep)
  CHECK(p(100, 0) > p(0, 0));
}

TEST_CASE("argmax tie goes to the first class") {
  Matrix p(1, 2);
  p << 0.5, 0.5;
  CHECK(argmax_labels(p, {"attacked", "normal"}) == std::vector<std::string>{"attacked"});
}

TEST_CASE("evaluate: worked examples") {
  std::vector<std::string> t, p;
  auto add = [&](const char* a, const char* b, int n) {
    for (int i = 0; i < n; ++i) {
      t.push_back(a);
      p.push_back(b);
    }
  };
  add("attacked", "attacked", 40);  // TP
  add("normal", "attacked", 10);    // FP
  add("attacked", "normal", 20);    // FN
  add("normal", "normal", 30);      // TN
  const auto m = evaluate(t, p);
  CHECK(m.precision[0] == doctest::Approx(0.8));
  CHECK(m.recall[0] == doctest::Approx(2.0 / 3.0));
  CHECK(m.f1[0] == doctest::Approx(16.0 / 22.0));
  CHECK(m.confusion[0][0] == 40);
  CHECK(m.confusion[1][0] == 10);

  const auto same = evaluate(t, t);
  CHECK(same.weighted_f1 == 1.0);
  CHECK(same.weighted_precision == 1.0);
  CHECK(same.weighted_recall == 1.0);

  std::vector<std::string> truth{"a", "a", "b", "b"}, all_a(4, "a");
  const auto one = evaluate(truth, all_a);
  CHECK(one.recall[0] == 1.0);
  CHECK(one.recall[1] == 0.0);
  CHECK(one.precision[1] == 0.0);
  CHECK(one.weighted_recall == 0.5);

  CHECK_THROWS_AS(evaluate(truth, {"a"}), Error);
}

TEST_CASE("weighted F1 matches a brute-force count") {
  Rng rng(12);
  const std::vector<std::string> names{"x", "y", "z"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> t(60), p(60);
    for (int i = 0; i < 60; ++i) {
      t[i] = names[rng.below(3)];
      p[i] = names[rng.below(3)];
    }
    const auto m = evaluate(t, p);
    double wf = 0;
    double lo = 1, hi = 0;
    for (const auto& c : names) {
      double tp = 0, fp = 0, fn = 0, sup = 0;
      for (int i = 0; i < 60; ++i) {
        tp += t[i] == c && p[i] == c;
        fp += t[i] != c && p[i] == c;
        fn += t[i] == c && p[i] != c;
        sup += t[i] == c;
      }
      const double pr = tp + fp > 0 ? tp / (tp + fp) : 0;
      const double rc = tp + fn > 0 ? tp / (tp + fn) : 0;
      const double f = pr + rc > 0 ? 2 * pr * rc / (pr + rc) : 0;
      wf += f * sup / 60.0;
      if (sup > 0) {
        lo = std::min(lo, f);
        hi = std::max(hi, f);
      }
    }
    CHECK(m.weighted_f1 == doctest::Approx(wf).epsilon(1e-12));
    CHECK(m.weighted_f1 >= lo - 1e-12);
    CHECK(m.weighted_f1 <= hi + 1e-12);
  }
}

TEST_CASE("tree models are invariant under monotone transforms") {
  const auto d = blobs(6, 150, 1.5);
  Matrix warped = d.x;
  warped.col(0) = d.x.col(0).array().exp().matrix();
  warped.col(1) = d.x.col(1).array().cube().matrix() * 3.0 + Matrix::Constant(d.x.rows(), 1, 7.0);
  Rng rng(2);
  Matrix probe(200, 2);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = rng.uniform(-3, 4.5);
  Matrix probe_w = probe;
  probe_w.col(0) = probe.col(0).array().exp().matrix();
  probe_w.col(1) = probe.col(1).array().cube().matrix() * 3.0 + Matrix::Constant(probe.rows(), 1, 7.0);
  for (auto algo : {Algo::DT, Algo::RF}) {
    const ClassifierSpec spec(algo, {{algo == Algo::RF ? "n_estimators" : "max_depth", algo == Algo::RF ? 25 : 0}}, 9);
    const auto a = train(spec, d.x, d.y);
    const auto b = train(spec, warped, d.y);
    CHECK(predict(a, probe) == predict(b, probe_w));
    CHECK(predict_proba(a, probe) == predict_proba(b, probe_w));
  }
}

TEST_CASE("single-tree forest without bagging equals the tree") {
  const auto d = blobs(7, 100, 1.0);
  const auto dt = train(ClassifierSpec(Algo::DT), d.x, d.y);
  const auto rf = train(ClassifierSpec(Algo::RF, {{"n_estimators", 1}, {"bootstrap", 0}, {"max_features", 2}}, 4),
                        d.x, d.y);
  Rng rng(3);
  Matrix probe(300, 2);
  for (Eigen::Index i = 0; i < probe.size(); ++i) probe.data()[i] = rng.uniform(-3, 4);
  CHECK(predict_proba(dt, probe) == predict_proba(rf, probe));
}

TEST_CASE("determinism and persistence") {
  const auto d = blobs(8, 60, 2.0);
  const auto f = named(d.x);
  for (auto algo : kAllAlgos) {
    CAPTURE(algo_name(algo));
    const ClassifierSpec spec(algo, {}, 77);
    const auto a = train(spec, f, d.y);
    const auto b = train(spec, f, d.y);
    CHECK(predict_proba(a, f) == predict_proba(b, f));
    const auto text = model_to_json(a);
    const auto back = model_from_json(text);
    CHECK(back.classes == a.classes);
    CHECK(back.fingerprint == a.fingerprint);
    CHECK(predict_proba(back, f) == predict_proba(a, f));
    CHECK(model_to_json(back) == text);
  }
  const auto dir = std::filesystem::temp_directory_path() / "cpfusion_test_learn";
  std::filesystem::create_directories(dir);
  const auto m = train(ClassifierSpec(Algo::RF, {{"n_estimators", 5}}, 1), f, d.y);
  save_model(m, dir / "rf.json");
  CHECK(predict(load_model(dir / "rf.json"), f) == predict(m, f));
  CHECK_THROWS_AS(model_from_json("{\"format\":\"other\"}"), Error);
}

TEST_CASE("fingerprint guards prediction") {
  const auto d = blobs(9, 30, 3.0);
  auto f = named(d.x);
  const auto m = train(ClassifierSpec(Algo::GNB), f, d.y);
  f.columns[1].name = "renamed";
  try {
    predict(m, f);
    FAIL("expected ColumnMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::ColumnMismatch);
  }
  CHECK_THROWS_AS(predict(m, Matrix(3, 3)), Error);
}

TEST_CASE("training preconditions") {
  CHECK_THROWS_AS(ClassifierSpec(Algo::DT, {{"n_estimators", 3}}), Error);
  CHECK_THROWS_AS(ClassifierSpec(Algo::KNN, {{"k", 0}}), Error);
  CHECK_THROWS_AS(ClassifierSpec(Algo::KNN, {{"k", 1.5}}), Error);
  Matrix x(3, 1);
  x << 1, 2, 3;
  try {
    train(ClassifierSpec(Algo::DT), x, {"a", "a", "a"});
    FAIL("expected SingleClassTraining");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::SingleClassTraining);
  }
  x(1, 0) = std::nan("");
  try {
    train(ClassifierSpec(Algo::DT), x, {"a", "b", "a"});
    FAIL("expected NonFiniteFeature");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::NonFiniteFeature);
  }
  CHECK_THROWS_AS(train(ClassifierSpec(Algo::DT), x, {"a", "b"}), Error);
}

TEST_CASE("stratified split and folds") {
  std::vector<std::string> y;
  for (int i = 0; i < 100; ++i) y.push_back(i < 80 ? "normal" : "attacked");
  const auto s = stratified_split(y, 0.3, 5);
  CHECK(s.test.size() == 30);
  CHECK(s.train.size() == 70);
  const auto attacked_test = std::count_if(s.test.begin(), s.test.end(), [&](auto i) { return y[i] == "attacked"; });
  CHECK(attacked_test == 6);
  CHECK(stratified_split(y, 0.3, 5).test == s.test);

  const auto folds = stratified_folds(y, 5, 1);
  std::map<std::size_t, int> per_fold;
  for (auto f : folds) ++per_fold[f];
  for (const auto& [f, n] : per_fold) CHECK(n == 20);
  try {
    stratified_folds({"a", "a", "b"}, 2, 1);
    FAIL("expected FoldTooSmall");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::FoldTooSmall);
  }
}

TEST_CASE("grid search") {
  const auto d = xor_clouds(3, 15, 0.2);
  const auto f = named(d.x);
  const auto one = grid_search(ClassifierSpec(Algo::DT, {}, 1), f, d.y, {{"max_depth", {3}}}, 3);
  CHECK(one.points.size() == 1);
  CHECK(one.best.at("max_depth") == 3);

  const auto r = grid_search(ClassifierSpec(Algo::DT, {}, 1), f, d.y, {{"max_depth", {1, 0}}}, 3);
  CHECK(r.best.at("max_depth") == 0);
  CHECK(r.points[0].score < r.points[1].score);
  CHECK(r.best_score > 0.8);
  CHECK(grid_search(ClassifierSpec(Algo::DT, {}, 1), f, d.y, {{"max_depth", {1, 0}}}, 3).best_score == r.best_score);

  // order: keys sorted, last key fastest
  const auto g = grid_search(ClassifierSpec(Algo::DT, {}, 1), f, d.y,
                             {{"min_samples_split", {2, 4}}, {"max_depth", {1, 2}}}, 3);
  REQUIRE(g.points.size() == 4);
  CHECK(g.points[0].params.at("max_depth") == 1);
  CHECK(g.points[1].params.at("max_depth") == 1);
  CHECK(g.points[1].params.at("min_samples_split") == 4);
  CHECK(g.points[2].params.at("max_depth") == 2);
  CHECK_THROWS_AS(grid_search(ClassifierSpec(Algo::DT), f, d.y, {{"bogus", {1}}}, 3), Error);
}
