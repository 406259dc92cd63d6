#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "learn_detail.hpp"

namespace cpfusion::learn::detail {

namespace {

Matrix one_hot(const std::vector<int>& y, int k) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(y.size()), k);
  for (std::size_t i = 0; i < y.size(); ++i) out(static_cast<Eigen::Index>(i), y[i]) = 1.0;
  return out;
}

Vector class_counts(const std::vector<int>& y, int k) {
  Vector c = Vector::Zero(k);
  for (int v : y) c(v) += 1.0;
  return c;
}

// ---------------------------------------------------------------- Gaussian NB

class GaussianNB final : public Classifier {
 public:
  explicit GaussianNB(const Hyperparams& hp) : smoothing_(hp.at("var_smoothing")) {}

  void fit(const Matrix& x, const std::vector<int>& y, int k) override {
    const auto p = x.cols();
    const Vector counts = class_counts(y, k);
    log_prior_ = (counts / static_cast<double>(y.size())).array().log();
    mean_ = Matrix::Zero(k, p);
    var_ = Matrix::Zero(k, p);
    for (std::size_t i = 0; i < y.size(); ++i) mean_.row(y[i]) += x.row(static_cast<Eigen::Index>(i));
    for (int c = 0; c < k; ++c) mean_.row(c) /= counts(c);
    for (std::size_t i = 0; i < y.size(); ++i) {
      var_.row(y[i]) += (x.row(static_cast<Eigen::Index>(i)) - mean_.row(y[i])).array().square().matrix();
    }
    for (int c = 0; c < k; ++c) var_.row(c) /= counts(c);
    const Matrix centered = x.rowwise() - x.colwise().mean();
    const double max_var = p > 0 ? (centered.array().square().colwise().mean()).maxCoeff() : 0.0;
    var_.array() += smoothing_ * (max_var > 0 ? max_var : 1.0);
  }

  Matrix predict_proba(const Matrix& x) const override {
    const auto k = mean_.rows();
    Matrix s(x.rows(), k);
    for (Eigen::Index c = 0; c < k; ++c) {
      const double norm = -0.5 * (2.0 * std::numbers::pi * var_.row(c).array()).log().sum();
      const Matrix d = x.rowwise() - mean_.row(c);
      s.col(c) = ((d.array().square().rowwise() / var_.row(c).array()).rowwise().sum() * -0.5 + norm + log_prior_(c))
                     .matrix();
    }
    return softmax_rows(s);
  }

  json save() const override {
    return {{"log_prior", to_json(log_prior_)}, {"mean", to_json(mean_)}, {"var", to_json(var_)}};
  }
  void load(const json& j) override {
    log_prior_ = vector_from_json(j.at("log_prior"));
    mean_ = matrix_from_json(j.at("mean"));
    var_ = matrix_from_json(j.at("var"));
  }

 private:
  double smoothing_;
  Vector log_prior_;
  Matrix mean_, var_;
};

// --------------------------------------------------------------- Bernoulli NB

class BernoulliNB final : public Classifier {
 public:
  explicit BernoulliNB(const Hyperparams& hp) : alpha_(hp.at("alpha")), threshold_(hp.at("binarize")) {}

  void fit(const Matrix& x, const std::vector<int>& y, int k) override {
    lo_ = x.colwise().minCoeff().transpose();
    hi_ = x.colwise().maxCoeff().transpose();
    const Matrix b = binarize(x);
    const Vector counts = class_counts(y, k);
    log_prior_ = (counts / static_cast<double>(y.size())).array().log();
    Matrix ones = Matrix::Zero(k, x.cols());
    for (std::size_t i = 0; i < y.size(); ++i) ones.row(y[i]) += b.row(static_cast<Eigen::Index>(i));
    log_p_ = Matrix(k, x.cols());
    log_q_ = Matrix(k, x.cols());
    for (int c = 0; c < k; ++c) {
      const auto pr = (ones.row(c).array() + alpha_) / (counts(c) + 2.0 * alpha_);
      log_p_.row(c) = pr.log().matrix();
      log_q_.row(c) = (1.0 - pr).log().matrix();
    }
  }

  Matrix predict_proba(const Matrix& x) const override {
    const Matrix b = binarize(x);
    const Matrix nb = (1.0 - b.array()).matrix();
    Matrix s = b * log_p_.transpose() + nb * log_q_.transpose();
    s.rowwise() += log_prior_.transpose();
    return softmax_rows(s);
  }

  json save() const override {
    return {{"lo", to_json(lo_)},         {"hi", to_json(hi_)},         {"log_prior", to_json(log_prior_)},
            {"log_p", to_json(log_p_)}, {"log_q", to_json(log_q_)}};
  }
  void load(const json& j) override {
    lo_ = vector_from_json(j.at("lo"));
    hi_ = vector_from_json(j.at("hi"));
    log_prior_ = vector_from_json(j.at("log_prior"));
    log_p_ = matrix_from_json(j.at("log_p"));
    log_q_ = matrix_from_json(j.at("log_q"));
  }

 private:
  // min-max with training bounds, then x > threshold
  Matrix binarize(const Matrix& x) const {
    Matrix out(x.rows(), x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double span = hi_(j) - lo_(j);
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double s = span > 0 ? (x(i, j) - lo_(j)) / span : 0.0;
        out(i, j) = s > threshold_ ? 1.0 : 0.0;
      }
    }
    return out;
  }

  double alpha_, threshold_;
  Vector lo_, hi_, log_prior_;
  Matrix log_p_, log_q_;
};

// ------------------------------------------------------- logistic regression

class Logistic final : public Classifier {
 public:
  explicit Logistic(const Hyperparams& hp)
      : lr_(hp.at("learning_rate")), l2_(hp.at("l2")), epochs_(static_cast<int>(hp.at("epochs"))) {}

  void fit(const Matrix& x, const std::vector<int>& y, int k) override {
    scaler_.fit(x);
    const Matrix z = scaler_.apply(x);
    const Matrix t = one_hot(y, k);
    const double n = static_cast<double>(z.rows());
    w_ = Matrix::Zero(z.cols(), k);
    b_ = Vector::Zero(k);
    for (int e = 0; e < epochs_; ++e) {
      Matrix s = z * w_;
      s.rowwise() += b_.transpose();
      const Matrix err = softmax_rows(s) - t;
      w_ -= lr_ * ((z.transpose() * err) / n + l2_ * w_);
      b_ -= lr_ * (err.colwise().sum().transpose() / n);
    }
  }

  Matrix predict_proba(const Matrix& x) const override {
    Matrix s = scaler_.apply(x) * w_;
    s.rowwise() += b_.transpose();
    return softmax_rows(s);
  }

  json save() const override { return {{"scaler", scaler_.save()}, {"w", to_json(w_)}, {"b", to_json(b_)}}; }
  void load(const json& j) override {
    scaler_.load(j.at("scaler"));
    w_ = matrix_from_json(j.at("w"));
    b_ = vector_from_json(j.at("b"));
  }

 private:
  double lr_, l2_;
  int epochs_;
  Standardizer scaler_;
  Matrix w_;
  Vector b_;
};

// ------------------------------------------------------------- linear SVC

struct Platt {
  double a = 0.0;
  double b = 0.0;
  /// P(positive | margin f) = 1 / (1 + exp(a f + b)).
  double operator()(double f) const {
    const double z = a * f + b;
    return z >= 0 ? std::exp(-z) / (1.0 + std::exp(-z)) : 1.0 / (1.0 + std::exp(z));
  }
};

// Newton's method with backtracking on the regularized-target log loss.
Platt fit_platt(const Vector& f, const std::vector<bool>& positive) {
  const auto n = f.size();
  double n_pos = 0;
  for (bool p : positive) n_pos += p ? 1 : 0;
  const double n_neg = static_cast<double>(n) - n_pos;
  const double hi = (n_pos + 1.0) / (n_pos + 2.0);
  const double lo = 1.0 / (n_neg + 2.0);
  Vector t(n);
  for (Eigen::Index i = 0; i < n; ++i) t(i) = positive[static_cast<std::size_t>(i)] ? hi : lo;

  auto objective = [&](double a, double b) {
    double v = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = f(i) * a + b;
      v += z >= 0 ? t(i) * z + std::log1p(std::exp(-z)) : (t(i) - 1.0) * z + std::log1p(std::exp(z));
    }
    return v;
  };

  Platt p;
  p.b = std::log((n_neg + 1.0) / (n_pos + 1.0));
  double fval = objective(p.a, p.b);
  for (int it = 0; it < 100; ++it) {
    double h11 = 1e-12, h22 = 1e-12, h21 = 0, g1 = 0, g2 = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = f(i) * p.a + p.b;
      double pp, qq;
      if (z >= 0) {
        pp = std::exp(-z) / (1.0 + std::exp(-z));
        qq = 1.0 / (1.0 + std::exp(-z));
      } else {
        pp = 1.0 / (1.0 + std::exp(z));
        qq = std::exp(z) / (1.0 + std::exp(z));
      }
      const double d2 = pp * qq;
      h11 += f(i) * f(i) * d2;
      h22 += d2;
      h21 += f(i) * d2;
      const double d1 = t(i) - pp;
      g1 += f(i) * d1;
      g2 += d1;
    }
    if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
    const double det = h11 * h22 - h21 * h21;
    const double da = -(h22 * g1 - h21 * g2) / det;
    const double db = -(-h21 * g1 + h11 * g2) / det;
    const double gd = g1 * da + g2 * db;
    double step = 1.0;
    while (step >= 1e-10) {
      const double na = p.a + step * da, nb = p.b + step * db;
      const double nf = objective(na, nb);
      if (nf < fval + 1e-4 * step * gd) {
        p.a = na;
        p.b = nb;
        fval = nf;
        break;
      }
      step /= 2.0;
    }
    if (step < 1e-10) break;
  }
  return p;
}

class LinearSVC final : public Classifier {
 public:
  LinearSVC(const Hyperparams& hp, std::uint64_t seed)
      : lambda_(hp.at("lambda")), epochs_(static_cast<int>(hp.at("epochs"))), seed_(seed) {}

  void fit(const Matrix& x, const std::vector<int>& y, int k) override {
    k_ = k;
    scaler_.fit(x);
    const Matrix z = augmented(x);
    // two classes: one machine for class 1; otherwise one-vs-rest
    const int machines = k == 2 ? 1 : k;
    w_ = Matrix::Zero(z.cols(), machines);
    platt_.assign(static_cast<std::size_t>(machines), {});
    for (int m = 0; m < machines; ++m) {
      const int positive_class = k == 2 ? 1 : m;
      std::vector<bool> pos(y.size());
      for (std::size_t i = 0; i < y.size(); ++i) pos[i] = y[i] == positive_class;
      Vector w = pegasos(z, pos, mix_seed(seed_, static_cast<std::uint64_t>(m)));
      w_.col(m) = w;
      platt_[static_cast<std::size_t>(m)] = fit_platt(z * w, pos);
    }
  }

  /// Raw margins, one column per machine.
  Matrix margins(const Matrix& x) const { return augmented(x) * w_; }

  Matrix predict_proba(const Matrix& x) const override {
    const Matrix f = margins(x);
    Matrix p(x.rows(), k_);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      if (k_ == 2) {
        const double p1 = platt_[0](f(i, 0));
        p(i, 0) = 1.0 - p1;
        p(i, 1) = p1;
      } else {
        double s = 0;
        for (int c = 0; c < k_; ++c) {
          p(i, c) = std::max(platt_[static_cast<std::size_t>(c)](f(i, c)), 1e-300);
          s += p(i, c);
        }
        p.row(i) /= s;
      }
    }
    return p;
  }

  json save() const override {
    json pl = json::array();
    for (const auto& p : platt_) pl.push_back({p.a, p.b});
    return {{"n_classes", k_}, {"scaler", scaler_.save()}, {"w", to_json(w_)}, {"platt", pl}};
  }
  void load(const json& j) override {
    k_ = j.at("n_classes").get<int>();
    scaler_.load(j.at("scaler"));
    w_ = matrix_from_json(j.at("w"));
    platt_.clear();
    for (const auto& p : j.at("platt")) platt_.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  }

 private:
  Matrix augmented(const Matrix& x) const {
    Matrix z(x.rows(), x.cols() + 1);
    z.leftCols(x.cols()) = scaler_.apply(x);
    z.col(x.cols()).setOnes();
    return z;
  }

  // Pegasos: step 1/(lambda t) on the hinge subgradient; the bias is the
  // last (constant) coordinate and is regularized with the rest.
  Vector pegasos(const Matrix& z, const std::vector<bool>& pos, std::uint64_t seed) const {
    Rng rng(seed);
    Vector w = Vector::Zero(z.cols());
    std::vector<std::size_t> order(pos.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::int64_t t = 0;
    const double radius = 1.0 / std::sqrt(lambda_);
    for (int e = 0; e < epochs_; ++e) {
      rng.shuffle(std::span<std::size_t>(order));
      for (auto i : order) {
        ++t;
        const double eta = 1.0 / (lambda_ * static_cast<double>(t));
        const double yi = pos[i] ? 1.0 : -1.0;
        const double margin = yi * z.row(static_cast<Eigen::Index>(i)).dot(w);
        w *= 1.0 - eta * lambda_;
        if (margin < 1.0) w += (eta * yi) * z.row(static_cast<Eigen::Index>(i)).transpose();
        const double norm = w.norm();
        if (norm > radius) w *= radius / norm;
      }
    }
    return w;
  }

  double lambda_;
  int epochs_;
  std::uint64_t seed_;
  int k_ = 2;
  Standardizer scaler_;
  Matrix w_;
  std::vector<Platt> platt_;
};

// -------------------------------------------------------------------- MLP

class Mlp final : public Classifier {
 public:
  Mlp(const Hyperparams& hp, std::uint64_t seed)
      : hidden_(static_cast<int>(hp.at("hidden_units"))),
        lr_(hp.at("learning_rate")),
        momentum_(hp.at("momentum")),
        batch_(static_cast<int>(hp.at("batch_size"))),
        epochs_(static_cast<int>(hp.at("epochs"))),
        l2_(hp.at("l2")),
        seed_(seed) {}

  void fit(const Matrix& x, const std::vector<int>& y, int k) override {
    scaler_.fit(x);
    const Matrix z = scaler_.apply(x);
    const Matrix t = one_hot(y, k);
    const auto p = z.cols();
    Rng rng(seed_);
    // He initialization for the rectified layer, Glorot-style for the output
    w1_.resize(p, hidden_);
    for (Eigen::Index i = 0; i < w1_.size(); ++i) w1_.data()[i] = rng.normal() * std::sqrt(2.0 / static_cast<double>(p));
    w2_.resize(hidden_, k);
    for (Eigen::Index i = 0; i < w2_.size(); ++i) {
      w2_.data()[i] = rng.normal() * std::sqrt(2.0 / static_cast<double>(hidden_ + k));
    }
    b1_ = Vector::Zero(hidden_);
    b2_ = Vector::Zero(k);
    Matrix vw1 = Matrix::Zero(p, hidden_), vw2 = Matrix::Zero(hidden_, k);
    Vector vb1 = Vector::Zero(hidden_), vb2 = Vector::Zero(k);

    const auto n = static_cast<std::size_t>(z.rows());
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (int e = 0; e < epochs_; ++e) {
      rng.shuffle(std::span<std::size_t>(order));
      for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_)) {
        const auto m = static_cast<Eigen::Index>(std::min(n, start + static_cast<std::size_t>(batch_)) - start);
        Matrix xb(m, p), tb(m, k);
        for (Eigen::Index r = 0; r < m; ++r) {
          xb.row(r) = z.row(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(r)]));
          tb.row(r) = t.row(static_cast<Eigen::Index>(order[start + static_cast<std::size_t>(r)]));
        }
        Matrix h = xb * w1_;
        h.rowwise() += b1_.transpose();
        const Matrix a = h.cwiseMax(0.0);
        Matrix s = a * w2_;
        s.rowwise() += b2_.transpose();
        const Matrix d2 = (softmax_rows(s) - tb) / static_cast<double>(m);
        const Matrix gw2 = a.transpose() * d2 + l2_ * w2_;
        const Vector gb2 = d2.colwise().sum().transpose();
        const Matrix d1 = ((d2 * w2_.transpose()).array() * (h.array() > 0.0).cast<double>()).matrix();
        const Matrix gw1 = xb.transpose() * d1 + l2_ * w1_;
        const Vector gb1 = d1.colwise().sum().transpose();
        vw1 = momentum_ * vw1 - lr_ * gw1;
        vw2 = momentum_ * vw2 - lr_ * gw2;
        vb1 = momentum_ * vb1 - lr_ * gb1;
        vb2 = momentum_ * vb2 - lr_ * gb2;
        w1_ += vw1;
        w2_ += vw2;
        b1_ += vb1;
        b2_ += vb2;
      }
    }
  }

  Matrix predict_proba(const Matrix& x) const override {
    Matrix h = scaler_.apply(x) * w1_;
    h.rowwise() += b1_.transpose();
    Matrix s = h.cwiseMax(0.0) * w2_;
    s.rowwise() += b2_.transpose();
    return softmax_rows(s);
  }

  json save() const override {
    return {{"scaler", scaler_.save()}, {"w1", to_json(w1_)}, {"b1", to_json(b1_)},
            {"w2", to_json(w2_)},       {"b2", to_json(b2_)}};
  }
  void load(const json& j) override {
    scaler_.load(j.at("scaler"));
    w1_ = matrix_from_json(j.at("w1"));
    b1_ = vector_from_json(j.at("b1"));
    w2_ = matrix_from_json(j.at("w2"));
    b2_ = vector_from_json(j.at("b2"));
  }

 private:
  int hidden_;
  double lr_, momentum_;
  int batch_, epochs_;
  double l2_;
  std::uint64_t seed_;
  Standardizer scaler_;
  Matrix w1_, w2_;
  Vector b1_, b2_;
};

// -------------------------------------------------------------------- k-NN

class Knn final : public Classifier {
 public:
  explicit Knn(const Hyperparams& hp) : k_(static_cast<int>(hp.at("k"))) {}

  void fit(const Matrix& x, const std::vector<int>& y, int k) override {
    x_ = x;
    y_ = y;
    n_classes_ = k;
  }

  // Neighbors ordered by (distance, training index).
  Matrix predict_proba(const Matrix& x) const override {
    const auto n = static_cast<std::size_t>(x_.rows());
    const auto kk = std::min<std::size_t>(static_cast<std::size_t>(k_), n);
    Matrix p = Matrix::Zero(x.rows(), n_classes_);
    std::vector<std::pair<double, std::size_t>> d(n);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < n; ++j) d[j] = {(x_.row(static_cast<Eigen::Index>(j)) - x.row(i)).squaredNorm(), j};
      std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(kk), d.end());
      for (std::size_t j = 0; j < kk; ++j) p(i, y_[d[j].second]) += 1.0;
    }
    return p / static_cast<double>(kk);
  }

  json save() const override { return {{"n_classes", n_classes_}, {"x", to_json(x_)}, {"y", y_}}; }
  void load(const json& j) override {
    n_classes_ = j.at("n_classes").get<int>();
    x_ = matrix_from_json(j.at("x"));
    y_ = j.at("y").get<std::vector<int>>();
  }

 private:
  int k_;
  int n_classes_ = 2;
  Matrix x_;
  std::vector<int> y_;
};

}  // namespace

std::unique_ptr<Classifier> make_gnb(const Hyperparams& params) { return std::make_unique<GaussianNB>(params); }
std::unique_ptr<Classifier> make_bnb(const Hyperparams& params) { return std::make_unique<BernoulliNB>(params); }
std::unique_ptr<Classifier> make_lr(const Hyperparams& params) { return std::make_unique<Logistic>(params); }
std::unique_ptr<Classifier> make_svc(const Hyperparams& params, std::uint64_t seed) {
  return std::make_unique<LinearSVC>(params, seed);
}
std::unique_ptr<Classifier> make_mlp(const Hyperparams& params, std::uint64_t seed) {
  return std::make_unique<Mlp>(params, seed);
}
std::unique_ptr<Classifier> make_knn(const Hyperparams& params) { return std::make_unique<Knn>(params); }

}  // namespace cpfusion::learn::detail
