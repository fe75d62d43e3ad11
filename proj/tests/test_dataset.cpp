#include <doctest.h>

#include <cmath>
#include <type_traits>
#include <vector>

#include "helpers.hpp"
#include "ilt/dataset.hpp"
#include "ilt/rng.hpp"

using namespace ilt;

namespace {

// Multinomial logistic regression on [x, 1] by full-batch gradient descent.
double linear_probe_accuracy(const TrainingData& data) {
  const auto n = static_cast<Eigen::Index>(data.size());
  const auto d = static_cast<Eigen::Index>(data.input_dim());
  const auto c = static_cast<Eigen::Index>(data.tasks[0].dim);
  Eigen::MatrixXd x(n, d + 1);
  x.leftCols(d) = data.inputs;
  x.col(d).setOnes();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d + 1, c);
  Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    onehot(i, static_cast<Eigen::Index>(data.targets[0].classes[static_cast<std::size_t>(i)])) = 1.0;
  }
  for (int iter = 0; iter < 500; ++iter) {
    Eigen::MatrixXd z = x * w;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = z.row(i).maxCoeff();
      z.row(i) = (z.row(i).array() - m).exp().matrix();
      z.row(i) /= z.row(i).sum();
    }
    w -= 0.5 * x.transpose() * (z - onehot) / static_cast<double>(n);
  }
  const Eigen::MatrixXd scores = x * w;
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    scores.row(i).maxCoeff(&best);
    if (static_cast<std::size_t>(best) == data.targets[0].classes[static_cast<std::size_t>(i)]) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

template <typename T, typename = void>
struct has_corrupted_member : std::false_type {};
template <typename T>
struct has_corrupted_member<T, std::void_t<decltype(std::declval<T>().corrupted(0))>>
    : std::true_type {};

template <typename T, typename = void>
struct has_masks_member : std::false_type {};
template <typename T>
struct has_masks_member<T, std::void_t<decltype(std::declval<T>().masks)>> : std::true_type {};

}  // namespace

TEST_SUITE("synth_data") {
  TEST_CASE("training data cannot see corruption masks") {
    static_assert(!has_corrupted_member<TrainingData>::value);
    static_assert(!has_masks_member<TrainingData>::value);
    static_assert(has_corrupted_member<MultiTaskDataset>::value);
    CHECK(true);
  }

  TEST_CASE("generation is deterministic") {
    const auto a = generate(100, 8, 4, 17);
    const auto b = generate(100, 8, 4, 17);
    CHECK(a.data().inputs == b.data().inputs);
    CHECK(a.data().targets[0].classes == b.data().targets[0].classes);
    CHECK(a.data().targets[1].values == b.data().targets[1].values);
    const auto c = generate(100, 8, 4, 18);
    CHECK(a.data().inputs != c.data().inputs);
  }

  TEST_CASE("shapes, masks and degenerate dims") {
    const auto ds = generate(50, 3, 5, 1, 2);
    const auto& data = ds.data();
    CHECK(data.size() == 50);
    CHECK(data.input_dim() == 3);
    CHECK(data.num_tasks() == 2);
    CHECK(data.tasks[0].kind == TaskKind::Classification);
    CHECK(data.tasks[0].dim == 5);
    CHECK(data.tasks[1].kind == TaskKind::Regression);
    CHECK(data.targets[1].values.cols() == 2);
    CHECK_NOTHROW(data.validate());
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(!ds.corruption_applied(k));
      CHECK(ds.corrupted_count(k) == 0);
    }
    CHECK_THROWS(generate(0, 3, 4, 1));
    CHECK_THROWS(generate(10, 0, 4, 1));
    CHECK_THROWS(generate(10, 3, 1, 1));
  }

  TEST_CASE("problem geometry and regression targets") {
    const auto p = make_problem(8, 4, 2, 3);
    for (Eigen::Index c = 0; c < 4; ++c) CHECK(p.means.row(c).norm() == doctest::Approx(3.0));
    const auto ds = sample_dataset(p, 30, 99);
    const auto& data = ds.data();
    for (Eigen::Index i = 0; i < 30; ++i) {
      for (Eigen::Index r = 0; r < 2; ++r) {
        double lin = 0.0, phase = 0.0;
        for (Eigen::Index j = 0; j < 8; ++j) {
          lin += p.linear(r, j) * data.inputs(i, j);
          phase += p.freq(r, j) * data.inputs(i, j);
        }
        CHECK(data.targets[1].values(i, r) == doctest::Approx(lin + 0.1 * std::sin(phase)));
      }
    }
  }

  TEST_CASE("class priors are near uniform") {
    const std::size_t n = 2000, classes = 4;
    const auto ds = generate(n, 8, classes, 1);
    std::vector<double> counts(classes, 0.0);
    for (auto c : ds.data().targets[0].classes) counts[c] += 1.0;
    for (double count : counts) {
      CHECK(std::abs(count - static_cast<double>(n) / classes) <= 5.0 * std::sqrt(double(n)));
    }
  }

  TEST_CASE("a linear probe separates the classes") {
    const auto ds = generate(2000, 8, 4, 1);
    CHECK(linear_probe_accuracy(ds.data()) > 0.90);
  }

  TEST_CASE("train and test splits share the problem") {
    GeneratorConfig config;
    config.n_train = 300;
    config.n_test = 200;
    config.seed = 4;
    const auto splits = generate_splits(config);
    CHECK(splits.train.size() == 300);
    CHECK(splits.test.size() == 200);
    CHECK(splits.train.data().inputs.row(0) != splits.test.data().inputs.row(0));
    const auto same = generate(300, 8, 4, 4);
    CHECK(same.data().inputs == splits.train.data().inputs);
  }

  TEST_CASE("classification corruption") {
    SUBCASE("binary labels all flip at fraction 1") {
      auto ds = generate(100, 3, 2, 2);
      const auto before = ds.data().targets[0].classes;
      corrupt_classification(ds, 0, 1.0, 5);
      for (std::size_t i = 0; i < 100; ++i) {
        CHECK(ds.data().targets[0].classes[i] == 1 - before[i]);
        CHECK(ds.corrupted(0)[i]);
      }
    }
    SUBCASE("counts, derangement and isolation") {
      auto ds = generate(1000, 8, 4, 2);
      const auto before = ds.data();
      corrupt_classification(ds, 0, 0.4, 5);
      CHECK(ds.corrupted_count(0) == 400);
      CHECK(ds.corrupted_count(1) == 0);
      CHECK(ds.data().targets[1].values == before.targets[1].values);
      CHECK(ds.data().inputs == before.inputs);
      // One fixed relabeling applies to every corrupted instance.
      std::vector<int> map(4, -1);
      for (std::size_t i = 0; i < 1000; ++i) {
        const auto old_label = before.targets[0].classes[i];
        const auto new_label = ds.data().targets[0].classes[i];
        if (!ds.corrupted(0)[i]) {
          CHECK(new_label == old_label);
          continue;
        }
        CHECK(new_label != old_label);
        if (map[old_label] < 0) map[old_label] = static_cast<int>(new_label);
        CHECK(map[old_label] == static_cast<int>(new_label));
      }
      CHECK_THROWS(corrupt_classification(ds, 0, 0.4, 5));
    }
    SUBCASE("same seed, same corruption") {
      auto a = generate(200, 4, 3, 8);
      auto b = generate(200, 4, 3, 8);
      corrupt_classification(a, 0, 0.3, 21);
      corrupt_classification(b, 0, 0.3, 21);
      CHECK(a.corrupted(0) == b.corrupted(0));
      CHECK(a.data().targets[0].classes == b.data().targets[0].classes);
    }
    SUBCASE("bad arguments") {
      auto ds = generate(20, 3, 3, 1);
      CHECK_THROWS(corrupt_classification(ds, 0, 0.0, 1));
      CHECK_THROWS(corrupt_classification(ds, 0, 1.5, 1));
      CHECK_THROWS(corrupt_classification(ds, 1, 0.5, 1));
    }
  }

  TEST_CASE("corruption counts") {
    CHECK(corruption_count(0.4, 1000) == 400);
    CHECK(corruption_count(0.4, 2000) == 800);
    CHECK(corruption_count(0.29, 100) == 29);
    CHECK(corruption_count(0.5, 7) == 3);
    CHECK(corruption_count(1.0, 7) == 7);
  }

  TEST_CASE("regression corruption") {
    auto ds = generate(1000, 8, 4, 3);
    const Matrix before = ds.data().targets[1].values;
    const Eigen::RowVectorXd lo = before.colwise().minCoeff();
    const Eigen::RowVectorXd hi = before.colwise().maxCoeff();
    corrupt_regression(ds, 1, 0.4, 9);
    CHECK(ds.corrupted_count(1) == 400);
    CHECK(ds.corrupted_count(0) == 0);
    const Matrix& after = ds.data().targets[1].values;
    for (Eigen::Index i = 0; i < 1000; ++i) {
      if (!ds.corrupted(1)[static_cast<std::size_t>(i)]) {
        CHECK(after.row(i) == before.row(i));
        continue;
      }
      for (Eigen::Index j = 0; j < after.cols(); ++j) {
        REQUIRE(lo(j) <= 0.0);
        REQUIRE(hi(j) >= 0.0);
        CHECK(after(i, j) >= 2.0 * lo(j));
        CHECK(after(i, j) <= 2.0 * hi(j));
      }
    }
    CHECK_THROWS(corrupt_regression(ds, 1, 0.4, 9));
    CHECK_THROWS(corrupt_regression(ds, 0, 0.4, 9));
  }

  TEST_CASE("regression noise has the uniform mean") {
    auto ds = generate(20000, 8, 4, 6);
    const Matrix before = ds.data().targets[1].values;
    const Eigen::RowVectorXd lo = before.colwise().minCoeff();
    const Eigen::RowVectorXd hi = before.colwise().maxCoeff();
    corrupt_regression(ds, 1, 1.0, 4);
    const Matrix noise = ds.data().targets[1].values - before;
    const double m = static_cast<double>(noise.rows());
    for (Eigen::Index j = 0; j < noise.cols(); ++j) {
      const double se = (hi(j) - lo(j)) / std::sqrt(12.0 * m);
      CHECK(std::abs(noise.col(j).mean() - 0.5 * (lo(j) + hi(j))) < 3.0 * se);
      CHECK(noise.col(j).minCoeff() >= lo(j));
      CHECK(noise.col(j).maxCoeff() < hi(j));
    }
  }

  TEST_CASE("batches gather rows") {
    const auto ds = generate(40, 3, 3, 2);
    std::vector<std::size_t> ids{5, 0, 39};
    const auto b = ds.data().batch(ids);
    CHECK(b.instance_ids == ids);
    CHECK(b.inputs.row(2) == ds.data().inputs.row(39));
    CHECK(b.targets[0].classes[0] == ds.data().targets[0].classes[5]);
    CHECK(b.targets[1].values.row(1) == ds.data().targets[1].values.row(0));
    std::vector<std::size_t> out{40};
    CHECK_THROWS(ds.data().batch(out));
  }

  TEST_CASE("dataset file round trip") {
    auto ds = generate(25, 3, 3, 2);
    corrupt_classification(ds, 0, 0.4, 1);
    const auto dir = test::temp_dir("dataset");
    write_dataset(ds, dir / "d.txt");
    const auto text = test::read_file(dir / "d.txt");
    CHECK(text.rfind("# n=25 d=3 K=2 tasks=classification:3,regression:2\n", 0) == 0);
    const auto back = read_dataset(dir / "d.txt");
    CHECK(back.data().inputs == ds.data().inputs);
    CHECK(back.data().targets[0].classes == ds.data().targets[0].classes);
    CHECK(back.data().targets[1].values == ds.data().targets[1].values);
    CHECK(back.corrupted(0) == ds.corrupted(0));
    CHECK(back.corruption_applied(0));
  }
}
