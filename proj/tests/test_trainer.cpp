#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "ilt/rng.hpp"
#include "ilt/stats.hpp"
#include "ilt/trainer.hpp"

using namespace ilt;

namespace {

std::vector<Matrix> flat_params(const SharedTrunkModel& model) {
  std::vector<Matrix> out;
  for (const auto& layer : model.trunk()) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  for (const auto& layer : model.heads()) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  return out;
}

double max_abs_diff(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return m;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::istringstream in(line);
  for (std::string cell; std::getline(in, cell, ',');) cells.push_back(cell);
  return cells;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("zero lr leaves the model at its initialization") {
    auto c = test::small_config();
    c.weighting.scheme = Scheme::Equal;
    c.optimizer.kind = OptimizerKind::Sgd;
    c.optimizer.momentum = 0.0;
    c.optimizer.lr = 0.0;
    c.train.epochs = 1;
    c.train.batch_size = c.data.n_train;
    const auto data = prepare_data(c);
    const auto run = train_one(c, data.train.data(), data.test.data(), 11);

    SharedTrunkModel fresh({c.data.input_dim, c.model.hidden, data.train.data().head_dims()},
                           c.model.activation);
    fresh.init(init_seed(11));
    CHECK(run.final_eval() == evaluate(fresh, data.test.data()));
  }

  TEST_CASE("frozen zero table matches equal weighting with halved regression") {
    auto c = test::small_config();
    c.train.epochs = 2;
    c.corruption.target = CorruptionTarget::Classification;
    const auto data = prepare_data(c);

    auto ilt = c;
    ilt.weighting.scheme = Scheme::Ilt;
    ilt.weighting.ilt_lr = 0.0;
    auto equal = c;
    equal.weighting.scheme = Scheme::Equal;
    equal.weighting.task_scales = {1.0, 0.5};

    std::vector<std::vector<Matrix>> a, b;
    TrainHooks ha{[&](int, std::size_t, const SharedTrunkModel& m, const Weighter&) {
                    a.push_back(flat_params(m));
                  },
                  {}};
    TrainHooks hb{[&](int, std::size_t, const SharedTrunkModel& m, const Weighter&) {
                    b.push_back(flat_params(m));
                  },
                  {}};
    train_one(ilt, data.train.data(), data.test.data(), 3, 0, ha);
    train_one(equal, data.train.data(), data.test.data(), 3, 0, hb);
    REQUIRE(a.size() == b.size());
    REQUIRE(a.size() == 2 * ((c.data.n_train + 15) / 16));
    for (std::size_t step = 0; step < a.size(); ++step) CHECK(max_abs_diff(a[step], b[step]) < 1e-12);
  }

  TEST_CASE("gradient routing matches finite differences of the weighted total") {
    const auto ds = generate(5, 3, 3, 4);
    const auto& data = ds.data();
    SharedTrunkModel model({3, {4, 4}, data.head_dims()}, Activation::Tanh);
    model.init(8);
    WeightingConfig wc;
    wc.scheme = Scheme::Ilt;
    auto weighter = make_weighter(wc, data.kinds(), 5);
    Rng rng(2);
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t k = 0; k < 2; ++k) weighter->mutable_table()->set(i, k, rng.uniform(-2, 2));
    }
    std::vector<std::size_t> ids{0, 1, 2, 3, 4};
    const auto batch = data.batch(ids);
    auto total = [&] {
      const auto l = evaluate_batch_losses(model, batch, data.tasks);
      return weighter->weigh(ids, l.raw).total;
    };
    const auto losses = evaluate_batch_losses(model, batch, data.tasks);
    const auto weighting = weighter->weigh(ids, losses.raw);
    // Multipliers are exactly c * exp(-s) / B.
    for (std::size_t i = 0; i < 5; ++i) {
      for (std::size_t k = 0; k < 2; ++k) {
        const double c = k == 0 ? 1.0 : 0.5;
        CHECK(weighting.multipliers(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) ==
              doctest::Approx(c * std::exp(-weighter->table()->s(i, k)) / 5.0).epsilon(1e-15));
      }
    }
    model.zero_grads();
    model.backward(losses.forward.cache, route_output_grads(losses.d_raw, weighting.multipliers));
    const double eps = 1e-5;
    for (auto& p : model.params()) {
      for (Eigen::Index j = 0; j < p.value->size(); ++j) {
        double& v = p.value->data()[j];
        const double saved = v;
        v = saved + eps;
        const double up = total();
        v = saved - eps;
        const double down = total();
        v = saved;
        const double numeric = (up - down) / (2 * eps);
        const double analytic = p.grad->data()[j];
        const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
        CHECK_MESSAGE(std::abs(numeric - analytic) / denom < 1e-4, p.name);
      }
    }
  }

  TEST_CASE("evaluate") {
    SUBCASE("perfect model") {
      TrainingData data;
      data.tasks = {{TaskKind::Classification, 2}, {TaskKind::Regression, 2}};
      data.inputs.resize(4, 2);
      data.inputs << 1.0, 0.0, 0.2, 0.9, 3.0, 1.0, 0.0, 0.5;
      TaskTargets labels, values;
      labels.classes = {0, 1, 0, 1};
      values.values = data.inputs;
      data.targets = {labels, values};
      SharedTrunkModel model({2, {2}, {2, 2}}, Activation::Relu);
      model.trunk()[0].weight = Matrix::Identity(2, 2);
      for (auto& h : model.heads()) h.weight = Matrix::Identity(2, 2);
      const auto m = evaluate(model, data);
      CHECK(m[0] == 1.0);
      CHECK(m[1] == 0.0);
    }
    SUBCASE("random classifier on four classes") {
      const std::size_t n = 2000;
      Rng rng(12);
      TrainingData data;
      data.tasks = {{TaskKind::Classification, 4}, {TaskKind::Regression, 1}};
      data.inputs.resize(static_cast<Eigen::Index>(n), 3);
      TaskTargets labels, values;
      values.values.resize(static_cast<Eigen::Index>(n), 1);
      for (std::size_t i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < 3; ++j) data.inputs(static_cast<Eigen::Index>(i), j) = rng.normal();
        labels.classes.push_back(rng.index(4));
        values.values(static_cast<Eigen::Index>(i), 0) = 0.0;
      }
      data.targets = {labels, values};
      SharedTrunkModel model({3, {8}, {4, 1}}, Activation::Tanh);
      model.init(5);
      const double acc = evaluate(model, data)[0];
      const double se = std::sqrt(0.25 * 0.75 / static_cast<double>(n));
      CHECK(std::abs(acc - 0.25) < 3.0 * se);
    }
    SUBCASE("independent of the table") {
      const auto ds = generate(50, 3, 3, 1);
      SharedTrunkModel model({3, {4}, ds.data().head_dims()}, Activation::Relu);
      model.init(1);
      WeightingConfig wc;
      auto weighter = make_weighter(wc, ds.data().kinds(), 50);
      const auto before = evaluate(model, ds.data());
      for (std::size_t i = 0; i < 50; ++i) weighter->mutable_table()->set(i, 0, 3.0);
      CHECK(evaluate(model, ds.data()) == before);
    }
    SUBCASE("shape mismatch") {
      const auto ds = generate(10, 3, 3, 1);
      SharedTrunkModel model({4, {4}, ds.data().head_dims()}, Activation::Relu);
      CHECK_THROWS(evaluate(model, ds.data()));
    }
  }

  TEST_CASE("repeated runs and aggregation") {
    auto c = test::small_config();
    c.weighting.scheme = Scheme::Ilt;
    SUBCASE("one run has zero std") {
      const auto r = train_repeated(c);
      for (const auto& [name, summary] : r.aggregate) CHECK_MESSAGE(summary.std == 0.0, name);
    }
    SUBCASE("forced identical seeds give zero std") {
      const auto data = prepare_data(c);
      const auto r = train_repeated(c, data, {9, 9, 9});
      for (const auto& [name, summary] : r.aggregate) CHECK_MESSAGE(summary.std == 0.0, name);
    }
    SUBCASE("mean of three runs equals the mean of the per-run finals") {
      c.train.repeats = 3;
      const auto r = train_repeated(c);
      REQUIRE(r.runs.size() == 3);
      CHECK(r.runs[1].run_seed == c.seed + 1);
      const auto dir = test::temp_dir("aggregate");
      write_run_artifacts(r, dir);
      // Recompute from the final row of every run in metrics.csv.
      const auto lines = split_lines(test::read_file(dir / "metrics.csv"));
      const auto header = split_csv(lines.front());
      const auto col = static_cast<std::size_t>(
          std::find(header.begin(), header.end(), "task0_accuracy") - header.begin());
      REQUIRE(col < header.size());
      std::vector<double> finals;
      for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto cells = split_csv(lines[i]);
        if (std::stoi(cells[2]) == c.train.epochs - 1) finals.push_back(std::stod(cells[col]));
      }
      REQUIRE(finals.size() == 3);
      const double mean = (finals[0] + finals[1] + finals[2]) / 3.0;
      CHECK(std::abs(r.aggregate.at("task0_accuracy").mean - mean) < 1e-12);
      CHECK(std::filesystem::exists(dir / "config.json"));
      CHECK(std::filesystem::exists(dir / "aggregate.json"));
      CHECK(std::filesystem::exists(snapshot_path(dir, 2, c.train.epochs - 1)));
    }
  }

  TEST_CASE("learning rate decays on schedule") {
    auto c = test::small_config();
    c.train.epochs = 5;
    c.optimizer.decay_every = 2;
    c.optimizer.decay_factor = 0.5;
    const auto data = prepare_data(c);
    const auto run = train_one(c, data.train.data(), data.test.data(), 1);
    const double lr = c.optimizer.lr;
    CHECK(run.epochs[0].lr == lr);
    CHECK(run.epochs[1].lr == lr);
    CHECK(run.epochs[2].lr == lr * 0.5);
    CHECK(run.epochs[4].lr == lr * 0.25);
    REQUIRE(run.detection_snapshot.has_value());
    CHECK(run.detection_snapshot->epoch() == 1);
    CHECK(run.final_snapshot->epoch() == 4);
  }

  TEST_CASE("evaluation cadence") {
    auto c = test::small_config();
    c.train.epochs = 4;
    c.train.eval_every = 2;
    const auto data = prepare_data(c);
    const auto run = train_one(c, data.train.data(), data.test.data(), 1);
    CHECK(std::isnan(run.epochs[0].eval[0]));
    CHECK(!std::isnan(run.epochs[1].eval[0]));
    CHECK(!std::isnan(run.epochs[3].eval[1]));
  }

  TEST_CASE("same config and seed give identical metrics") {
    auto c = test::small_config();
    c.weighting.scheme = Scheme::Dwa;
    c.train.repeats = 2;
    CHECK(metrics_csv(train_repeated(c)) == metrics_csv(train_repeated(c)));
  }

  TEST_CASE("non-finite loss aborts the run") {
    auto c = test::small_config();
    c.optimizer.kind = OptimizerKind::Sgd;
    c.optimizer.momentum = 0.0;
    c.optimizer.lr = 1e200;
    const auto data = prepare_data(c);
    try {
      train_one(c, data.train.data(), data.test.data(), 1);
      FAIL("expected TrainingAborted");
    } catch (const TrainingAborted& e) {
      CHECK(e.epoch() == 0);
      CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    }
    const auto r = train_repeated(c);
    CHECK(r.partial);
    CHECK(r.failures.size() == 1);
    CHECK(r.aggregate.empty());
    CHECK(aggregate_json(r)["partial"] == true);
  }

  TEST_CASE("metrics csv layout") {
    auto c = test::small_config();
    c.weighting.scheme = Scheme::Ilt;
    const auto r = train_repeated(c);
    const auto lines = split_lines(metrics_csv(r));
    CHECK(lines.size() == 1 + static_cast<std::size_t>(c.train.epochs));
    CHECK(lines[0].rfind("run,seed,epoch,lr,task0_train_loss,task1_train_loss,task0_accuracy,task1_mse,",
                         0) == 0);
    CHECK(lines[0].find("s_median0") != std::string::npos);
  }
}
