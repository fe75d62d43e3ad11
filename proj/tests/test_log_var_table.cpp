#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "helpers.hpp"
#include "ilt/errors.hpp"
#include "ilt/log_var_table.hpp"
#include "ilt/rng.hpp"

using namespace ilt;

TEST_SUITE("ilt_params") {
  TEST_CASE("new table is zero") {
    LogVarTable t(3, 2, 1.0, 0.9);
    CHECK(t.rows() == 3);
    CHECK(t.cols() == 2);
    CHECK(t.snapshot().values().isZero(0.0));
    CHECK(t.velocities().isZero(0.0));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t k = 0; k < 2; ++k) CHECK(std::exp(t.s(i, k)) == 1.0);
    }
    CHECK_THROWS(LogVarTable(0, 2, 1.0, 0.9));
    CHECK_THROWS(LogVarTable(2, 0, 1.0, 0.9));
  }

  TEST_CASE("gather") {
    LogVarTable t(8, 2, 1.0, 0.9);
    std::vector<std::size_t> ids{0, 3, 7};
    CHECK(t.gather(ids, 1) == std::vector<double>{0.0, 0.0, 0.0});
    t.set(5, 1, 2.0);
    std::vector<std::size_t> five{5};
    CHECK(t.gather(five, 1) == std::vector<double>{2.0});
    CHECK(t.gather(five, 1) == t.gather(five, 1));
    std::vector<std::size_t> bad{8};
    CHECK_THROWS(t.gather(bad, 0));
    CHECK_THROWS(t.gather(five, 2));
    CHECK_THROWS(t.set(0, 0, 5.0));
  }

  TEST_CASE("single steps") {
    std::vector<std::size_t> id{0};
    SUBCASE("momentum 0, lr 1") {
      for (double g : {0.3, -1.5, 7.0}) {
        LogVarTable t(1, 1, 1.0, 0.0);
        std::vector<double> grad{g};
        t.sparse_step(id, 0, grad);
        CHECK(t.s(0, 0) == std::clamp(-g, -4.0, 4.0));
      }
    }
    SUBCASE("grad 10 at lr 2 clamps to the floor") {
      LogVarTable t(1, 1, 2.0, 0.9);
      std::vector<double> grad{10.0};
      t.sparse_step(id, 0, grad);
      CHECK(t.s(0, 0) == -4.0);
      CHECK(t.velocity(0, 0) == 10.0);
    }
    SUBCASE("two steps with momentum") {
      const double lr = 0.3, mu = 0.9, g = 0.5;
      LogVarTable t(1, 1, lr, mu);
      std::vector<double> grad{g};
      t.sparse_step(id, 0, grad);
      t.sparse_step(id, 0, grad);
      CHECK(t.s(0, 0) == doctest::Approx(-lr * (g + (mu * g + g))).epsilon(1e-15));
    }
  }

  TEST_CASE("step errors") {
    LogVarTable t(4, 1, 1.0, 0.9);
    std::vector<std::size_t> ids{1, 2};
    std::vector<double> short_grads{0.1};
    CHECK_THROWS(t.sparse_step(ids, 0, short_grads));
    std::vector<std::size_t> dup{1, 1};
    std::vector<double> two{0.1, 0.2};
    CHECK_THROWS(t.sparse_step(dup, 0, two));
    std::vector<double> bad{0.1, std::numeric_limits<double>::quiet_NaN()};
    try {
      t.sparse_step(ids, 0, bad);
      FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("instance 2") != std::string::npos);
    }
    CHECK(t.s(1, 0) == 0.0);
  }

  TEST_CASE("sparse steps match a per-instance dense replay") {
    const std::size_t n = 20;
    const double lr = 1.7, mu = 0.9;
    LogVarTable t(n, 2, lr, mu);
    Rng rng(31);
    std::vector<double> s(n, 0.0), v(n, 0.0);
    for (int step = 0; step < 300; ++step) {
      std::vector<std::size_t> ids;
      for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform() < 0.3) ids.push_back(i);
      }
      std::vector<double> grads(ids.size());
      for (auto& g : grads) g = 3.0 * rng.normal();
      const auto before_s = t.snapshot().values();
      const auto before_v = t.velocities();
      t.sparse_step(ids, 1, grads);
      for (std::size_t j = 0; j < ids.size(); ++j) {
        const auto i = ids[j];
        v[i] = mu * v[i] + grads[j];
        s[i] = std::min(std::max(s[i] - lr * v[i], -4.0), 4.0);
      }
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(t.s(i, 1) == s[i]);
        CHECK(t.velocity(i, 1) == v[i]);
        CHECK(t.s(i, 1) >= -4.0);
        CHECK(t.s(i, 1) <= 4.0);
        CHECK(t.s(i, 0) == 0.0);
        if (std::find(ids.begin(), ids.end(), i) == ids.end()) {
          CHECK(t.s(i, 1) == before_s(static_cast<Eigen::Index>(i), 1));
          CHECK(t.velocity(i, 1) == before_v(static_cast<Eigen::Index>(i), 1));
        }
      }
    }
  }

  TEST_CASE("never-sampled rows keep zero velocity") {
    LogVarTable t(5, 1, 1.0, 0.9);
    std::vector<std::size_t> ids{1, 3};
    std::vector<double> grads{0.2, -0.4};
    for (int i = 0; i < 5; ++i) t.sparse_step(ids, 0, grads);
    CHECK(t.velocity(0, 0) == 0.0);
    CHECK(t.velocity(2, 0) == 0.0);
    CHECK(t.velocity(4, 0) == 0.0);
  }

  TEST_CASE("clamp is a projection") {
    LogVarTable t(2, 1, 1.0, 0.0);
    t.set(0, 0, -4.0);
    t.set(1, 0, 1.25);
    const auto before = t.snapshot().values();
    std::vector<std::size_t> ids{0, 1};
    std::vector<double> zero{0.0, 0.0};
    t.sparse_step(ids, 0, zero);
    t.sparse_step(ids, 0, zero);
    CHECK(t.snapshot().values() == before);
  }

  TEST_CASE("snapshots") {
    LogVarTable t(4, 2, 1.0, 0.9);
    CHECK(t.snapshot().values().isZero(0.0));
    t.set(2, 1, 0.5);
    const auto snap = t.snapshot(3);
    t.set(2, 1, -1.0);
    CHECK(snap(2, 1) == 0.5);
    CHECK(snap.epoch() == 3);
    std::vector<std::size_t> all{0, 1, 2, 3};
    const auto now = t.snapshot();
    for (std::size_t k = 0; k < 2; ++k) CHECK(now.column(k) == t.gather(all, k));
  }

  TEST_CASE("snapshot file round trip") {
    LogVarTable t(3, 2, 1.0, 0.9);
    t.set(0, 0, 0.1);
    t.set(1, 1, -3.333333333333333);
    t.set(2, 0, 1e-17);
    const auto dir = test::temp_dir("snapshot");
    write_snapshot(t.snapshot(7), dir / "s.txt");
    const auto text = test::read_file(dir / "s.txt");
    CHECK(text.rfind("# N=3 K=2 epoch=7\n", 0) == 0);
    const auto back = read_snapshot(dir / "s.txt");
    CHECK(back.epoch() == 7);
    CHECK(back.values() == t.snapshot().values());
  }
}
