#include <doctest.h>

#include <cmath>

#include "mmcp/core/rng.hpp"
#include "mmcp/nn/params.hpp"
#include "mmcp/nn/tape.hpp"
#include "oracles.hpp"

using mmcp::Rng;
using mmcp::nn::Tape;
using Matd = mmcp::nn::Mat<double>;

namespace {

Matd random_mat(Rng& rng, int rows, int cols, double scale = 1.0) {
  Matd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal() * scale;
  return m;
}

}  // namespace

TEST_SUITE("tape") {
  TEST_CASE("forward values match Eigen arithmetic") {
    Tape<double> tape;
    Matd a = (Matd(2, 2) << 1.0, 2.0, 3.0, 4.0).finished();
    Matd b = (Matd(2, 2) << 0.5, -1.0, 2.0, 0.25).finished();
    const int na = tape.leaf(a);
    const int nb = tape.leaf(b);
    CHECK((tape.value(tape.add(na, nb)) - (a + b)).norm() == doctest::Approx(0.0));
    CHECK((tape.value(tape.matmul(na, nb)) - (a * b)).norm() == doctest::Approx(0.0));
    CHECK((tape.value(tape.hadamard(na, nb)) - a.cwiseProduct(b).eval()).norm() ==
          doctest::Approx(0.0));
    CHECK(tape.value(tape.sum_all(na))(0, 0) == doctest::Approx(10.0));
    CHECK(tape.value(tape.mean_all(na))(0, 0) == doctest::Approx(2.5));
  }

  TEST_CASE("logsumexp is max-shifted and exact") {
    Tape<double> tape;
    Matd x(3, 1);
    x << 1000.0, 999.0, 998.0;
    const int lse = tape.logsumexp(tape.leaf(x));
    const double want = 1000.0 + std::log(1.0 + std::exp(-1.0) + std::exp(-2.0));
    CHECK(tape.value(lse)(0, 0) == doctest::Approx(want).epsilon(1e-12));
  }

  TEST_CASE("abs takes the zero subgradient at the kink") {
    Tape<double> tape;
    Matd x(3, 1);
    x << -2.0, 0.0, 5.0;
    const int a = tape.leaf(x);
    const int loss = tape.sum_all(tape.abs_(a));
    CHECK(tape.value(loss)(0, 0) == 7.0);
    tape.backward(loss);
    CHECK(tape.grad(a)(0, 0) == -1.0);
    CHECK(tape.grad(a)(1, 0) == 0.0);
    CHECK(tape.grad(a)(2, 0) == 1.0);
  }

  TEST_CASE("every op passes a finite-difference gradient check") {
    Rng rng(1234);

    auto run = [&](const char* name, oracle::TapeBuilder build,
                   std::vector<Matd> leaves) {
      const auto res = oracle::gradcheck(build, std::move(leaves));
      INFO(name << ": " << res.worst);
      CHECK(res.max_rel_error < 1e-6);
    };

    run("add+scale+sub",
        [](Tape<double>& t, const std::vector<Matd>& v, std::vector<int>& ids) {
          ids = {t.leaf(v[0]), t.leaf(v[1])};
          return t.sum_all(t.sub(t.scale(t.add(ids[0], ids[1]), 1.7), ids[1]));
        },
        {random_mat(rng, 3, 2), random_mat(rng, 3, 2)});

    run("matmul chain",
        [](Tape<double>& t, const std::vector<Matd>& v, std::vector<int>& ids) {
          ids = {t.leaf(v[0]), t.leaf(v[1]), t.leaf(v[2])};
          return t.sum_all(t.matmul(t.matmul(ids[0], ids[1]), ids[2]));
        },
        {random_mat(rng, 2, 3), random_mat(rng, 3, 4), random_mat(rng, 4, 2)});

    run("hadamard+tanh+sigmoid",
        [](Tape<double>& t, const std::vector<Matd>& v, std::vector<int>& ids) {
          ids = {t.leaf(v[0]), t.leaf(v[1])};
          return t.sum_all(t.hadamard(t.tanh_(ids[0]), t.sigmoid_(ids[1])));
        },
        {random_mat(rng, 4, 3), random_mat(rng, 4, 3)});

    // Keep the abs probe away from the kink at zero where the finite
    // difference straddles the subgradient.
    Matd far(3, 2);
    far << 1.2, -0.8, 2.5, -1.9, 0.6, -3.1;
    run("abs",
        [](Tape<double>& t, const std::vector<Matd>& v, std::vector<int>& ids) {
          ids = {t.leaf(v[0])};
          return t.sum_all(t.abs_(ids[0]));
        },
        {far});

    run("add_col_broadcast",
        [](Tape<double>& t, const std::vector<Matd>& v, std::vector<int>& ids) {
          ids = {t.leaf(v[0]), t.leaf(v[1])};
          return t.sum_all(t.tanh_(t.add_col_broadcast(ids[0], ids[1])));
        },
        {random_mat(rng, 3, 5), random_mat(rng, 3, 1)});

    run("gather with padding",
        [](Tape<double>& t, const std::vector<Matd>& v, std::vector<int>& ids) {
          ids = {t.leaf(v[0])};
          const std::vector<int> idx{0, 3, -1, 2, 2, 5, -1, 1};
          return t.sum_all(t.tanh_(t.gather(ids[0], idx, 2, 4)));
        },
        {random_mat(rng, 6, 1)});

    run("reshape+concat+dot",
        [](Tape<double>& t, const std::vector<Matd>& v, std::vector<int>& ids) {
          ids = {t.leaf(v[0]), t.leaf(v[1])};
          const int flat_a = t.reshape(ids[0], 6, 1);
          const int c = t.concat_rows(flat_a, ids[1]);
          return t.dot(c, c);
        },
        {random_mat(rng, 2, 3), random_mat(rng, 3, 1)});

    run("stack_scalars+logsumexp",
        [](Tape<double>& t, const std::vector<Matd>& v, std::vector<int>& ids) {
          ids = {t.leaf(v[0]), t.leaf(v[1])};
          const int s0 = t.dot(ids[0], ids[1]);
          const int s1 = t.sum_all(ids[0]);
          const int s2 = t.mean_all(ids[1]);
          return t.logsumexp(t.stack_scalars({s0, s1, s2}));
        },
        {random_mat(rng, 4, 1), random_mat(rng, 4, 1)});

    run("l2_normalize",
        [](Tape<double>& t, const std::vector<Matd>& v, std::vector<int>& ids) {
          ids = {t.leaf(v[0]), t.leaf(v[1])};
          return t.dot(t.l2_normalize(ids[0]), t.l2_normalize(ids[1]));
        },
        {random_mat(rng, 5, 1), random_mat(rng, 5, 1)});

    run("two-layer network",
        [](Tape<double>& t, const std::vector<Matd>& v, std::vector<int>& ids) {
          ids = {t.leaf(v[0]), t.leaf(v[1]), t.leaf(v[2]), t.leaf(v[3]), t.leaf(v[4])};
          const int h = t.tanh_(t.add(t.matmul(ids[0], ids[4]), ids[1]));
          const int o = t.add(t.matmul(ids[2], h), ids[3]);
          return t.logsumexp(o);
        },
        {random_mat(rng, 4, 3), random_mat(rng, 4, 1), random_mat(rng, 3, 4),
         random_mat(rng, 3, 1), random_mat(rng, 3, 1)});
  }

  TEST_CASE("gradient accumulates when a node is used twice") {
    Tape<double> tape;
    Matd x(2, 1);
    x << 3.0, -1.0;
    const int n = tape.leaf(x);
    const int y = tape.sum_all(tape.add(n, n));
    tape.backward(y);
    CHECK(tape.grad(n)(0, 0) == doctest::Approx(2.0));
    CHECK(tape.grad(n)(1, 0) == doctest::Approx(2.0));
  }

  TEST_CASE("backward requires a scalar root") {
    Tape<double> tape;
    const int n = tape.leaf(Matd::Ones(2, 2));
    CHECK_THROWS_AS(tape.backward(n), std::invalid_argument);
  }

  TEST_CASE("constants receive no gradient") {
    Tape<double> tape;
    const int c = tape.constant(Matd::Ones(2, 1));
    const int x = tape.leaf(Matd::Ones(2, 1));
    const int y = tape.sum_all(tape.hadamard(c, x));
    tape.backward(y);
    CHECK(!tape.has_grad(c));
    CHECK(tape.has_grad(x));
  }

  TEST_CASE("float instantiation runs the same graph") {
    Tape<float> tape;
    mmcp::nn::Mat<float> x(3, 1);
    x << 1.0f, 2.0f, 3.0f;
    const int n = tape.leaf(x);
    const int loss = tape.logsumexp(tape.scale(n, 2.0f));
    tape.backward(loss);
    CHECK(std::isfinite(tape.value(loss)(0, 0)));
    CHECK(tape.grad(n).rows() == 3);
  }

  TEST_CASE("adam moves parameters against the gradient") {
    mmcp::nn::ParamStore<double> store;
    store.add("w", 2, 1);
    store.at("w").value << 1.0, -2.0;
    mmcp::nn::Adam<double> adam(0.1);
    store.at("w").grad << 0.5, -0.5;
    adam.step(store);
    CHECK(store.at("w").value(0, 0) < 1.0);
    CHECK(store.at("w").value(1, 0) > -2.0);
  }

  TEST_CASE("frozen entries stay bit identical under adam") {
    mmcp::nn::ParamStore<double> store;
    store.add("a", 2, 1);
    store.add("b", 2, 1);
    store.at("a").value << 1.0, 2.0;
    store.at("b").value << 3.0, 4.0;
    store.at("a").grad << 1.0, 1.0;
    store.at("b").grad << 1.0, 1.0;
    const Matd before = store.at("a").value;
    mmcp::nn::Adam<double> adam(0.1);
    adam.step(store, [](const std::string& name) { return name == "a"; });
    CHECK(store.at("a").value == before);
    CHECK(store.at("b").value != store.at("b").value.Constant(2, 1, 0.0));
    CHECK(store.at("b").value(0, 0) < 3.0);
  }
}
