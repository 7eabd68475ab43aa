#include <doctest.h>

#include <cstring>
#include <sstream>

#include "passforge/error.hpp"
#include "passforge/gradcheck.hpp"
#include "passforge/rng.hpp"
#include "passforge/tensor.hpp"

using namespace passforge;
using namespace passforge::tensor;
using M = Mat<double>;
using V = Tape<double>::Var;
using gradcheck::worst_ratio;

namespace {

M random_mat(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1, double hi = 1) {
  M m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Values bounded away from zero, for kinks at the origin.
M away_from_zero(Rng& rng, Eigen::Index r, Eigen::Index c) {
  M m = random_mat(rng, r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] += m.data()[i] < 0 ? -0.05 : 0.05;
  return m;
}

// A fixed random projection to a scalar, so every output entry matters.
V project(Tape<double>& t, V x, std::uint64_t seed = 42) {
  Rng rng(seed);
  const M& X = t.value(x);
  return t.sum(t.mul(x, t.constant(random_mat(rng, X.rows(), X.cols()))));
}

}  // namespace

TEST_CASE("matmul") {
  Tape<double> t;
  Rng rng(1);
  const M x = random_mat(rng, 3, 3);
  CHECK(t.value(t.matmul(t.constant(M::Identity(3, 3)), t.constant(x))) == x);
  M a(1, 1), b(1, 1);
  a << 3;
  b << -2.5;
  CHECK(t.value(t.matmul(t.constant(a), t.constant(b)))(0, 0) == -7.5);
  const M A = random_mat(rng, 3, 4), B = random_mat(rng, 4, 2);
  const M ab = t.value(t.matmul(t.constant(A), t.constant(B)));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 2; ++j) {
      double s = 0;
      for (int k = 0; k < 4; ++k) s += A(i, k) * B(k, j);
      CHECK(ab(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  CHECK_THROWS_AS(t.matmul(t.constant(A), t.constant(A)), InputError);

  Parameter<double> pa("a", A), pb("b", B);
  CHECK(worst_ratio({&pa, &pb}, [](auto& t, auto& v) { return project(t, t.matmul(v[0], v[1])); }) <= 1);
}

TEST_CASE("row gather") {
  Tape<double> t;
  const V eye = t.constant(M::Identity(3, 3));
  const M row = t.value(t.gather_rows(eye, {0}));
  CHECK(row.rows() == 1);
  CHECK(row(0, 0) == 1);
  CHECK(row(0, 1) == 0);
  const M empty = t.value(t.gather_rows(eye, {}));
  CHECK(empty.rows() == 0);
  CHECK(empty.cols() == 3);
  CHECK_THROWS_AS(t.gather_rows(eye, {3}), InputError);

  Rng rng(2);
  Parameter<double> p("x", random_mat(rng, 4, 3));
  CHECK(worst_ratio({&p}, [](auto& t, auto& v) { return project(t, t.gather_rows(v[0], {1, 1, 3, 0})); }) <= 1);
  // Duplicate indices accumulate.
  p.zero_grad();
  Tape<double> t2;
  t2.backward(t2.sum(t2.gather_rows(t2.param(p), {2, 2})));
  CHECK(p.grad(2, 0) == 2.0);
  CHECK(p.grad(1, 0) == 0.0);
}

TEST_CASE("segment softmax") {
  Tape<double> t;
  M z(2, 1);
  z << 0, 0;
  const M half = t.value(t.segment_softmax(t.constant(z), {0, 0}, 1));
  CHECK(half(0, 0) == 0.5);
  CHECK(half(1, 0) == 0.5);
  M one(1, 1);
  one << 3.7;
  CHECK(t.value(t.segment_softmax(t.constant(one), {0}, 1))(0, 0) == 1.0);
  M two(2, 1);
  two << 2, 1;
  const M s = t.value(t.segment_softmax(t.constant(two), {0, 0}, 1));
  // 1 / (1 + e^-1) to 16 digits.
  CHECK(s(0, 0) == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(s(1, 0) == doctest::Approx(0.2689414213699951).epsilon(1e-15));

  Rng rng(3);
  const M big = random_mat(rng, 40, 1, -30, 30);
  std::vector<int> seg(40);
  for (int& g : seg) g = static_cast<int>(rng.below(7));
  const M y = t.value(t.segment_softmax(t.constant(big), seg, 7));
  std::vector<double> sums(7, 0.0);
  std::vector<int> counts(7, 0);
  for (int k = 0; k < 40; ++k) {
    sums[seg[k]] += y(k, 0);
    ++counts[seg[k]];
  }
  for (int g = 0; g < 7; ++g)
    if (counts[g]) CHECK(std::abs(sums[g] - 1.0) <= 1e-12);

  Parameter<double> p("x", random_mat(rng, 9, 1, -2, 2));
  const std::vector<int> small = {0, 2, 0, 1, 2, 2, 0, 3, 3};
  CHECK(worst_ratio({&p}, [&](auto& t, auto& v) { return project(t, t.segment_softmax(v[0], small, 5)); }) <= 1);
  CHECK_THROWS_AS(t.segment_softmax(t.constant(big), {0}, 1), InputError);
}

TEST_CASE("segment sum") {
  Tape<double> t;
  Rng rng(4);
  const M x = random_mat(rng, 6, 3);
  const M all = t.value(t.segment_sum(t.constant(x), {0, 0, 0, 0, 0, 0}, 1));
  for (int c = 0; c < 3; ++c) CHECK(all(0, c) == doctest::Approx(x.col(c).sum()).epsilon(1e-14));
  const std::vector<int> seg = {2, 0, 2, 3, 0, 2};
  const M out = t.value(t.segment_sum(t.constant(x), seg, 5));
  CHECK(out.row(1).isZero());
  CHECK(out.row(4).isZero());
  M ref = M::Zero(5, 3);
  for (int k = 0; k < 6; ++k)
    for (int c = 0; c < 3; ++c) ref(seg[k], c) += x(k, c);
  CHECK(out == ref);
  Parameter<double> p("x", x);
  CHECK(worst_ratio({&p}, [&](auto& t, auto& v) { return project(t, t.segment_sum(v[0], seg, 5)); }) <= 1);
}

TEST_CASE("mean over rows") {
  Tape<double> t;
  Rng rng(5);
  const M r = random_mat(rng, 1, 4);
  CHECK(t.value(t.mean_rows(t.constant(r))) == r);
  M two(2, 4);
  two << r, r;
  CHECK(t.value(t.mean_rows(t.constant(two))) == r);
  const M x = random_mat(rng, 5, 3);
  const M m = t.value(t.mean_rows(t.constant(x)));
  for (int c = 0; c < 3; ++c) {
    double s = 0;
    for (int k = 0; k < 5; ++k) s += x(k, c);
    CHECK(m(0, c) == doctest::Approx(s / 5).epsilon(1e-14));
  }
  M none(0, 3);
  CHECK_THROWS_AS(t.mean_rows(t.constant(none)), InputError);
  Parameter<double> p("x", x);
  CHECK(worst_ratio({&p}, [](auto& t, auto& v) { return project(t, t.mean_rows(v[0])); }) <= 1);
}

TEST_CASE("elementwise and structural ops") {
  Tape<double> t;
  Rng rng(6);
  const M z = M::Zero(2, 3);
  CHECK(t.value(t.relu(t.constant(z))).isZero());
  CHECK(t.value(t.elu(t.constant(z))).isZero());
  CHECK(t.value(t.scale(t.constant(z), 4.0)).isZero());
  const M x = random_mat(rng, 2, 3);
  CHECK(t.value(t.add(t.constant(x), t.constant(z))) == x);
  CHECK(t.value(t.add_row(t.constant(x), t.constant(M::Zero(1, 3)))) == x);
  CHECK(t.value(t.concat_cols({t.constant(x)})) == x);
  CHECK(t.value(t.concat_rows({t.constant(x), t.constant(M::Zero(0, 3))})) == x);
  CHECK(t.value(t.slice_cols(t.constant(x), 0, 3)) == x);
  const M sm = t.value(t.softmax(t.constant(z)));
  CHECK(sm(1, 2) == doctest::Approx(1.0 / 3).epsilon(1e-15));
  CHECK_THROWS_AS(t.add(t.constant(x), t.constant(M::Zero(3, 2))), InputError);
  CHECK_THROWS_AS(t.add_row(t.constant(x), t.constant(M::Zero(2, 3))), InputError);

  Parameter<double> a("a", away_from_zero(rng, 3, 4)), b("b", random_mat(rng, 3, 4));
  Parameter<double> bias("bias", random_mat(rng, 1, 4)), w("w", random_mat(rng, 3, 1));
  CHECK(worst_ratio({&a}, [](auto& t, auto& v) { return project(t, t.relu(v[0])); }) <= 1);
  CHECK(worst_ratio({&a}, [](auto& t, auto& v) { return project(t, t.elu(v[0])); }) <= 1);
  CHECK(worst_ratio({&a, &b}, [](auto& t, auto& v) { return project(t, t.add(v[0], v[1])); }) <= 1);
  CHECK(worst_ratio({&a, &b}, [](auto& t, auto& v) { return project(t, t.mul(v[0], v[1])); }) <= 1);
  CHECK(worst_ratio({&a, &bias}, [](auto& t, auto& v) { return project(t, t.add_row(v[0], v[1])); }) <= 1);
  CHECK(worst_ratio({&a}, [](auto& t, auto& v) { return project(t, t.scale(v[0], -1.5)); }) <= 1);
  CHECK(worst_ratio({&a, &w}, [](auto& t, auto& v) { return project(t, t.row_scale(v[0], v[1])); }) <= 1);
  CHECK(worst_ratio({&a, &b}, [](auto& t, auto& v) { return project(t, t.concat_cols({v[1], v[0], v[1]})); }) <= 1);
  CHECK(worst_ratio({&a, &b}, [](auto& t, auto& v) { return project(t, t.concat_rows({v[1], v[0]})); }) <= 1);
  CHECK(worst_ratio({&a}, [](auto& t, auto& v) { return project(t, t.slice_cols(v[0], 1, 2)); }) <= 1);
  CHECK(worst_ratio({&a}, [](auto& t, auto& v) { return project(t, t.slice_rows(v[0], 1, 2)); }) <= 1);
  CHECK(worst_ratio({&a}, [](auto& t, auto& v) { return project(t, t.softmax(v[0])); }) <= 1);
  CHECK(worst_ratio({&a, &b},
                    [](auto& t, auto& v) { return project(t, t.select_rows({true, false, true}, v[0], v[1])); }) <= 1);
}

TEST_CASE("losses") {
  Tape<double> t;
  Rng rng(7);
  M logits = M::Zero(1, 4);
  M uniform = M::Constant(1, 4, 0.25);
  CHECK(t.value(t.cross_entropy_soft(t.constant(logits), uniform))(0, 0) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-15));
  const M x = random_mat(rng, 2, 3);
  CHECK(t.value(t.mse(t.constant(x), x))(0, 0) == 0.0);

  M target = random_mat(rng, 2, 5, 0.0, 1.0);
  for (int r = 0; r < 2; ++r) target.row(r) /= target.row(r).sum();
  Parameter<double> l("l", random_mat(rng, 2, 5, -3, 3));
  CHECK(worst_ratio({&l}, [&](auto& t, auto& v) { return t.cross_entropy_soft(v[0], target); }) <= 1);
  const M y = random_mat(rng, 2, 5);
  CHECK(worst_ratio({&l}, [&](auto& t, auto& v) { return t.mse(v[0], y); }) <= 1);
}

TEST_CASE("backward") {
  Rng rng(8);
  Parameter<double> p("x", random_mat(rng, 3, 2));
  {
    Tape<double> t;
    t.backward(t.sum(t.param(p)));
    CHECK(p.grad == M::Ones(3, 2));
  }
  p.zero_grad();
  {
    Tape<double> t;
    t.backward(t.mse(t.param(p), p.value));
    CHECK(p.grad.isZero());
  }
  {
    Tape<double> t;
    const V m = t.constant(M::Zero(2, 2));
    CHECK_THROWS_AS(t.backward(m), InputError);
  }

  // Identical tapes give bit-identical gradients.
  Parameter<double> w("w", random_mat(rng, 2, 4));
  auto run = [&] {
    w.zero_grad();
    p.zero_grad();
    Tape<double> t;
    const V h = t.elu(t.matmul(t.param(p), t.param(w)));
    const V s = t.segment_softmax(t.slice_cols(h, 0, 1), {0, 1, 0}, 2);
    t.backward(t.sum(t.row_scale(h, s)));
    return std::make_pair(p.grad, w.grad);
  };
  const auto first = run();
  const auto second = run();
  CHECK(std::memcmp(first.first.data(), second.first.data(), sizeof(double) * 6) == 0);
  CHECK(std::memcmp(first.second.data(), second.second.data(), sizeof(double) * 8) == 0);
}

TEST_CASE("single precision tape") {
  Tape<float> t;
  Mat<float> a = Mat<float>::Constant(2, 2, 0.5f);
  Parameter<float> p("a", a);
  t.backward(t.sum(t.matmul(t.param(p), t.constant(a))));
  CHECK(p.grad(0, 0) == doctest::Approx(1.0f));
}

TEST_CASE("checkpoint round trip") {
  Rng rng(9);
  std::vector<NamedTensor> ts;
  for (int i = 0; i < 4; ++i) {
    NamedTensor t{"layer" + std::to_string(i), {static_cast<std::uint64_t>(i + 1), 3}, {}};
    for (std::uint64_t k = 0; k < t.shape[0] * 3; ++k) t.data.push_back(rng.uniform(-1e3, 1e3) / 7.0);
    ts.push_back(t);
  }
  ts[0].data[0] = -0.0;
  ts.push_back({"scalar", {}, {3.25}});
  std::stringstream buf;
  write_checkpoint(buf, ts);
  const std::string bytes = buf.str();
  CHECK(bytes.compare(0, 8, std::string("PFCKPT\0\0", 8)) == 0);
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);
  std::stringstream in(bytes);
  const auto back = read_checkpoint(in);
  REQUIRE(back.size() == ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) {
    CHECK(back[i].name == ts[i].name);
    CHECK(back[i].shape == ts[i].shape);
    REQUIRE(back[i].data.size() == ts[i].data.size());
    CHECK(std::memcmp(back[i].data.data(), ts[i].data.data(), ts[i].data.size() * sizeof(double)) == 0);
  }

  Parameter<double> p("w", random_mat(rng, 2, 3));
  Parameter<double> q("w", M::Zero(2, 3));
  assign_named(q, to_named(p));
  CHECK(q.value == p.value);
  Parameter<double> wrong("w", M::Zero(3, 2));
  CHECK_THROWS_AS(assign_named(wrong, to_named(p)), DataError);

  auto reject = [](std::string b) {
    std::stringstream s(b);
    CHECK_THROWS_AS(read_checkpoint(s), DataError);
  };
  reject("");
  reject("PFCKPX" + bytes.substr(6));
  std::string bad_version = bytes;
  bad_version[8] = 2;
  reject(bad_version);
  reject(bytes.substr(0, bytes.size() - 3));
  reject(bytes + "x");
}
