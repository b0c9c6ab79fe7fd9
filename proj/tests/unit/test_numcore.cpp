#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "prism/adam.hpp"
#include "prism/csv.hpp"
#include "prism/errors.hpp"
#include "prism/gradcheck.hpp"
#include "prism/matrix.hpp"
#include "prism/rng.hpp"
#include "prism/tensor_io.hpp"

using namespace prism;
using namespace prism::num;

namespace {

// Independent oracle: naive triple loop, no shortcuts.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

Matrix random_matrix(std::size_t r, std::size_t c, SplitRng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("matmul identity") {
  Matrix eye{{1, 0}, {0, 1}};
  Matrix b{{3, 4}, {5, 6}};
  CHECK(matmul(eye, b) == b);
}

TEST_CASE("matmul dot product") {
  Matrix a{{1, 2}};
  Matrix b{{3}, {4}};
  Matrix r = matmul(a, b);
  CHECK(r.rows() == 1);
  CHECK(r.cols() == 1);
  CHECK(r(0, 0) == 11.0);
}

TEST_CASE("matmul matches triple-loop oracle exactly") {
  SplitRng rng(42);
  Matrix a = random_matrix(3, 4, rng);
  Matrix b = random_matrix(4, 2, rng);
  CHECK(max_abs_diff(matmul(a, b), matmul_oracle(a, b)) == 0.0);
}

TEST_CASE("matmul shape mismatch throws") {
  Matrix a(2, 3), b(2, 3);
  CHECK_THROWS_AS(matmul(a, b), DimError);
}

TEST_CASE("matmul associativity on random conformable triples") {
  SplitRng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    SplitRng t = rng.split(trial);
    Matrix a = random_matrix(3, 5, t);
    Matrix b = random_matrix(5, 4, t);
    Matrix c = random_matrix(4, 2, t);
    Matrix left = matmul(matmul(a, b), c);
    Matrix right = matmul(a, matmul(b, c));
    double scale = std::max(1.0, max_abs(left));
    CHECK(max_abs_diff(left, right) / scale < 1e-9);
  }
}

TEST_CASE("xavier bounds") {
  SplitRng rng(0);
  Matrix one = xavier_uniform_init(1, 1, rng);
  CHECK(std::abs(one(0, 0)) <= std::sqrt(3.0));

  Matrix m = xavier_uniform_init(4, 2, rng);
  for (double v : m.data()) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("xavier empirical mean near zero") {
  SplitRng rng(0);
  Matrix m = xavier_uniform_init(100, 100, rng);
  double sum = 0.0;
  for (double v : m.data()) sum += v;
  CHECK(std::abs(sum / 10000.0) < 0.01);
}

TEST_CASE("xavier is deterministic and in-bound across seeds") {
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    SplitRng rng1(seed), rng2(seed);
    Matrix a = xavier_uniform_init(7, 3, rng1);
    Matrix b = xavier_uniform_init(7, 3, rng2);
    CHECK(a == b);
    double bound = std::sqrt(6.0 / 10.0);
    for (double v : a.data()) CHECK(std::abs(v) <= bound);
  }
}

TEST_CASE("xavier zero dimension throws") {
  SplitRng rng(1);
  CHECK_THROWS_AS(xavier_uniform_init(0, 3, rng), DimError);
}

TEST_CASE("adam zero gradient is the identity") {
  ParamTensor p("p", Matrix{{1.5, -2.0}, {0.25, 3.0}});
  Matrix before = p.value;
  AdamState adam({.lr = 0.1});
  std::vector<ParamTensor*> params{&p};
  adam.step(params);
  adam.step(params);
  CHECK(p.value == before);
}

TEST_CASE("adam first step moves by about lr") {
  ParamTensor p("p", Matrix(1, 1));
  p.grad(0, 0) = 1.0;
  AdamState adam({.lr = 0.1});
  std::vector<ParamTensor*> params{&p};
  adam.step(params);
  // Bias-corrected first step: -lr * 1 / (1 + eps).
  CHECK(p.value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("adam matches scalar re-implementation over steps") {
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 0.7;
  ParamTensor p("p", Matrix{{0.3}});
  AdamState adam({.lr = lr, .beta1 = b1, .beta2 = b2, .epsilon = eps});
  std::vector<ParamTensor*> params{&p};

  double x = 0.3, m = 0.0, v = 0.0;
  for (int t = 1; t <= 5; ++t) {
    p.zero_grad();
    p.grad(0, 0) = g;
    adam.step(params);

    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    double mhat = m / (1 - std::pow(b1, t));
    double vhat = v / (1 - std::pow(b2, t));
    x -= lr * mhat / (std::sqrt(vhat) + eps);
    CHECK(p.value(0, 0) == doctest::Approx(x).epsilon(1e-12));
  }
}

TEST_CASE("adam rejects NaN gradients naming the parameter") {
  ParamTensor p("attention.v", Matrix{{1.0}});
  p.grad(0, 0) = std::nan("");
  AdamState adam;
  std::vector<ParamTensor*> params{&p};
  try {
    adam.step(params);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("attention.v") != std::string::npos);
  }
}

TEST_CASE("finite differences on a quadratic are near exact") {
  ParamTensor x("x", Matrix{{0.9, -1.4, 2.2}});
  auto loss = [&] {
    double s = 0.0;
    for (double v : x.value.data()) s += 0.5 * v * v;
    return s;
  };
  x.grad = x.value;  // analytic gradient of 0.5||x||^2
  std::vector<ParamTensor*> params{&x};
  CHECK(finite_diff_check(loss, params) < 1e-8);
}

TEST_CASE("finite differences flag a corrupted gradient") {
  ParamTensor x("x", Matrix{{0.9, -1.4, 2.2}});
  auto loss = [&] {
    double s = 0.0;
    for (double v : x.value.data()) s += 0.5 * v * v;
    return s;
  };
  x.grad = x.value;
  for (double& g : x.grad.data()) g *= 2.0;
  std::vector<ParamTensor*> params{&x};
  CHECK(finite_diff_check(loss, params) > 0.4);
}

TEST_CASE("split rng children ignore parent draw position") {
  SplitRng a(123), b(123);
  (void)a.next_u64();
  (void)a.next_u64();
  SplitRng child_a = a.split("stage");
  SplitRng child_b = b.split("stage");
  CHECK(child_a.next_u64() == child_b.next_u64());

  SplitRng other = b.split("other");
  CHECK(child_b.next_u64() != other.next_u64());
}

TEST_CASE("rng uniform stays in range") {
  SplitRng rng(5);
  for (int i = 0; i < 1000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("tensor blob round trip") {
  SplitRng rng(9);
  Matrix m = random_matrix(5, 3, rng);
  std::stringstream buf;
  write_tensor(buf, m);
  Matrix back = read_tensor(buf, "test");
  CHECK(back == m);
}

TEST_CASE("tensor blob rejects bad magic") {
  std::stringstream buf;
  buf << "NOPE garbage";
  CHECK_THROWS_AS(read_tensor(buf, "test"), IoError);
}

TEST_CASE("archive round trip preserves names and order") {
  SplitRng rng(11);
  TensorArchive archive;
  archive.add("alpha", random_matrix(2, 2, rng));
  archive.add("beta", random_matrix(1, 4, rng));

  auto path = std::filesystem::temp_directory_path() / "prism_test.archive";
  save_archive(path, archive);
  TensorArchive back = load_archive(path);
  REQUIRE(back.entries().size() == 2);
  CHECK(back.entries()[0].first == "alpha");
  CHECK(back.entries()[1].first == "beta");
  CHECK(back.get("beta") == archive.get("beta"));
  CHECK_THROWS_AS(back.get("gamma"), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("csv escaping and parsing round trip") {
  CsvWriter w;
  w.row({"id", "note"});
  w.row({"a,b", "say \"hi\"\nthere"});
  CsvTable t = parse_csv(w.str(), "test");
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "a,b");
  CHECK(t.rows[0][1] == "say \"hi\"\nthere");
}

TEST_CASE("doubles render shortest round-trip form") {
  CHECK(parse_double(format_double(0.1), "t") == 0.1);
  CHECK(parse_double(format_double(1.0 / 3.0), "t") == 1.0 / 3.0);
  CHECK(format_double(2.0) == "2");
}
