#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "hnetpp/autodiff.hpp"
#include "hnetpp/gradcheck.hpp"

namespace hnetpp {
namespace {

using G = Graph<double>;
using V = Var<double>;
using T = Tensor<double>;

T random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = T::matrix(r, c);
  for (auto& v : t.values()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

TEST(Primitives, SigmoidOfZeroIsHalf) {
  G g;
  auto y = ad::sigmoid(g.constant(T::scalar(0.0)));
  EXPECT_EQ(y.item(), 0.5);
}

TEST(Primitives, LayerNormOfConstantRowIsZero) {
  G g;
  auto y = ad::layernorm(g.constant(T::matrix(1, 6, 3.25)));
  for (double v : y.value().values()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Primitives, MatmulByIdentity) {
  G g;
  auto a = g.constant(T::matrix(2, 2, {1, 2, 3, 4}));
  auto id = g.constant(T::matrix(2, 2, {1, 0, 0, 1}));
  EXPECT_EQ(ad::matmul(a, id).value(), T::matrix(2, 2, {1, 2, 3, 4}));
}

TEST(Primitives, ShapeMismatchNamesOpAndShapes) {
  G g;
  auto a = g.constant(T::matrix(2, 3));
  auto b = g.constant(T::matrix(2, 3));
  try {
    ad::matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("[2x3]"), std::string::npos);
  }
  EXPECT_THROW(ad::add(g.constant(T::matrix(2, 3)), g.constant(T::matrix(3, 2))), ShapeError);
  std::vector<V> in{g.constant(T::matrix(2, 3)), g.constant(T::matrix(4, 3))};
  EXPECT_THROW(ad::primitive_forward<double>("mul", in), ShapeError);
  EXPECT_THROW(ad::primitive_forward<double>("frobnicate", in), ShapeError);
}

TEST(Primitives, PrimitiveDispatchCoversNamedSet) {
  Rng rng(3);
  for (std::string_view name : ad::kPrimitiveNames) {
    G g;
    std::vector<V> in;
    if (name == "matmul") {
      in = {g.leaf(random_matrix(2, 3, rng)), g.leaf(random_matrix(3, 2, rng))};
    } else if (name == "add" || name == "mul" || name == "concat") {
      in = {g.leaf(random_matrix(2, 3, rng)), g.leaf(random_matrix(2, 3, rng))};
    } else if (name == "embedding_lookup") {
      in = {g.leaf(random_matrix(4, 3, rng)), g.constant(T::row({3, 0, 1}))};
    } else if (name == "log") {
      in = {g.leaf(random_matrix(2, 3, rng, 0.5, 2.0))};
    } else {
      in = {g.leaf(random_matrix(2, 3, rng))};
    }
    V out = ad::primitive_forward<double>(name, in);
    EXPECT_GT(out.value().size(), 0u) << name;
  }
}

TEST(Backward, SigmoidAndTanhSlopesAtZero) {
  G g;
  auto x = g.leaf(T::scalar(0.0));
  g.backward(ad::sigmoid(x));
  EXPECT_DOUBLE_EQ(g.grad(x.id()).item(), 0.25);

  G h;
  auto z = h.leaf(T::scalar(0.0));
  h.backward(ad::tanh(z));
  EXPECT_DOUBLE_EQ(h.grad(z.id()).item(), 1.0);
}

TEST(Backward, RejectsNonScalarLoss) {
  G g;
  auto x = g.leaf(T::matrix(2, 2, 1.0));
  EXPECT_THROW(g.backward(ad::tanh(x)), ShapeError);
}

TEST(Backward, VisitsEachRecordedOpOnce) {
  G g;
  auto x = g.leaf(T::matrix(1, 3, 0.5));
  auto y = ad::sum(ad::mul(ad::tanh(x), ad::sigmoid(x)));
  const std::size_t before = g.size();
  g.backward(y);
  // leaf has no closure; tanh, sigmoid, mul, sum do
  EXPECT_EQ(g.backward_visits(), 4u);
  EXPECT_EQ(g.size(), before);
}

// Independent oracle: sum(A B) evaluated with plain loops, central
// differences with step 1e-5.
TEST(Backward, SumMatmulMatchesPlainFiniteDifferences) {
  Rng rng(11);
  T a = random_matrix(3, 4, rng);
  T b = random_matrix(4, 2, rng);
  auto plain = [](const T& x, const T& y) {
    double s = 0;
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        for (std::size_t k = 0; k < 4; ++k) s += x(i, k) * y(k, j);
    return s;
  };
  G g;
  auto va = g.leaf(a);
  auto vb = g.leaf(b);
  g.backward(ad::sum(ad::matmul(va, vb)));
  const double h = 1e-5;
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    T up = a, dn = a;
    up[i] += h;
    dn[i] -= h;
    const double num = (plain(up, b) - plain(dn, b)) / (2 * h);
    worst = std::max(worst, relative_error(g.grad(va.id())[i], num, 1e-8));
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    T up = b, dn = b;
    up[i] += h;
    dn[i] -= h;
    const double num = (plain(a, up) - plain(a, dn)) / (2 * h);
    worst = std::max(worst, relative_error(g.grad(vb.id())[i], num, 1e-8));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Gradcheck, GeluOnRandomVector) {
  Rng rng(5);
  auto report = gradcheck([](G&, std::span<const V> in) { return ad::sum(ad::gelu(in[0])); },
                          {random_matrix(1, 8, rng, -3, 3)}, {.step = 1e-5, .tolerance = 1e-5});
  EXPECT_TRUE(report.passed()) << report.max_rel_error;
  EXPECT_LT(report.max_rel_error, 1e-5);
}

TEST(Gradcheck, SoftmaxNll) {
  Rng rng(6);
  const std::size_t target = 7;
  auto onehot = T::matrix(1, 10);
  onehot[target] = 1.0;
  auto report = gradcheck(
      [&](G& g, std::span<const V> in) {
        return -ad::sum(ad::mul(ad::log(ad::softmax(in[0])), g.constant(onehot)));
      },
      {random_matrix(1, 10, rng, -2, 2)}, {.step = 1e-5, .tolerance = 1e-6});
  EXPECT_LT(report.max_rel_error, 1e-6);
  EXPECT_TRUE(report.passed());
}

TEST(Gradcheck, ConstantFunctionHasZeroGradient) {
  G g;
  auto x = g.leaf(T::matrix(2, 2, 1.5));
  auto c = g.constant(T::scalar(4.0));
  auto y = ad::add(ad::scale(ad::sum(x), 0.0), c);
  g.backward(y);
  for (double v : g.grad(x.id()).values()) EXPECT_EQ(v, 0.0);
  auto report = gradcheck([](G& gr, std::span<const V>) { return gr.constant(T::scalar(2.0)); },
                          {T::matrix(1, 3, 0.2)});
  EXPECT_TRUE(report.passed());
  EXPECT_EQ(report.max_rel_error, 0.0);
}

TEST(Gradcheck, FlagsWrongGradient) {
  // A deliberately wrong backward rule must be reported.
  auto bad_square = [](const V& x) {
    T out = x.value();
    for (auto& v : out.values()) v *= v;
    const std::size_t ix = x.id();
    return x.graph().record("bad", std::move(out), {ix}, [ix](G& g, std::size_t self) {
      if (auto* gx = g.grad_sink(ix)) *gx += g.grad(self);
    });
  };
  auto report = gradcheck([&](G&, std::span<const V> in) { return ad::sum(bad_square(in[0])); },
                          {T::row({0.3, 2.0})}, {.tolerance = 1e-4});
  EXPECT_FALSE(report.passed());
  EXPECT_EQ(report.flagged.size(), 2u);
}

// Every primitive against central differences on 20 random shapes. Each
// output is contracted with fixed random weights so all output elements
// contribute.
TEST(Gradcheck, AllPrimitivesOnRandomShapes) {
  using Builder = std::function<V(G&, std::span<const V>)>;
  struct Case {
    std::string name;
    std::function<std::vector<T>(std::size_t, std::size_t, Rng&)> make;
    Builder build;
  };
  auto contract = [](G& g, const V& y, std::uint64_t seed) {
    Rng r(seed);
    return ad::sum(ad::mul(y, g.constant(random_matrix(y.rows(), y.cols(), r))));
  };
  auto one = [](double lo, double hi) {
    return [lo, hi](std::size_t m, std::size_t n, Rng& rng) { return std::vector<T>{random_matrix(m, n, rng, lo, hi)}; };
  };
  auto two = [](std::size_t m, std::size_t n, Rng& rng) {
    return std::vector<T>{random_matrix(m, n, rng), random_matrix(m, n, rng)};
  };
  std::vector<Case> cases = {
      {"matmul", [](std::size_t m, std::size_t n, Rng& rng) {
         return std::vector<T>{random_matrix(m, n, rng), random_matrix(n, m + 1, rng)};
       },
       [](G&, std::span<const V> in) { return ad::matmul(in[0], in[1]); }},
      {"add", two, [](G&, std::span<const V> in) { return ad::add(in[0], in[1]); }},
      {"add_broadcast", [](std::size_t m, std::size_t n, Rng& rng) {
         return std::vector<T>{random_matrix(m, n, rng), random_matrix(1, n, rng)};
       },
       [](G&, std::span<const V> in) { return ad::add(in[0], in[1]); }},
      {"mul", two, [](G&, std::span<const V> in) { return ad::mul(in[0], in[1]); }},
      {"mul_column_broadcast", [](std::size_t m, std::size_t n, Rng& rng) {
         return std::vector<T>{random_matrix(m, n, rng), random_matrix(m, 1, rng)};
       },
       [](G&, std::span<const V> in) { return ad::mul(in[0], in[1]); }},
      {"sub", two, [](G&, std::span<const V> in) { return ad::sub(in[0], in[1]); }},
      {"concat_cols", two, [](G&, std::span<const V> in) { return ad::concat(in, 1); }},
      {"concat_rows", two, [](G&, std::span<const V> in) { return ad::concat(in, 0); }},
      {"slice_cols", one(-1, 1),
       [](G&, std::span<const V> in) { return ad::slice(in[0], 1, 0, std::max<std::size_t>(1, in[0].cols() / 2)); }},
      {"slice_rows", one(-1, 1), [](G&, std::span<const V> in) { return ad::slice(in[0], 0, in[0].rows() - 1, in[0].rows()); }},
      {"sum", one(-1, 1), [](G&, std::span<const V> in) { return ad::sum(in[0]); }},
      {"mean", one(-1, 1), [](G&, std::span<const V> in) { return ad::mean(in[0]); }},
      {"mean_axis0", one(-1, 1), [](G&, std::span<const V> in) { return ad::mean_axis(in[0], 0); }},
      {"sum_axis1", one(-1, 1), [](G&, std::span<const V> in) { return ad::sum_axis(in[0], 1); }},
      {"sigmoid", one(-4, 4), [](G&, std::span<const V> in) { return ad::sigmoid(in[0]); }},
      {"tanh", one(-3, 3), [](G&, std::span<const V> in) { return ad::tanh(in[0]); }},
      {"relu", one(0.05, 2), [](G&, std::span<const V> in) { return ad::relu(ad::scale(in[0], -1.0) + 1.0); }},
      {"gelu", one(-3, 3), [](G&, std::span<const V> in) { return ad::gelu(in[0]); }},
      {"exp", one(-2, 2), [](G&, std::span<const V> in) { return ad::exp(in[0]); }},
      {"log", one(0.2, 3), [](G&, std::span<const V> in) { return ad::log(in[0]); }},
      {"square", one(-2, 2), [](G&, std::span<const V> in) { return ad::square(in[0]); }},
      {"softmax", one(-3, 3), [](G&, std::span<const V> in) { return ad::softmax(in[0]); }},
      {"transpose", one(-1, 1), [](G&, std::span<const V> in) { return ad::transpose(in[0]); }},
      {"layernorm", [](std::size_t m, std::size_t n, Rng& rng) {
         return std::vector<T>{random_matrix(m, n + 1, rng, -2, 2), random_matrix(1, n + 1, rng, 0.5, 1.5),
                               random_matrix(1, n + 1, rng)};
       },
       [](G&, std::span<const V> in) { return ad::layernorm(in[0], in[1], in[2]); }},
      {"dropout", one(-1, 1), [](G&, std::span<const V> in) { return ad::dropout(in[0], 0.3, true); }},
      {"embedding_lookup", one(-1, 1),
       [](G&, std::span<const V> in) {
         const std::size_t r = in[0].rows();
         return ad::embedding_lookup(in[0], {r - 1, 0, r - 1, r / 2});
       }},
  };
  Rng rng(2024);
  for (const auto& c : cases) {
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t m = 1 + rng.below(4);
      const std::size_t n = 1 + rng.below(5);
      const std::uint64_t wseed = rng.next_u64();
      auto report = gradcheck(
          [&](G& g, std::span<const V> in) { return contract(g, c.build(g, in), wseed); }, c.make(m, n, rng),
          {.step = 1e-5, .tolerance = 1e-4});
      EXPECT_TRUE(report.passed()) << c.name << " " << m << "x" << n << " worst " << report.worst.rel_error
                                   << " at " << report.worst.input << "[" << report.worst.index << "]";
    }
  }
}

TEST(Invariants, SoftmaxRowsAreDistributions) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    G g;
    auto y = ad::softmax(g.constant(random_matrix(1 + rng.below(5), 1 + rng.below(12), rng, -50, 50)));
    const auto& v = y.value();
    for (std::size_t i = 0; i < v.rows(); ++i) {
      double s = 0;
      for (std::size_t j = 0; j < v.cols(); ++j) {
        EXPECT_GE(v(i, j), 0.0);
        s += v(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-9);
    }
  }
}

TEST(Invariants, SoftmaxFiniteForLargeInputs) {
  G g;
  auto y = ad::softmax(g.constant(T::row({1e3, -1e3, 999.0})));
  for (double v : y.value().values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Invariants, DropoutReplayIsBitIdentical) {
  Rng rng(1);
  T x = random_matrix(4, 7, rng);
  auto run = [&](std::uint64_t seed) {
    G g(seed);
    auto a = ad::dropout(g.constant(x), 0.5, true);
    auto b = ad::dropout(a, 0.5, true);
    return b.value();
  };
  EXPECT_EQ(run(77), run(77));
  EXPECT_FALSE(run(77) == run(78));
}

TEST(Invariants, DropoutIsIdentityAtEvalAndScalesAtTrain) {
  G g(4);
  auto x = g.constant(T::matrix(1, 1000, 1.0));
  EXPECT_EQ(ad::dropout(x, 0.25, false).id(), x.id());
  auto y = ad::dropout(x, 0.25, true);
  for (double v : y.value().values()) EXPECT_TRUE(v == 0.0 || std::abs(v - 1.0 / 0.75) < 1e-15);
}

TEST(Invariants, ParameterGradientsAccumulateAcrossGraphs) {
  ParameterStore<double> store;
  auto& p = store.add("w", T::row({1.0, 2.0}));
  for (int i = 0; i < 2; ++i) {
    G g;
    auto w = g.param(p);
    g.backward(ad::sum(ad::mul(w, w)));
  }
  EXPECT_DOUBLE_EQ(p.grad[0], 4.0);
  EXPECT_DOUBLE_EQ(p.grad[1], 8.0);
}

}  // namespace
}  // namespace hnetpp
