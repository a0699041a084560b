#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "reckon/gradcheck.hpp"
#include "reckon/ops.hpp"
#include "reckon/rng.hpp"
#include "reckon/tape.hpp"
#include "reckon/tensor.hpp"

using namespace reckon;
using namespace reckon::ad;

namespace {

Tensor rand_tensor(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(std::move(shape), std::move(v));
}

// Reduces an op output to a scalar with fixed random weights so every output
// element contributes a distinct gradient path.
Tensor weighted_sum(const Tensor& t, const Tensor& w) { return sum_all(mul(t, w)); }

// Hessian-vector probe: analytic d/dx of h(x) = sum(w . dL/dx) using two
// sweeps of one tape, compared against central differences of h.
double second_order_fd_check(const std::function<Tensor(const Tensor&)>& loss, const Tensor& x0,
                             const Tensor& w, double eps) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor l = loss(x0);
    std::vector<Tensor> wrt{x0};
    std::vector<Tensor> g = tape.gradients(l, wrt, true);
    Tensor h = weighted_sum(g[0], w);
    analytic = tape.gradients(h, wrt, false);
  }
  auto h_value = [&](const Tensor& x) {
    Tape tape;
    TapeScope scope(tape);
    Tensor l = loss(x);
    std::vector<Tensor> wrt{x};
    std::vector<Tensor> g = tape.gradients(l, wrt, false);
    NoGradScope ng;
    return weighted_sum(g[0], w).item();
  };
  double max_rel = 0.0;
  Tensor x = x0;
  for (long c = 0; c < x.numel(); ++c) {
    double* p = x.raw() + c;
    const double orig = *p;
    *p = orig + eps;
    const double hp = h_value(x);
    *p = orig - eps;
    const double hm = h_value(x);
    *p = orig;
    const double central = (hp - hm) / (2.0 * eps);
    const double rel = std::abs(analytic[0].raw()[c] - central) / (std::abs(central) + 1e-8);
    if (rel > max_rel) max_rel = rel;
  }
  return max_rel;
}

}  // namespace

TEST_CASE("tensor factories and accessors") {
  Tensor z = Tensor::zeros({2, 3});
  CHECK(z.numel() == 6);
  CHECK(z.dim(-1) == 3);
  for (double v : z.data()) CHECK(v == 0.0);

  Tensor s = Tensor::scalar(4.25);
  CHECK(s.ndim() == 0);
  CHECK(s.item() == 4.25);

  CHECK_THROWS(Tensor::from_data({2, 2}, {1.0, 2.0, 3.0}));
}

TEST_CASE("matmul maps identity to itself") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::from_data({2, 2}, {1, 0, 0, 1});
  Tensor out = matmul(a, eye);
  for (long i = 0; i < 4; ++i) CHECK(out.raw()[i] == doctest::Approx(a.raw()[i]).epsilon(1e-15));
}

TEST_CASE("matmul against a hand-computed product") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor out = matmul(a, b);
  CHECK(out.raw()[0] == doctest::Approx(58));
  CHECK(out.raw()[1] == doctest::Approx(64));
  CHECK(out.raw()[2] == doctest::Approx(139));
  CHECK(out.raw()[3] == doctest::Approx(154));
}

TEST_CASE("softmax of equal logits is uniform") {
  Tensor out = softmax_last(Tensor::from_data({2}, {0, 0}));
  CHECK(out.raw()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(out.raw()[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax rows are probability vectors") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = rand_tensor(rng, {3, 7}, -30.0, 30.0);
    Tensor p = softmax_last(x);
    for (long r = 0; r < 3; ++r) {
      double s = 0.0;
      for (long c = 0; c < 7; ++c) {
        double v = p.raw()[r * 7 + c];
        CHECK(v >= 0.0);
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("cross entropy of uniform logits is log vocab size") {
  Tensor logits = Tensor::zeros({1, 4});
  std::vector<int> target{2};
  Tensor loss = cross_entropy_from_logits(logits, target);
  CHECK(loss.item() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("cross entropy gradient is softmax minus one-hot") {
  Tape tape;
  TapeScope scope(tape);
  Tensor logits = Tensor::zeros({1, 4});
  std::vector<int> target{2};
  Tensor loss = cross_entropy_from_logits(logits, target);
  std::vector<Tensor> wrt{logits};
  std::vector<Tensor> g = tape.gradients(loss, wrt, false);
  const double expect[4] = {0.25, 0.25, -0.75, 0.25};
  for (long i = 0; i < 4; ++i) CHECK(g[0].raw()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("d/dx of x squared at 3 is 6") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::scalar(3.0);
  Tensor y = mul(x, x);
  std::vector<Tensor> wrt{x};
  std::vector<Tensor> g = tape.gradients(y, wrt, false);
  CHECK(g[0].item() == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("second derivative of x cubed at 2 is 12") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::scalar(2.0);
  Tensor y = mul(mul(x, x), x);
  std::vector<Tensor> wrt{x};
  std::vector<Tensor> g1 = tape.gradients(y, wrt, true);
  std::vector<Tensor> g2 = tape.gradients(g1[0], wrt, false);
  CHECK(std::abs(g2[0].item() - 12.0) < 1e-8);
}

TEST_CASE("nested gradients match analytic second derivatives of polynomials") {
  // p(x) = 2x^4 - 3x^3 + x - 5, p''(x) = 24x^2 - 18x
  for (double x0 : {-1.5, -0.3, 0.8, 2.0}) {
    Tape tape;
    TapeScope scope(tape);
    Tensor x = Tensor::scalar(x0);
    Tensor x2 = mul(x, x);
    Tensor x3 = mul(x2, x);
    Tensor x4 = mul(x3, x);
    Tensor p = add(sub(mul_scalar(x4, 2.0), mul_scalar(x3, 3.0)), add_scalar(x, -5.0));
    std::vector<Tensor> wrt{x};
    std::vector<Tensor> g1 = tape.gradients(p, wrt, true);
    std::vector<Tensor> g2 = tape.gradients(g1[0], wrt, false);
    CHECK(std::abs(g2[0].item() - (24.0 * x0 * x0 - 18.0 * x0)) < 1e-8);
  }
}

TEST_CASE("second derivative of tanh matches closed form") {
  const double x0 = 0.7;
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::scalar(x0);
  Tensor y = tanh(x);
  std::vector<Tensor> wrt{x};
  std::vector<Tensor> g1 = tape.gradients(y, wrt, true);
  std::vector<Tensor> g2 = tape.gradients(g1[0], wrt, false);
  const double t = std::tanh(x0);
  CHECK(g2[0].item() == doctest::Approx(-2.0 * t * (1.0 - t * t)).epsilon(1e-12));
}

TEST_CASE("gradients flow to both uses of a shared input") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::scalar(1.5);
  Tensor y = add(mul(x, x), x);  // y = x^2 + x, dy/dx = 2x + 1
  std::vector<Tensor> wrt{x};
  std::vector<Tensor> g = tape.gradients(y, wrt, false);
  CHECK(g[0].item() == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("unreached parameters get zero gradients") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::scalar(2.0);
  Tensor unused = Tensor::from_data({2}, {1.0, 1.0});
  Tensor y = mul(x, x);
  std::vector<Tensor> wrt{x, unused};
  std::vector<Tensor> g = tape.gradients(y, wrt, false);
  CHECK(g[1].shape() == Shape{2});
  CHECK(g[1].raw()[0] == 0.0);
  CHECK(g[1].raw()[1] == 0.0);
}

TEST_CASE("backward errors on a non-scalar output") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::from_data({2}, {1.0, 2.0});
  Tensor y = mul(x, x);
  std::vector<Tensor> wrt{x};
  CHECK_THROWS_WITH_AS(tape.gradients(y, wrt, false), doctest::Contains("rank-0"),
                       std::runtime_error);
}

TEST_CASE("a consumed tape rejects a second sweep") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::scalar(2.0);
  Tensor y = mul(x, x);
  std::vector<Tensor> wrt{x};
  tape.gradients(y, wrt, false);
  CHECK_THROWS_WITH_AS(tape.gradients(y, wrt, false), doctest::Contains("consumed"),
                       std::runtime_error);
}

TEST_CASE("create_graph retains the tape for another sweep") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::scalar(2.0);
  Tensor y = mul(x, x);
  std::vector<Tensor> wrt{x};
  std::vector<Tensor> g1 = tape.gradients(y, wrt, true);
  std::vector<Tensor> g2 = tape.gradients(y, wrt, true);
  CHECK(g1[0].item() == doctest::Approx(4.0));
  CHECK(g2[0].item() == doctest::Approx(4.0));
}

TEST_CASE("detach cuts gradient flow") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::scalar(3.0);
  Tensor y = mul(detach(mul(x, x)), x);  // treated as 9 * x
  std::vector<Tensor> wrt{x};
  std::vector<Tensor> g = tape.gradients(y, wrt, false);
  CHECK(g[0].item() == doctest::Approx(9.0).epsilon(1e-14));
}

TEST_CASE("ops outside any tape do not record") {
  Tensor x = Tensor::scalar(2.0);
  Tensor y = mul(x, x);
  CHECK(y.owner() == nullptr);
  CHECK(y.item() == doctest::Approx(4.0));
}

TEST_CASE("no-grad scope suppresses recording") {
  Tape tape;
  TapeScope scope(tape);
  Tensor x = Tensor::scalar(2.0);
  Tensor y;
  {
    NoGradScope ng;
    y = mul(x, x);
  }
  CHECK(y.owner() == nullptr);
  CHECK(tape.size() == 0);
}

TEST_CASE("shared parameters stay untouched when used on a tape") {
  Tensor theta = Tensor::from_data({2}, {1.0, 2.0});
  std::vector<double> before(theta.data().begin(), theta.data().end());
  Tape tape;
  TapeScope scope(tape);
  Tensor y = sum_all(mul(theta, theta));
  std::vector<Tensor> wrt{theta};
  tape.gradients(y, wrt, false);
  CHECK(theta.owner() == nullptr);
  CHECK(theta.raw()[0] == before[0]);
  CHECK(theta.raw()[1] == before[1]);
}

TEST_CASE("elementwise broadcasting shapes and gradients") {
  Tape tape;
  TapeScope scope(tape);
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({3}, {10, 20, 30});
  Tensor c = add(a, b);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.raw()[0] == 11);
  CHECK(c.raw()[5] == 36);
  std::vector<Tensor> wrt{a, b};
  std::vector<Tensor> g = tape.gradients(sum_all(c), wrt, false);
  CHECK(g[0].shape() == Shape{2, 3});
  CHECK(g[1].shape() == Shape{3});
  for (long i = 0; i < 3; ++i) CHECK(g[1].raw()[i] == doctest::Approx(2.0));
}

TEST_CASE("scalar broadcast against any rank") {
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor s = Tensor::scalar(10.0);
  Tensor out = mul(a, s);
  CHECK(out.raw()[3] == doctest::Approx(40.0));
}

TEST_CASE("shape mismatch raises an error naming both shapes") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b = Tensor::from_data({2}, {1.0, 2.0});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,3]"), std::runtime_error);
}

TEST_CASE("concat and slice round-trip with gradients") {
  Tape tape;
  TapeScope scope(tape);
  Tensor a = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from_data({2, 1}, {5, 6});
  std::vector<Tensor> parts{a, b};
  Tensor c = concat(parts, 1);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.raw()[2] == 5);
  Tensor back = slice(c, 1, 2, 1);
  CHECK(back.raw()[0] == 5);
  CHECK(back.raw()[1] == 6);
  std::vector<Tensor> wrt{a, b};
  std::vector<Tensor> g = tape.gradients(sum_all(mul(back, back)), wrt, false);
  CHECK(g[0].raw()[0] == 0.0);  // a does not feed the sliced column
  CHECK(g[1].raw()[0] == doctest::Approx(10.0));
}

TEST_CASE("embedding gathers rows and scatter-add is its adjoint") {
  Tape tape;
  TapeScope scope(tape);
  Tensor table = Tensor::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
  std::vector<int> ids{2, 0, 2};
  Tensor rows = embedding(table, ids);
  CHECK(rows.shape() == Shape{3, 2});
  CHECK(rows.raw()[0] == 5);
  CHECK(rows.raw()[2] == 1);
  std::vector<Tensor> wrt{table};
  std::vector<Tensor> g = tape.gradients(sum_all(rows), wrt, false);
  // Row 2 was gathered twice, row 1 never.
  CHECK(g[0].raw()[0] == doctest::Approx(1.0));
  CHECK(g[0].raw()[2] == doctest::Approx(0.0));
  CHECK(g[0].raw()[4] == doctest::Approx(2.0));
}

TEST_CASE("take_last picks per-row entries over the final axis") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  std::vector<int> ids{2, 0};
  Tensor out = take_last(a, ids);
  CHECK(out.shape() == Shape{2});
  CHECK(out.raw()[0] == 3);
  CHECK(out.raw()[1] == 4);
}

TEST_CASE("reductions over chosen axes") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  std::array<long, 1> ax0{0};
  Tensor s0 = sum(a, ax0, false);
  CHECK(s0.shape() == Shape{3});
  CHECK(s0.raw()[0] == 5);
  std::array<long, 1> ax1{1};
  Tensor m1 = mean(a, ax1, true);
  CHECK(m1.shape() == Shape{2, 1});
  CHECK(m1.raw()[0] == doctest::Approx(2.0));
  CHECK(sum_all(a).item() == doctest::Approx(21.0));
  CHECK(mean_all(a).item() == doctest::Approx(3.5));
}

TEST_CASE("swap_axes and transpose move data correctly") {
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor t = transpose(a);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.raw()[1] == 4);
  Tensor b = Tensor::from_data({2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
  Tensor sw = swap_axes(b, 0, 2);
  CHECK(sw.raw()[1] == 4);  // [0,0,1] <- [1,0,0]
}

TEST_CASE("batched matmul broadcasts a rank-2 operand") {
  Tensor a = Tensor::from_data({2, 2, 2}, {1, 0, 0, 1, 2, 0, 0, 2});
  Tensor b = Tensor::from_data({2, 2}, {1, 2, 3, 4});
  Tensor out = matmul(a, b);
  CHECK(out.shape() == Shape{2, 2, 2});
  CHECK(out.raw()[0] == 1);
  CHECK(out.raw()[4] == 2);
  CHECK(out.raw()[7] == 8);

  Tape tape;
  TapeScope scope(tape);
  Tensor a2 = Tensor::from_data({2, 2, 2}, {1, 0, 0, 1, 2, 0, 0, 2});
  Tensor out2 = matmul(a2, b);
  std::vector<Tensor> wrt{b};
  std::vector<Tensor> g = tape.gradients(sum_all(out2), wrt, false);
  CHECK(g[0].shape() == Shape{2, 2});  // batch contributions reduced
  CHECK(g[0].raw()[0] == doctest::Approx(3.0));
}

TEST_CASE("layer normalization is invariant to constant shifts") {
  Rng rng(5);
  Tensor x = rand_tensor(rng, {2, 6}, -2.0, 2.0);
  Tensor gain = Tensor::full({6}, 1.3);
  Tensor bias = Tensor::full({6}, 0.2);
  Tensor w = rand_tensor(rng, {2, 6}, -1.0, 1.0);

  Tape tape;
  TapeScope scope(tape);
  Tensor c = Tensor::scalar(0.0);
  Tensor shifted = add(x, c);
  Tensor loss = weighted_sum(layer_norm(shifted, gain, bias), w);
  std::vector<Tensor> wrt{c};
  std::vector<Tensor> g = tape.gradients(loss, wrt, false);
  CHECK(std::abs(g[0].item()) < 1e-8);
}

TEST_CASE("every primitive matches central finite differences") {
  const double tol = 1e-5;
  const double eps = 1e-5;
  int seed_base = 100;
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(static_cast<std::uint64_t>(seed_base + trial));
    Tensor a = rand_tensor(rng, {3, 4}, -1.5, 1.5);
    Tensor b = rand_tensor(rng, {3, 4}, -1.5, 1.5);
    Tensor pos = rand_tensor(rng, {3, 4}, 0.5, 2.0);
    Tensor w = rand_tensor(rng, {3, 4}, -1.0, 1.0);
    Tensor wrow = rand_tensor(rng, {3, 1}, -1.0, 1.0);
    Tensor wmat = rand_tensor(rng, {3, 3}, -1.0, 1.0);

    auto check1 = [&](const char* name, const ScalarFn& f, std::span<const Tensor> params) {
      const double err = finite_difference_check(f, params, eps);
      INFO(name << " trial " << trial);
      CHECK(err < tol);
    };

    std::vector<Tensor> ab{a, b};
    check1("add", [&](std::span<const Tensor> p) { return weighted_sum(add(p[0], p[1]), w); }, ab);
    check1("sub", [&](std::span<const Tensor> p) { return weighted_sum(sub(p[0], p[1]), w); }, ab);
    check1("mul", [&](std::span<const Tensor> p) { return weighted_sum(mul(p[0], p[1]), w); }, ab);
    std::vector<Tensor> one_a{a};
    std::vector<Tensor> one_pos{pos};
    check1("neg", [&](std::span<const Tensor> p) { return weighted_sum(neg(p[0]), w); }, one_a);
    check1("exp", [&](std::span<const Tensor> p) { return weighted_sum(exp(p[0]), w); }, one_a);
    check1("log", [&](std::span<const Tensor> p) { return weighted_sum(log(p[0]), w); }, one_pos);
    check1("tanh", [&](std::span<const Tensor> p) { return weighted_sum(tanh(p[0]), w); }, one_a);
    check1("recip", [&](std::span<const Tensor> p) { return weighted_sum(recip(p[0]), w); },
           one_pos);
    check1("gelu", [&](std::span<const Tensor> p) { return weighted_sum(gelu(p[0]), w); }, one_a);
    check1("softmax",
           [&](std::span<const Tensor> p) { return weighted_sum(softmax_last(p[0]), w); }, one_a);
    check1("matmul",
           [&](std::span<const Tensor> p) { return weighted_sum(matmul(p[0], transpose(p[1])), wmat); },
           ab);
    check1("sum_keepdim",
           [&](std::span<const Tensor> p) {
             std::array<long, 1> ax{1};
             return weighted_sum(sum(p[0], ax, true), wrow);
           },
           one_a);
    check1("mean_axis0",
           [&](std::span<const Tensor> p) {
             std::array<long, 1> ax{0};
             Tensor m = mean(p[0], ax, false);
             Tensor w4 = slice(w, 0, 0, 1);
             return weighted_sum(m, reshape(w4, {4}));
           },
           one_a);
    check1("reshape_slice_concat",
           [&](std::span<const Tensor> p) {
             Tensor r = reshape(p[0], {4, 3});
             Tensor left = slice(r, 0, 0, 2);
             Tensor right = slice(r, 0, 2, 2);
             std::vector<Tensor> parts{right, left};
             return weighted_sum(concat(parts, 0), reshape(w, {4, 3}));
           },
           one_a);

    Tensor table = rand_tensor(rng, {5, 4}, -1.0, 1.0);
    std::vector<int> ids{4, 1, 1};
    std::vector<Tensor> one_table{table};
    check1("embedding",
           [&](std::span<const Tensor> p) { return weighted_sum(embedding(p[0], ids), w); },
           one_table);

    std::vector<int> tg{1, 3, 0};
    check1("cross_entropy",
           [&](std::span<const Tensor> p) {
             return cross_entropy_from_logits(p[0], tg);
           },
           one_a);
    std::vector<double> rw{1.0, 0.0, 1.0};
    check1("cross_entropy_masked",
           [&](std::span<const Tensor> p) {
             return cross_entropy_from_logits(p[0], tg, rw);
           },
           one_a);

    Tensor gain = rand_tensor(rng, {4}, 0.5, 1.5);
    Tensor bias = rand_tensor(rng, {4}, -0.5, 0.5);
    std::vector<Tensor> ln_params{a, gain, bias};
    check1("layer_norm",
           [&](std::span<const Tensor> p) {
             return weighted_sum(layer_norm(p[0], p[1], p[2]), w);
           },
           ln_params);
  }
}

TEST_CASE("second order sweeps match finite differences of the gradient") {
  Rng rng(42);
  const double eps = 1e-5;

  SUBCASE("matmul chain") {
    Tensor x = rand_tensor(rng, {3, 3}, -1.0, 1.0);
    Tensor w = rand_tensor(rng, {3, 3}, -1.0, 1.0);
    Tensor m = rand_tensor(rng, {3, 3}, -1.0, 1.0);
    auto loss = [&](const Tensor& t) { return sum_all(mul(matmul(t, m), matmul(t, m))); };
    CHECK(second_order_fd_check(loss, x, w, eps) < 1e-6);
  }
  SUBCASE("softmax cross entropy") {
    Tensor x = rand_tensor(rng, {2, 5}, -1.0, 1.0);
    Tensor w = rand_tensor(rng, {2, 5}, -1.0, 1.0);
    std::vector<int> tg{3, 1};
    auto loss = [&](const Tensor& t) { return cross_entropy_from_logits(t, tg); };
    CHECK(second_order_fd_check(loss, x, w, eps) < 1e-6);
  }
  SUBCASE("layer norm and gelu") {
    Tensor x = rand_tensor(rng, {2, 4}, -1.0, 1.0);
    Tensor w = rand_tensor(rng, {2, 4}, -1.0, 1.0);
    Tensor gain = Tensor::full({4}, 1.1);
    Tensor bias = Tensor::zeros({4});
    auto loss = [&](const Tensor& t) {
      return mean_all(gelu(layer_norm(t, gain, bias)));
    };
    CHECK(second_order_fd_check(loss, x, w, eps) < 1e-5);
  }
}

TEST_CASE("finite difference checker on closed forms") {
  SUBCASE("square function") {
    Tensor x = Tensor::scalar(3.0);
    std::vector<Tensor> params{x};
    auto f = [](std::span<const Tensor> p) { return mul(p[0], p[0]); };
    CHECK(finite_difference_check(f, params, 1e-4) < 1e-6);
  }
  SUBCASE("constant function") {
    Tensor x = Tensor::scalar(1.0);
    std::vector<Tensor> params{x};
    auto f = [](std::span<const Tensor>) { return Tensor::scalar(5.0); };
    CHECK(finite_difference_check(f, params, 1e-4) < 1e-8);
  }
  SUBCASE("coordinate sampling stays within bounds") {
    Rng rng(3);
    Tensor x = rand_tensor(rng, {4, 4}, -1.0, 1.0);
    std::vector<Tensor> params{x};
    auto f = [](std::span<const Tensor> p) { return sum_all(mul(p[0], p[0])); };
    CHECK(finite_difference_check(f, params, 1e-5, 5) < 1e-6);
  }
}

TEST_CASE("rng streams are deterministic") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(123);
  CHECK(c.fork(0) != c.fork(1));
  double m = 0.0;
  Rng d(9);
  const int n = 20000;
  for (int i = 0; i < n; ++i) m += d.normal();
  CHECK(std::abs(m / n) < 0.05);
}
