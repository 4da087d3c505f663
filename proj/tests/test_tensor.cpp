#include <doctest.h>

#include <cmath>
#include <vector>

#include "grex/tensor.hpp"
#include "test_util.hpp"

using namespace grex;
using grex::testing::bit_equal;
using grex::testing::random_tensor;
using grex::testing::random_tensor_off_zero;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("basic op values") {
  CHECK(sigmoid(Tensor::scalar(0.0)).value() == doctest::Approx(0.5).epsilon(1e-15));

  const Tensor x = random_tensor(3, 4, 1);
  CHECK(bit_equal(matmul(Tensor::identity(3), x), x));

  const int label[1] = {0};
  Tensor logits(1, 2);
  CHECK(softmax_cross_entropy(logits, label).value() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("shape mismatch reports both shapes") {
  const Tensor a(2, 3);
  const Tensor b(4, 2);
  try {
    matmul(a, b);
    FAIL("expected E_SHAPE");
  } catch (const Error& e) {
    CHECK(e.code() == "E_SHAPE");
    CHECK(std::string(e.what()).find("2x3") != std::string::npos);
    CHECK(std::string(e.what()).find("4x2") != std::string::npos);
  }
}

TEST_CASE("non-finite results fail at the producing op") {
  const Tensor huge = Tensor::full(1, 2, 1e308);
  CHECK_THROWS_WITH_AS(add(huge, huge), doctest::Contains("non-finite"), Error);
}

TEST_CASE("backward of sum of squares") {
  Tape tape;
  Tensor x = tape.watch(Tensor::scalar(3.0));
  Tensor y = mul(x, x);
  const GradientMap grads = tape.backward(y);
  CHECK(grads.at(x).value() == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("nodes not reaching y get zero gradients") {
  Tape tape;
  Tensor x = tape.watch(random_tensor(2, 2, 3));
  Tensor unrelated = tape.watch(Tensor::scalar(5.0));
  Tensor y = mean_all(mul(x, x));
  const GradientMap grads = tape.backward(y);
  CHECK(grads.at(unrelated).value() == 0.0);
  // y made only of constants has no taped handle at all
  Tensor c = mean_all(Tensor::full(2, 2, 1.0));
  CHECK_FALSE(c.taped());
  CHECK_THROWS_AS((void)tape.backward(c), Error);
}

TEST_CASE("backward requires a scalar") {
  Tape tape;
  Tensor x = tape.watch(random_tensor(2, 2, 4));
  Tensor y = mul(x, x);
  CHECK_THROWS_AS((void)tape.backward(y), Error);
}

TEST_CASE("grad_check basics") {
  const auto linear = [](const Tensor& t) { return mean_all(t); };
  CHECK(grad_check(linear, random_tensor(3, 3, 5), 1e-3) < 1e-10);

  const auto smooth = [](const Tensor& t) { return mean_all(sigmoid(t)); };
  CHECK(grad_check(smooth, random_tensor(3, 3, 6), 1e-3) < 1e-6);

  CHECK_THROWS_AS((void)grad_check(linear, Tensor::scalar(1.0), 0.0), Error);
}

TEST_CASE("gradients of every core op match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor a = random_tensor(3, 4, 100 + seed);
    const Tensor b = random_tensor(3, 4, 200 + seed);
    const Tensor row = random_tensor(1, 4, 300 + seed);
    const Tensor square = random_tensor(4, 4, 400 + seed);

    const auto check = [&](const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
      CHECK(grad_check(f, x, 1e-3) < 1e-4);
    };

    check([&](const Tensor& t) { return mean_all(matmul(t, square)); }, a);
    check([&](const Tensor& t) { return mean_all(matmul(a, t)); }, square);
    check([&](const Tensor& t) { return mean_all(add(t, b)); }, a);
    check([&](const Tensor& t) { return mean_all(add(a, t)); }, b);
    check([&](const Tensor& t) { return mean_all(add(a, t)); }, row);  // broadcast
    check([&](const Tensor& t) { return mean_all(sub(t, b)); }, a);
    check([&](const Tensor& t) { return mean_all(sub(a, t)); }, row);
    check([&](const Tensor& t) { return mean_all(mul(t, b)); }, a);
    check([&](const Tensor& t) { return mean_all(mul(a, t)); }, b);
    check([&](const Tensor& t) { return mean_all(scalar_mul(t, -1.7)); }, a);
    check([&](const Tensor& t) { return mean_all(sigmoid(t)); }, a);
    check([&](const Tensor& t) { return mean_all(tanh(t)); }, a);
    check([&](const Tensor& t) { return mean_all(row_sum(t)); }, a);
    check([&](const Tensor& t) { return mean_all(t); }, a);
    check([&](const Tensor& t) { return mean_all(concat_cols(t, b)); }, a);
    check([&](const Tensor& t) { return mean_all(concat_cols(a, t)); }, b);
    const int rows[2] = {2, 0};
    check([&](const Tensor& t) { return mean_all(select_rows(t, rows)); }, a);
    const std::vector<int> labels = {1, 3, 0};
    check([&](const Tensor& t) { return softmax_cross_entropy(t, labels); }, a);
    // relu needs inputs away from its kink for central differences
    check([&](const Tensor& t) { return mean_all(relu(t)); },
          random_tensor_off_zero(3, 4, 500 + seed, 1e-2));
  }
}

TEST_CASE("adjoint is linear: backward of a sum equals sum of backwards") {
  const Tensor x0 = random_tensor(3, 3, 7);
  const auto f1 = [](const Tensor& t) { return mean_all(sigmoid(t)); };
  const auto f2 = [](const Tensor& t) { return mean_all(mul(t, t)); };

  Tape tape;
  Tensor x = tape.watch(x0);
  const GradientMap g_sum = tape.backward(add(f1(x), f2(x)));

  Tape tape1;
  Tensor x1 = tape1.watch(x0);
  const GradientMap g1 = tape1.backward(f1(x1));
  Tape tape2;
  Tensor x2 = tape2.watch(x0);
  const GradientMap g2 = tape2.backward(f2(x2));

  for (int i = 0; i < x0.size(); ++i) {
    const double separate = g1.at(x1).data[static_cast<std::size_t>(i)] +
                            g2.at(x2).data[static_cast<std::size_t>(i)];
    CHECK(g_sum.at(x).data[static_cast<std::size_t>(i)] ==
          doctest::Approx(separate).epsilon(1e-12));
  }
}

TEST_CASE("matmul gradients follow the transpose rule") {
  const Tensor a0 = random_tensor(3, 4, 8);
  const Tensor b0 = random_tensor(4, 2, 9);

  Tape tape;
  Tensor a = tape.watch(a0);
  Tensor b = tape.watch(b0);
  // scale mean back up so the upstream gradient of the product is all-ones
  Tensor y = scalar_mul(mean_all(matmul(a, b)), 6.0);
  const GradientMap grads = tape.backward(y);

  const Tensor ones = Tensor::full(3, 2, 1.0);
  Tensor bt(2, 4);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 2; ++c) bt(c, r) = b0(r, c);
  }
  Tensor at(4, 3);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) at(c, r) = a0(r, c);
  }
  CHECK(grex::testing::max_abs_diff(grads.at(a), matmul(ones, bt)) < 1e-10);
  CHECK(grex::testing::max_abs_diff(grads.at(b), matmul(at, ones)) < 1e-10);
}

TEST_CASE("argmax_rows breaks ties low") {
  Tensor t(2, 3);
  t(0, 0) = 1.0;
  t(0, 2) = 1.0;
  t(1, 1) = 4.0;
  const auto idx = argmax_rows(t);
  CHECK(idx[0] == 0);
  CHECK(idx[1] == 1);
}

TEST_SUITE_END();
