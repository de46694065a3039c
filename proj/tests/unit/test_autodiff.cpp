#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "oracles.hpp"
#include "scalpel/checkpoint.hpp"
#include "scalpel/ops.hpp"
#include "scalpel/optim.hpp"

using namespace scalpel;

namespace {

Tensor random_tensor(Shape s, std::mt19937_64& rng, bool grad = false) {
  std::normal_distribution<float> d;
  std::vector<float> v(static_cast<size_t>(shape_numel(s)));
  for (float& x : v) x = d(rng);
  return Tensor::from(std::move(s), std::move(v), grad);
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "scalpel_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("autodiff") {

TEST_CASE("every op matches central differences over 20 seeds") {
  for (const auto& c : oracle::gradient_cases()) {
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      const double err = oracle::gradient_error(c, seed);
      INFO(c.op << " seed " << seed << " rel err " << err);
      CHECK(err < 1e-3);
    }
  }
}

TEST_CASE("conv2d forward equals direct summation") {
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({2, 3, 6, 5}, rng), w = random_tensor({4, 3, 3, 3}, rng), b = random_tensor({4}, rng);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      const Tensor y = conv2d(x, w, b, stride, pad);
      const int64_t ho = (6 + 2 * pad - 3) / stride + 1, wo = (5 + 2 * pad - 3) / stride + 1;
      REQUIRE(y.shape() == Shape{2, 4, ho, wo});
      for (int n = 0; n < 2; ++n)
        for (int o = 0; o < 4; ++o)
          for (int i = 0; i < ho; ++i)
            for (int j = 0; j < wo; ++j) {
              double s = b.data()[o];
              for (int c = 0; c < 3; ++c)
                for (int ki = 0; ki < 3; ++ki)
                  for (int kj = 0; kj < 3; ++kj) {
                    const int yy = i * stride - pad + ki, xx = j * stride - pad + kj;
                    if (yy < 0 || yy >= 6 || xx < 0 || xx >= 5) continue;
                    s += static_cast<double>(x.data()[((n * 3 + c) * 6 + yy) * 5 + xx]) *
                         w.data()[((o * 3 + c) * 3 + ki) * 3 + kj];
                  }
              CHECK(y.data()[((n * 4 + o) * ho + i) * wo + j] == doctest::Approx(s).epsilon(1e-5));
            }
    }
  }
}

TEST_CASE("group_norm standardizes each group") {
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({2, 4, 3, 3}, rng);
  const Tensor y = group_norm(x, Tensor::full({4}, 1.0f), Tensor::zeros({4}), 2);
  for (int n = 0; n < 2; ++n)
    for (int g = 0; g < 2; ++g) {
      double m = 0, v = 0;
      for (int i = 0; i < 18; ++i) m += y.data()[n * 36 + g * 18 + i];
      m /= 18;
      for (int i = 0; i < 18; ++i) v += std::pow(y.data()[n * 36 + g * 18 + i] - m, 2);
      CHECK(m == doctest::Approx(0).epsilon(1e-5).scale(1));
      CHECK(v / 18 == doctest::Approx(1).epsilon(1e-3));
    }
}

TEST_CASE("softmax rows sum to one and cross entropy matches its definition") {
  const Tensor logits = Tensor::from({2, 3}, {1, 2, 3, -1, 0, 5});
  const Tensor p = softmax(logits);
  CHECK(p.data()[0] + p.data()[1] + p.data()[2] == doctest::Approx(1.0));
  const int labels[] = {2, 0};
  const double want = (-std::log(p.data()[2]) - std::log(p.data()[3])) / 2;
  CHECK(cross_entropy(logits, labels).item() == doctest::Approx(want).epsilon(1e-5));
  CHECK(cross_entropy(Tensor::zeros({0, 3}), {}).item() == 0.0f);
}

TEST_CASE("leaf gradients accumulate across backward passes") {
  Tensor x = Tensor::from({3}, {1, 2, 3}, true);
  backward(sum(scale(x, 2.0f)));
  backward(sum(scale(x, 2.0f)));
  for (float g : x.grad()) CHECK(g == 4.0f);
  x.zero_grad();
  for (float g : x.grad()) CHECK(g == 0.0f);
}

TEST_CASE("no-grad scope records no graph") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  {
    NoGradGuard guard;
    const Tensor y = scale(x, 3.0f);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.is_leaf());
  }
  CHECK(scale(x, 3.0f).requires_grad());
}

TEST_CASE("shape errors name the op") {
  const Tensor x = Tensor::zeros({1, 3, 4, 4}), w = Tensor::zeros({2, 5, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d(x, w, Tensor()), doctest::Contains("conv2d"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), doctest::Contains("add"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(linear(Tensor::zeros({2, 3}), Tensor::zeros({4, 5}), Tensor()), doctest::Contains("linear"),
                       std::invalid_argument);
}

TEST_CASE("sgd skips frozen parameters") {
  std::vector<Parameter> ps(2);
  ps[0] = {"a.w", "stem", Tensor::from({2}, {1, 1}, true), true};
  ps[1] = {"b.w", "rpn", Tensor::from({2}, {1, 1}, true), true};
  ps[1].set_trainable(false);
  backward(add(sum(ps[0].tensor), sum(ps[1].tensor)));
  CHECK_FALSE(ps[1].tensor.has_grad());
  sgd_step(ps, 0.5f);
  CHECK(ps[0].tensor.data()[0] == 0.5f);
  CHECK(ps[1].tensor.data()[0] == 1.0f);
  CHECK(ps[0].tensor.grad()[0] == 0.0f);
}

TEST_CASE("checkpoint round trip is bit exact") {
  std::mt19937_64 rng(9);
  std::vector<Parameter> ps{{"x.weight", "stem", random_tensor({3, 2, 1, 1}, rng), true},
                            {"x.bias", "stem", random_tensor({3}, rng), true}};
  ps[1].tensor.data()[0] = -0.0f;
  const auto file = temp_file("rt.ckpt");
  save_checkpoint(file, ps);
  const Checkpoint back = read_checkpoint(file);
  CHECK(back == snapshot(ps));
  CHECK(checkpoint_hash(back) == checkpoint_hash(snapshot(ps)));
  CHECK(std::signbit(back[1].values[0]));

  std::vector<Parameter> other{{"x.weight", "stem", Tensor::zeros({3, 2, 1, 1}), true},
                               {"x.bias", "stem", Tensor::zeros({3}), true}};
  load_checkpoint(file, other);
  CHECK(snapshot(other) == snapshot(ps));
  CHECK(count_changed(snapshot(ps), snapshot(other)) == 0);
  other[0].tensor.data()[4] += 1.0f;
  CHECK(count_changed(snapshot(ps), snapshot(other)) == 1);
}

TEST_CASE("checkpoint loading rejects mismatches") {
  std::vector<Parameter> ps{{"x.weight", "stem", Tensor::zeros({2, 2}), true}};
  Checkpoint wrong_shape{{"x.weight", {4}, std::vector<float>(4)}};
  CHECK_THROWS_WITH(restore(ps, wrong_shape), doctest::Contains("x.weight"));
  Checkpoint missing{};
  CHECK_THROWS(restore(ps, missing));
  Checkpoint extra{{"x.weight", {2, 2}, std::vector<float>(4)}, {"y", {1}, {0}}};
  CHECK_THROWS(restore(ps, extra));

  const auto file = temp_file("bad.ckpt");
  std::ofstream(file, std::ios::binary) << "NOTACKPT and more bytes";
  CHECK_THROWS(read_checkpoint(file));
  save_checkpoint(file, ps);
  std::filesystem::resize_file(file, std::filesystem::file_size(file) - 3);
  CHECK_THROWS(read_checkpoint(file));
}

}  // TEST_SUITE
