// Copyright 2026 The dilfcn Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>

#include "dilfcn/random.hpp"
#include "dilfcn/tensor.hpp"
#include "oracles.hpp"

using namespace dilfcn;

TEST_SUITE("tensor") {

TEST_CASE("fill construction") {
  const Tensor z = new_tensor(Shape4{1, 1, 2, 2}, 0.0f);
  CHECK(z.size() == 4);
  for (float v : z.data()) CHECK(v == 0.0f);

  const Tensor h = new_tensor(Shape4{1, 3, 224, 224}, 0.5f);
  CHECK(h.size() == 150528);
  for (float v : h.data()) REQUIRE(v == 0.5f);
}

TEST_CASE("degenerate and overflowing shapes are rejected") {
  CHECK_THROWS_AS(Tensor(Shape4{1, 1, 0, 1}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape4{0, 1, 1, 1}), ShapeError);
  const std::size_t big = std::size_t{1} << 32;
  CHECK_THROWS_AS(Shape4({big, big, 2, 1}).validate(), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape4{1, 1, 2, 2}, std::vector<float>(3)), ShapeError);
}

TEST_CASE("row-major indexing") {
  Tensor t(Shape4{2, 3, 4, 5});
  CHECK(t.index(1, 2, 3, 4) == t.size() - 1);
  CHECK(t.index(0, 1, 0, 0) == 20);
  t.at(1, 0, 2, 3) = 7.0f;
  CHECK(t[((1 * 3 + 0) * 4 + 2) * 5 + 3] == 7.0f);
  CHECK(t.plane(1, 2) == t.ptr() + (1 * 3 + 2) * 20);
}

TEST_CASE("elementwise add") {
  const Tensor ones(Shape4{1, 1, 2, 2}, 1.0f);
  const Tensor two = elementwise_add(ones, ones);
  for (float v : two.data()) CHECK(v == 2.0f);

  Rng rng(3);
  const Tensor x = oracle::random_tensor(Shape4{2, 3, 4, 5}, rng).cast<float>();
  const Tensor y = oracle::random_tensor(x.shape(), rng).cast<float>();
  const Tensor z = oracle::random_tensor(x.shape(), rng).cast<float>();
  CHECK(approx_equal(elementwise_add(x, Tensor(x.shape())), x, 0.0));
  CHECK(approx_equal(elementwise_add(x, y), elementwise_add(y, x), 0.0));
  CHECK(approx_equal(elementwise_add(elementwise_add(x, y), z), elementwise_add(elementwise_add(x, y), z), 0.0));

  const Tensor other(Shape4{1, 1, 2, 3});
  try {
    (void)elementwise_add(ones, other);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(ones.shape().str()) != std::string::npos);
    CHECK(msg.find(other.shape().str()) != std::string::npos);
  }
}

TEST_CASE("scale") {
  Rng rng(5);
  const Tensor x = oracle::random_tensor(Shape4{1, 2, 3, 3}, rng).cast<float>();
  CHECK(approx_equal(scale(x, 1.0f), x, 0.0));
  const Tensor zeroed = scale(Tensor(x.shape(), 1.0f), 0.0f);
  for (float v : zeroed.data()) CHECK(v == 0.0f);
  const Tensor s = scale(Tensor(Shape4{1, 1, 2, 2}, {1, 2, 3, 4}), 2.0f);
  CHECK(s[0] == 2.0f);
  CHECK(s[1] == 4.0f);
  CHECK(s[2] == 6.0f);
  CHECK(s[3] == 8.0f);
  for (int trial = 0; trial < 20; ++trial) {
    const float a = static_cast<float>(rng.uniform(-3, 3));
    const float b = static_cast<float>(rng.uniform(-3, 3));
    CHECK(approx_equal(scale(scale(x, a), b), scale(x, a * b), 1e-6));
  }
}

TEST_CASE("inner product") {
  const Tensor ones(Shape4{1, 1, 2, 2}, 1.0f);
  CHECK(inner_product(ones, Tensor(ones.shape())) == 0.0);
  CHECK(inner_product(ones, ones) == 4.0);
  CHECK(inner_product(Tensor(Shape4{1, 1, 1, 2}, {1, 2}), Tensor(Shape4{1, 1, 1, 2}, {3, 4})) == 11.0);
  CHECK_THROWS_AS((void)inner_product(ones, Tensor(Shape4{1, 1, 1, 4})), ShapeError);

  // Terms too small to register against 1 in single precision still count.
  Tensor a(Shape4{1, 1, 1, 3}, {1.0f, 1e-8f, 1e-8f});
  CHECK(inner_product(a, Tensor(a.shape(), 1.0f)) == doctest::Approx(1.0 + 2e-8).epsilon(1e-12));

  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = oracle::random_tensor(Shape4{1, 2, 3, 4}, rng).cast<float>();
    CHECK(inner_product(x, x) > 0.0);
  }
  CHECK(inner_product(Tensor(Shape4{1, 2, 3, 4}), Tensor(Shape4{1, 2, 3, 4})) == 0.0);
}

TEST_CASE("approx equal") {
  const Tensor one(Shape4{1, 1, 1, 1}, 1.0f);
  CHECK(approx_equal(one, one, 0.0));
  CHECK(approx_equal(one, Tensor(one.shape(), 1.0f + 5e-7f), 1e-6));
  CHECK_FALSE(approx_equal(one, Tensor(one.shape(), 1.1f), 1e-6));
  CHECK_FALSE(approx_equal(one, Tensor(Shape4{1, 1, 1, 2}, 1.0f), 1.0));
}

TEST_CASE("finiteness guard") {
  Tensor t(Shape4{1, 1, 1, 2});
  CHECK_NOTHROW(ensure_finite(t, "t"));
  t[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(all_finite(t));
  CHECK_THROWS_AS(ensure_finite(t, "t"), NumericError);
  t[1] = std::numeric_limits<float>::infinity();
  CHECK_THROWS_AS(ensure_finite(t, "t"), NumericError);
}

}
