#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <vector>

#include "bdc/rng.hpp"
#include "bdc/tensor.hpp"

using namespace bdc;

namespace {

Tensor<double> random_pm1(Rng& rng, const Shape& shape) {
  Tensor<double> t(shape);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.sign_unit();
  return t;
}

}  // namespace

TEST_CASE("shape validation") {
  CHECK(Shape({2, 3, 4}).numel() == 24);
  CHECK_THROWS_AS((void)Shape({0, 3}), Error);
  CHECK_THROWS_AS((void)Shape({1, 2, 3, 4, 5}), Error);
  CHECK_THROWS_AS((void)Shape({1ll << 40, 1ll << 40, 1ll << 40}), Error);  // overflow
}

TEST_CASE("bit_pack maps +1 to set bits, LSB-first") {
  Tensor<double> t(Shape{4}, std::vector<double>{1.0, -1.0, 1.0, -1.0});
  BitTensor b = bit_pack(t);
  CHECK(b.words().size() == 1);
  CHECK(b.words()[0] == 0b0101ull);
  CHECK(b.n_valid_tail() == 4);
}

TEST_CASE("bit_pack of 100 ones fills two words with zeroed tail") {
  Tensor<double> t(Shape{100}, 1.0);
  BitTensor b = bit_pack(t);
  REQUIRE(b.words().size() == 2);
  CHECK(b.words()[0] == ~0ull);
  CHECK(b.words()[1] == (1ull << 36) - 1ull);
  CHECK(b.n_valid_tail() == 36);
}

TEST_CASE("bit_pack rejects non-binary values") {
  Tensor<double> t(Shape{3}, std::vector<double>{1.0, 0.5, -1.0});
  CHECK_THROWS_AS(bit_pack(t), Error);
  Tensor<double> z(Shape{1}, std::vector<double>{0.0});
  CHECK_THROWS_AS(bit_pack(z), Error);
}

TEST_CASE("bit_unpack basics") {
  BitTensor b(Shape{4});
  b.set(0, true);
  b.set(2, true);
  Tensor<double> t = bit_unpack_as<double>(b);
  CHECK(t[0] == 1.0);
  CHECK(t[1] == -1.0);
  CHECK(t[2] == 1.0);
  CHECK(t[3] == -1.0);

  BitTensor zeros(Shape{7});
  Tensor<double> all_neg = bit_unpack_as<double>(zeros);
  for (std::int64_t i = 0; i < all_neg.size(); ++i) CHECK(all_neg[i] == -1.0);
}

TEST_CASE("round-trip is the identity on +-1 tensors") {
  // exhaustive for length <= 16
  for (int len = 1; len <= 16; ++len) {
    for (std::uint32_t mask = 0; mask < (1u << len); ++mask) {
      Tensor<double> t(Shape{len});
      for (int i = 0; i < len; ++i) t[i] = (mask >> i) & 1 ? 1.0 : -1.0;
      Tensor<double> back = bit_unpack_as<double>(bit_pack(t));
      bool equal = true;
      for (int i = 0; i < len; ++i) equal = equal && back[i] == t[i];
      REQUIRE(equal);
    }
  }
  // randomized above
  Rng rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int64_t len = rng.uniform_int(1, 300);
    Tensor<double> t = random_pm1(rng, Shape{len});
    BitTensor packed = bit_pack(t);
    CHECK(bit_unpack_as<double>(packed) .data().size() == t.data().size());
    Tensor<double> back = bit_unpack_as<double>(packed);
    for (std::int64_t i = 0; i < len; ++i) REQUIRE(back[i] == t[i]);
    CHECK(bit_pack(back) == packed);
  }
}

TEST_CASE("popcount_dot hand cases") {
  Tensor<double> a(Shape{3}, std::vector<double>{1.0, -1.0, 1.0});
  Tensor<double> b(Shape{3}, std::vector<double>{1.0, 1.0, -1.0});
  CHECK(popcount_dot(bit_pack(a).words(), bit_pack(b).words(), 3) == -1);

  Tensor<double> ones(Shape{64}, 1.0);
  BitTensor packed = bit_pack(ones);
  CHECK(popcount_dot(packed.words(), packed.words(), 64) == 64);
}

TEST_CASE("popcount_dot equals the integer dot product") {
  Rng rng(11);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::int64_t n = rng.uniform_int(1, 512);
    Tensor<double> a = random_pm1(rng, Shape{n});
    Tensor<double> b = random_pm1(rng, Shape{n});
    std::int64_t expected = 0;  // brute-force real-valued dot
    for (std::int64_t i = 0; i < n; ++i) expected += static_cast<std::int64_t>(a[i] * b[i]);
    CHECK(popcount_dot(bit_pack(a).words(), bit_pack(b).words(), n) == expected);
  }
}

TEST_CASE("flipping bits beyond the valid tail never changes popcount_dot") {
  Rng rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::int64_t n = rng.uniform_int(1, 200);
    BitTensor a = bit_pack(random_pm1(rng, Shape{n}));
    BitTensor b = bit_pack(random_pm1(rng, Shape{n}));
    const std::int64_t base = popcount_dot(a.words(), b.words(), n);
    std::vector<std::uint64_t> aw(a.words().begin(), a.words().end());
    std::vector<std::uint64_t> bw(b.words().begin(), b.words().end());
    const int tail = a.n_valid_tail();
    if (tail == 64) continue;
    for (int bit = tail; bit < 64; ++bit) {
      aw.back() ^= 1ull << bit;
      if (bit % 2 == 0) bw.back() ^= 1ull << bit;
      CHECK(popcount_dot(aw, bw, n) == base);
    }
  }
}

TEST_CASE("popcount_dot length mismatch") {
  std::vector<std::uint64_t> a(1, 0), b;
  CHECK_THROWS_AS(popcount_dot(a, b, 5), Error);
}
