#include <doctest.h>

#include <cmath>

#include "promptseg/errors.hpp"
#include "promptseg/gradient_check.hpp"
#include "promptseg/loss.hpp"
#include "promptseg/network.hpp"
#include "test_support.hpp"

using namespace promptseg;

namespace {

NetworkSpec tiny_spec(Head head, Size3 size = {5, 4, 3}) {
  NetworkSpec s;
  s.conv_filters = {2, 2, 2};
  s.input_channels = 2;
  s.head = head;
  s.input_size = size;
  s.hidden_width = 3;
  return s;
}

double loss_of(const Network& net, const Volume& x, int y) { return bce_loss(net.forward(x), y); }

}  // namespace

TEST_SUITE("network") {
  TEST_CASE("ceil-mode pooling extents") {
    CHECK(pooled_extent(10) == 5);
    CHECK(pooled_extent(5) == 3);
    CHECK(pooled_extent(3) == 2);
    CHECK(pooled_extent(6) == 3);
    CHECK(pooled_extent(2) == 1);
    CHECK(pooled_extent(1) == 1);
    CHECK(NetworkSpec::fully_supervised({10, 10, 6}).feature_width() == 2 * 2 * 1 * 64);
    CHECK(NetworkSpec::weakly_supervised().feature_width() == 64);
  }

  TEST_CASE("parameter layout") {
    const Network net(NetworkSpec::fully_supervised({10, 10, 6}));
    const auto& p = net.parameters();
    REQUIRE(p.size() == 10);
    CHECK(p[0].name == "conv1.weight");
    CHECK(p[0].shape == std::vector<int>{16, 2, 3, 3, 3});
    CHECK(p[2].shape == std::vector<int>{32, 16, 3, 3, 3});
    CHECK(p[4].shape == std::vector<int>{64, 32, 3, 3, 3});
    CHECK(p[6].shape == std::vector<int>{64, 256});
    CHECK(p[8].shape == std::vector<int>{1, 64});
    CHECK(p[9].name == "dense2.bias");
    const std::size_t expected = 16 * 2 * 27 + 16 + 32 * 16 * 27 + 32 + 64 * 32 * 27 + 64 + 64 * 256 + 64 + 64 + 1;
    CHECK(net.parameter_count() == expected);
  }

  TEST_CASE("spec validation") {
    NetworkSpec s;
    s.conv_filters = {16, 32};
    CHECK_THROWS_AS(s.validate(), ValidationError);
    s = NetworkSpec{};
    s.hidden_width = 0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
    CHECK(head_from_string(to_string(Head::Flatten)) == Head::Flatten);
    CHECK_THROWS_AS(head_from_string("maxpool"), ValidationError);
  }

  TEST_CASE("all-zero weights give exactly one half") {
    const Network net(NetworkSpec::weakly_supervised());
    CHECK(net.forward(testing::random_volume({10, 10, 6}, 2, 1)) == 0.5);
    CHECK(net.forward(testing::random_volume({17, 9, 5}, 2, 2)) == 0.5);
  }

  TEST_CASE("forward is deterministic and strictly inside (0, 1)") {
    const Network net = Network::initialized(NetworkSpec::weakly_supervised(), 3);
    for (int i = 0; i < 5; ++i) {
      const Volume x = testing::random_volume({10, 10, 6}, 2, 40 + i);
      const double a = net.forward(x);
      CHECK(a == net.forward(x));
      CHECK(a > 0.0);
      CHECK(a < 1.0);
    }
  }

  TEST_CASE("global pooling still sees spatial structure") {
    const Network net = Network::initialized(NetworkSpec::weakly_supervised(), 5);
    const Volume x = testing::random_volume({10, 10, 6}, 2, 6);
    // Same voxels, w and h swapped.
    Volume t(x.size(), 2);
    for (int c = 0; c < 2; ++c)
      for (int d = 0; d < 6; ++d)
        for (int h = 0; h < 10; ++h)
          for (int w = 0; w < 10; ++w) t.at(w, h, d, c) = x.at(h, w, d, c);
    CHECK(net.forward(x) != net.forward(t));
  }

  TEST_CASE("global pooling head accepts full volumes and crops") {
    const Network net = Network::initialized(NetworkSpec::weakly_supervised(), 8);
    CHECK_NOTHROW(net.forward(Volume({64, 64, 24}, 2)));
    CHECK_NOTHROW(net.forward(Volume({10, 10, 6}, 2)));
    CHECK_NOTHROW(net.forward(Volume({1, 1, 1}, 2)));
  }

  TEST_CASE("shape errors") {
    const Network wsc(NetworkSpec::weakly_supervised());
    CHECK_THROWS_AS(wsc.forward(Volume({10, 10, 6}, 1)), ShapeError);
    const Network fsc(NetworkSpec::fully_supervised({10, 10, 6}));
    CHECK_THROWS_AS(fsc.forward(Volume({12, 10, 6}, 2)), ShapeError);
    CHECK_NOTHROW(fsc.forward(Volume({10, 10, 6}, 2)));
  }

  TEST_CASE("initialisation bounds and seeding") {
    const Network a = Network::initialized(NetworkSpec::weakly_supervised(), 1);
    const Network b = Network::initialized(NetworkSpec::weakly_supervised(), 1);
    const Network c = Network::initialized(NetworkSpec::weakly_supervised(), 2);
    CHECK(a == b);
    CHECK_FALSE(a == c);
    for (const auto& p : a.parameters()) {
      const bool bias = p.name.ends_with(".bias");
      std::size_t fan_in = 1;
      for (std::size_t i = 1; i < p.shape.size(); ++i) fan_in *= p.shape[i];
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double v : p.values) {
        if (bias) {
          REQUIRE(v == 0.0);
        } else {
          REQUIRE(std::abs(v) <= bound);
        }
      }
    }
  }
}

TEST_SUITE("loss") {
  TEST_CASE("bce examples") {
    CHECK(bce_loss(1.0 - kProbabilityEpsilon, 1) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(bce_loss(0.5, 1) == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(bce_loss(0.5, 0) == doctest::Approx(std::log(2.0)));
    const double p[] = {0.5, 0.5};
    const int y[] = {1, 0};
    CHECK(bce_mean(p, y) == doctest::Approx(std::log(2.0)));
  }

  TEST_CASE("clamping keeps the loss finite") {
    CHECK(std::isfinite(bce_loss(0.0, 1)));
    CHECK(std::isfinite(bce_loss(1.0, 0)));
    CHECK(bce_loss(0.0, 1) == doctest::Approx(-std::log(kProbabilityEpsilon)));
  }

  TEST_CASE("bce is non-negative and minimal at the label") {
    for (double p = 0.01; p < 1.0; p += 0.01) {
      REQUIRE(bce_loss(p, 1) > 0.0);
      REQUIRE(bce_loss(p, 0) > 0.0);
      REQUIRE(bce_loss(p, 1) > bce_loss(std::min(p + 0.005, 1.0), 1));
    }
  }
}

TEST_SUITE("gradient") {
  TEST_CASE("analytic gradients match finite differences on random tiny nets") {
    for (int i = 0; i < 10; ++i) {
      const Head head = i % 2 == 0 ? Head::Flatten : Head::GlobalAveragePool;
      const Network net = Network::initialized(tiny_spec(head), 100 + i);
      const Volume x = testing::random_volume({5, 4, 3}, 2, 200 + i);
      const GradientCheckReport r = gradient_check(net, x, i % 3 == 0 ? 0 : 1);
      INFO(r.describe());
      CHECK(r.passed);
      CHECK(r.max_relative_error <= 1e-5);
      CHECK(r.checked == net.parameter_count());
    }
  }

  TEST_CASE("dense-only gradient w.r.t. the logit is p - y") {
    // With every weight zero except the output bias b, the logit is b, so
    // d(loss)/db = sigmoid(b) - y. Setting y equal to p is impossible for a
    // binary label, so the identity is checked for both labels instead.
    Network net(tiny_spec(Head::GlobalAveragePool));
    net.parameters()[9].values[0] = 0.3;
    const Volume x = testing::random_volume({5, 4, 3}, 2, 1);
    for (int y : {0, 1}) {
      Gradients g = net.zero_gradients();
      net.accumulate_gradient(x, y, 1.0, g);
      CHECK(g[9][0] == doctest::Approx(sigmoid(0.3) - y).epsilon(1e-12));
    }
  }

  TEST_CASE("perturbing one weight changes the loss by about grad * delta") {
    const Network net = Network::initialized(tiny_spec(Head::Flatten), 31);
    const Volume x = testing::random_volume({5, 4, 3}, 2, 32);
    Gradients g = net.zero_gradients();
    const double base = net.accumulate_gradient(x, 1, 1.0, g);
    CHECK(base == doctest::Approx(loss_of(net, x, 1)).epsilon(1e-12));
    const double delta = 1e-5;
    for (std::size_t p = 0; p < net.parameters().size(); p += 3) {
      Network moved = net;
      moved.parameters()[p].values[0] += delta;
      const double change = loss_of(moved, x, 1) - base;
      CHECK(change == doctest::Approx(g[p][0] * delta).epsilon(1e-3).scale(1e-9));
    }
  }

  TEST_CASE("gradient weight scales linearly") {
    const Network net = Network::initialized(tiny_spec(Head::GlobalAveragePool), 41);
    const Volume x = testing::random_volume({5, 4, 3}, 2, 42);
    Gradients g1 = net.zero_gradients(), g2 = net.zero_gradients();
    net.accumulate_gradient(x, 0, 1.0, g1);
    net.accumulate_gradient(x, 0, 0.25, g2);
    for (std::size_t p = 0; p < g1.size(); ++p)
      for (std::size_t i = 0; i < g1[p].size(); ++i) REQUIRE(g2[p][i] == doctest::Approx(0.25 * g1[p][i]));
  }
}
