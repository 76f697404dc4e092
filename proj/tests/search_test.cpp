#include <doctest.h>

#include <cmath>
#include <numbers>

#include "promptseg/errors.hpp"
#include "promptseg/network.hpp"
#include "promptseg/scorer.hpp"
#include "promptseg/search.hpp"
#include "test_support.hpp"

using namespace promptseg;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Sphere phantom: radius-r ball of value 1 on a zero background, 2 channels.
struct SpherePhantom {
  Volume volume;
  Mask mask;
  Index3 center;
};

SpherePhantom sphere_phantom(Size3 size, Index3 c, double r) {
  SpherePhantom p{Volume(size, 2), testing::sphere_mask(size, c, r), c};
  for (int d = 0; d < size.d; ++d)
    for (int h = 0; h < size.h; ++h)
      for (int w = 0; w < size.w; ++w)
        if (p.mask.at(w, h, d)) p.volume.at(w, h, d, 0) = p.volume.at(w, h, d, 1) = 1.0f;
  return p;
}

bool subset(const Mask& a, const Mask& b) {
  for (std::size_t i = 0; i < a.data().size(); ++i)
    if (a.data()[i] && !b.data()[i]) return false;
  return true;
}

// Scorer that counts its calls.
class CountingScorer final : public CropScorer {
 public:
  explicit CountingScorer(double v) : v_(v) {}
  double score(const Crop&) const override {
    ++calls;
    return v_;
  }
  mutable int calls = 0;

 private:
  double v_;
};

}  // namespace

TEST_SUITE("spiral") {
  TEST_CASE("closed-form examples") {
    const Offset3 o0 = spiral_offset({4.0, 200, 80}, 0);
    CHECK(o0.w == 0.0);
    CHECK(o0.h == 0.0);
    CHECK(o0.d == 0.0);
    const Offset3 o2 = spiral_offset({2.0, 8, 10}, 2);
    CHECK(o2.w == doctest::Approx(0.0).scale(1.0));
    CHECK(o2.h == doctest::Approx(1.0));
    CHECK(o2.d == 0.0);
    const Offset3 o4 = spiral_offset({2.0, 8, 10}, 4);
    CHECK(o4.w == doctest::Approx(-2.0));
    CHECK(o4.h == doctest::Approx(0.0).scale(1.0));
  }

  TEST_CASE("offsets match an independent recomputation") {
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
      const double s = rng.uniform(0.1, 10.0);
      const int mu = rng.between(1, 400);
      const int t = rng.between(0, 500);
      const Offset3 o = spiral_offset({s, mu, 500}, t);
      const double r = t / s;
      const double b = 2.0 * kPi * t / mu;
      REQUIRE(std::abs(o.w - r * std::cos(b)) <= 1e-9);
      REQUIRE(std::abs(o.h - r * std::sin(b)) <= 1e-9);
      REQUIRE(o.d == 0.0);
    }
  }

  TEST_CASE("trajectory starts at the prompt and is prompt plus rounded offset") {
    SearchConfig cfg;
    const Size3 vol{64, 64, 24};
    const Index3 prompt{32, 30, 12};
    const auto traj = plan_trajectory(Strategy::Spiral, prompt, cfg, vol, run_variant(cfg, 0));
    REQUIRE(traj.size() == 81);
    CHECK(traj[0] == prompt);
    const double scale = run_variant(cfg, 0).scale;
    for (int t = 0; t <= 80; ++t) {
      const double r = t / scale, b = 2.0 * kPi * t / 200.0;
      REQUIRE(traj[t] == Index3{prompt.w + static_cast<int>(std::lround(r * std::cos(b))),
                                prompt.h + static_cast<int>(std::lround(r * std::sin(b))), prompt.d});
    }
  }

  TEST_CASE("default reach is twenty voxels") {
    SearchConfig cfg;
    CHECK(cfg.max_radius() == doctest::Approx(20.0));
    cfg.n_runs = 1;
    const Index3 prompt{32, 32, 12};
    for (const Index3& c : plan_trajectory(Strategy::Spiral, prompt, cfg, {64, 64, 24}, run_variant(cfg, 0))) {
      const double dw = c.w - prompt.w, dh = c.h - prompt.h;
      REQUIRE(std::sqrt(dw * dw + dh * dh) <= 20.0 + std::sqrt(0.5));
      REQUIRE(c.d == prompt.d);
    }
    cfg.set_steps(40);
    CHECK(cfg.spiral.scale == doctest::Approx(2.0));
  }

  TEST_CASE("centers near the border are clamped into the volume") {
    SearchConfig cfg;
    cfg.n_runs = 1;
    for (const Index3& c : plan_trajectory(Strategy::Spiral, {1, 62, 0}, cfg, {64, 64, 24}, run_variant(cfg, 0)))
      REQUIRE(Size3{64, 64, 24}.contains(c));
  }

  TEST_CASE("run variants") {
    SearchConfig cfg;
    const RunVariant first = run_variant(cfg, 0), last = run_variant(cfg, 5);
    CHECK(first.angle_offset == 0.0);
    CHECK(last.angle_offset == doctest::Approx(2.0 * kPi * 5 / 6));
    CHECK(first.scale == doctest::Approx(4.0 * 0.95));
    CHECK(last.scale == doctest::Approx(4.0 * 1.05));
    cfg.n_runs = 1;
    CHECK(run_variant(cfg, 0).scale == 4.0);
  }
}

TEST_SUITE("sliding_window") {
  TEST_CASE("grid over a 20x20 region has 25 centers per depth layer") {
    SearchConfig cfg;
    cfg.set_steps(40, 10.0);  // half-width 10
    const auto grid = plan_trajectory(Strategy::SlidingWindow, {20, 20, 3}, cfg, {40, 40, 6}, run_variant(cfg, 0));
    // Independent enumeration: stride 5 from prompt - 10 to prompt + 10.
    std::vector<Index3> expected;
    for (int h = 10; h <= 30; h += 5)
      for (int w = 10; w <= 30; w += 5) expected.push_back({w, h, 3});
    CHECK(grid == expected);
    CHECK(grid.size() == 25);
  }

  TEST_CASE("grid covers every reachable depth") {
    SearchConfig cfg;
    const auto grid = plan_trajectory(Strategy::SlidingWindow, {32, 32, 12}, cfg, {64, 64, 24}, run_variant(cfg, 0));
    // Depth centers 3, 6, ..., 21; in-plane 12..52 in steps of 5.
    CHECK(grid.size() == 9 * 9 * 7);
    CHECK(grid.front() == Index3{12, 12, 3});
    CHECK(grid.back() == Index3{52, 52, 21});
  }

  TEST_CASE("grid crops never need clamping") {
    SearchConfig cfg;
    const Size3 vol{30, 26, 9};
    for (const Index3 prompt : {Index3{0, 0, 0}, Index3{29, 25, 8}, Index3{15, 3, 4}}) {
      for (const Index3& c : plan_trajectory(Strategy::SlidingWindow, prompt, cfg, vol, run_variant(cfg, 0))) {
        const Index3 o = crop_origin(vol, {cfg.crop_size, c});
        REQUIRE(o == Index3{c.w - 5, c.h - 5, c.d - 3});
      }
    }
  }

  TEST_CASE("random search draws T+1 centers from the same box, seeded") {
    SearchConfig cfg;
    cfg.strategy = Strategy::Random;
    cfg.seed = 3;
    const Index3 prompt{32, 32, 12};
    const auto a = plan_trajectory(Strategy::Random, prompt, cfg, {64, 64, 24}, run_variant(cfg, 1));
    const auto b = plan_trajectory(Strategy::Random, prompt, cfg, {64, 64, 24}, run_variant(cfg, 1));
    const auto c = plan_trajectory(Strategy::Random, prompt, cfg, {64, 64, 24}, run_variant(cfg, 2));
    CHECK(a.size() == 81);
    CHECK(a == b);
    CHECK(a != c);
    for (const Index3& p : a) {
      REQUIRE(p.w >= 12);
      REQUIRE(p.w <= 52);
      REQUIRE(p.h >= 12);
      REQUIRE(p.h <= 52);
      REQUIRE(p.d >= 3);
      REQUIRE(p.d <= 21);
    }
  }

  TEST_CASE("mask equals a direct enumeration of positive grid crops") {
    for (int k = 0; k < 3; ++k) {
      const Index3 c{26 + 3 * k, 36 - 2 * k, 10 + k};
      const auto ph = sphere_phantom({64, 64, 24}, c, 6.0 + k);
      SearchConfig cfg;
      cfg.strategy = Strategy::SlidingWindow;
      const RoiFractionScorer oracle(ph.mask);
      const Index3 prompts[] = {c};
      const Mask got = segment(ph.volume, prompts, cfg, oracle, oracle).mask;

      Mask expected({64, 64, 24});
      for (int oh = c.h - 20 - 5; oh <= c.h + 20 - 5; oh += 5)
        for (int ow = c.w - 20 - 5; ow <= c.w + 20 - 5; ow += 5)
          for (int od = 0; od + 6 <= 24; od += 3) {
            if (ow < 0 || oh < 0 || ow + 10 > 64 || oh + 10 > 64) continue;
            std::size_t inside = 0;
            for (int d = od; d < od + 6; ++d)
              for (int h = oh; h < oh + 10; ++h)
                for (int w = ow; w < ow + 10; ++w) inside += ph.mask.at(w, h, d);
            if (static_cast<double>(inside) / 600.0 > cfg.tau) expected.fill_box({ow, oh, od}, {10, 10, 6});
          }
      CHECK(got == expected);
      CHECK(got.count() > 0);
    }
  }
}

TEST_SUITE("scoring") {
  const Crop crop = extract_crop(Volume({10, 10, 6}, 2), {});

  TEST_CASE("alpha endpoints and midpoint") {
    CHECK(joint_score(crop, ConstantScorer(0.4), ConstantScorer(0.6), 1.0) == 0.4);
    CHECK(joint_score(crop, ConstantScorer(0.4), ConstantScorer(0.6), 0.0) == 0.6);
    CHECK(joint_score(crop, ConstantScorer(0.4), ConstantScorer(0.6), 0.5) == doctest::Approx(0.5));
    CHECK_THROWS_AS(joint_score(crop, ConstantScorer(0.4), ConstantScorer(0.6), 1.5), ValidationError);
  }

  TEST_CASE("a zero-weighted scorer is never called") {
    CountingScorer f(0.3), g(0.7);
    joint_score(crop, f, g, 0.0);
    CHECK(f.calls == 0);
    CHECK(g.calls == 1);
    joint_score(crop, f, g, 1.0);
    CHECK(f.calls == 1);
    CHECK(g.calls == 1);
  }

  TEST_CASE("strict threshold") {
    CHECK(threshold_score(0.06, 0.05) == 1);
    CHECK(threshold_score(0.05, 0.05) == 0);
    CHECK(threshold_score(0.0, 0.0) == 0);
    CHECK(threshold_score(0.0, 0.3) == 0);
  }

  TEST_CASE("network scorer requires a matching fsc crop") {
    const Network fsc(NetworkSpec::fully_supervised({10, 10, 6}));
    const NetworkScorer s(fsc);
    CHECK(s.score(crop) == 0.5);
    const Crop other = extract_crop(Volume({12, 12, 8}, 2), {{8, 8, 4}, {6, 6, 4}});
    CHECK_THROWS_AS(s.score(other), ShapeError);
  }

  TEST_CASE("roi fraction scorer") {
    Mask m({20, 20, 10});
    m.fill_box({0, 0, 0}, {5, 10, 6});
    const Volume v({20, 20, 10}, 1);
    CHECK(RoiFractionScorer(m).score(extract_crop(v, {{10, 10, 6}, {5, 5, 3}})) == doctest::Approx(0.5));
  }
}

TEST_SUITE("run_search") {
  const auto ph = sphere_phantom({64, 64, 24}, {32, 32, 12}, 8.0);

  TEST_CASE("oracle run covers the crop at the prompt") {
    SearchConfig cfg;
    const RoiFractionScorer oracle(ph.mask);
    const RunResult r = run_search(ph.volume, ph.center, cfg, oracle, oracle);
    CHECK(r.trajectory.size() == 81);
    CHECK(r.scores.size() == 81);
    CHECK(r.decisions.size() == 81);
    CHECK(r.decisions[0] == 1);
    Mask first({64, 64, 24});
    first.fill_box(crop_origin({64, 64, 24}, {cfg.crop_size, ph.center}), cfg.crop_size);
    CHECK(subset(first, r.positive_region));
  }

  TEST_CASE("constant one half against high and low thresholds") {
    const Network zero_wsc(NetworkSpec::weakly_supervised());
    const Network zero_fsc(NetworkSpec::fully_supervised({10, 10, 6}));
    const NetworkScorer f(zero_wsc), g(zero_fsc);
    SearchConfig cfg;
    cfg.tau = 0.9;
    CHECK(run_search(ph.volume, ph.center, cfg, f, g).positive_region.empty());
    cfg.tau = 0.4;
    const RunResult all = run_search(ph.volume, ph.center, cfg, f, g);
    Mask expected({64, 64, 24});
    for (const Index3& c : all.trajectory)
      expected.fill_box(crop_origin({64, 64, 24}, {cfg.crop_size, c}), cfg.crop_size);
    CHECK(all.positive_region == expected);
    CHECK(all.positive_crops() == 81);
  }

  TEST_CASE("propagates shape errors from the fsc") {
    const Network fsc(NetworkSpec::fully_supervised({8, 8, 4}));
    const NetworkScorer g(fsc);
    SearchConfig cfg;
    CHECK_THROWS_AS(run_search(ph.volume, ph.center, cfg, ConstantScorer(0.5), g), ShapeError);
  }
}

TEST_SUITE("vote") {
  RunResult run_with(Size3 size, std::initializer_list<std::size_t> voxels) {
    RunResult r;
    r.positive_region = Mask(size);
    std::vector<std::uint8_t> data(size.voxels(), 0);
    for (auto v : voxels) data[v] = 1;
    r.positive_region = Mask(size, data);
    return r;
  }

  TEST_CASE("single run is passed through") {
    const std::vector<RunResult> runs{run_with({3, 1, 1}, {0, 2})};
    CHECK(majority_vote(runs) == runs[0].positive_region);
  }

  TEST_CASE("six runs need four votes") {
    // voxel 0 in 3 runs, voxel 1 in 4 runs, voxel 2 in 6 runs.
    std::vector<RunResult> runs;
    for (int k = 0; k < 6; ++k) {
      std::vector<std::size_t> on{2};
      if (k < 3) on.push_back(0);
      if (k < 4) on.push_back(1);
      RunResult r;
      std::vector<std::uint8_t> data(3, 0);
      for (auto v : on) data[v] = 1;
      r.positive_region = Mask({3, 1, 1}, data);
      runs.push_back(r);
    }
    const VoteMap votes = count_votes(runs);
    CHECK(votes.at(0, 0, 0) == 3);
    CHECK(votes.at(1, 0, 0) == 4);
    const Mask m = majority_vote(runs);
    CHECK_FALSE(m.at(0, 0, 0));
    CHECK(m.at(1, 0, 0));
    CHECK(m.at(2, 0, 0));
  }

  TEST_CASE("identical runs vote to their common region") {
    const RunResult r = run_with({4, 2, 1}, {1, 5, 6});
    const std::vector<RunResult> runs(5, r);
    CHECK(majority_vote(runs) == r.positive_region);
  }

  TEST_CASE("vote counts stay within [0, n]") {
    Rng rng(2);
    std::vector<RunResult> runs;
    for (int k = 0; k < 7; ++k) {
      RunResult r;
      r.positive_region = testing::random_mask({6, 5, 4}, 0.5, rng.below(1000));
      runs.push_back(r);
    }
    const VoteMap v = count_votes(runs);
    for (int c : v.counts) {
      REQUIRE(c >= 0);
      REQUIRE(c <= 7);
    }
  }

  TEST_CASE("errors") {
    CHECK_THROWS_AS(majority_vote(std::span<const RunResult>{}), ValidationError);
    const std::vector<RunResult> mixed{run_with({2, 1, 1}, {}), run_with({3, 1, 1}, {})};
    CHECK_THROWS_AS(majority_vote(mixed), DimensionError);
  }
}

TEST_SUITE("segment") {
  const auto ph = sphere_phantom({64, 64, 24}, {30, 34, 12}, 8.0);
  const RoiFractionScorer oracle(ph.mask);

  TEST_CASE("one run and one prompt equals run_search") {
    SearchConfig cfg;
    cfg.n_runs = 1;
    const Index3 prompts[] = {ph.center};
    const Segmentation s = segment(ph.volume, prompts, cfg, oracle, oracle);
    CHECK(s.mask == run_search(ph.volume, ph.center, cfg, oracle, oracle).positive_region);
    CHECK(s.diagnostics.crops_evaluated == 81);
  }

  TEST_CASE("spiral evaluates (T+1) * n crops per prompt") {
    SearchConfig cfg;
    const Index3 prompts[] = {ph.center, {28, 30, 11}};
    const Segmentation s = segment(ph.volume, prompts, cfg, oracle, oracle);
    CHECK(s.diagnostics.crops_evaluated == 2 * 81 * 6);
    REQUIRE(s.diagnostics.positive_crops.size() == 2);
    CHECK(s.diagnostics.positive_crops[0].size() == 6);
  }

  TEST_CASE("duplicate prompts do not change the mask") {
    SearchConfig cfg;
    const Index3 one[] = {ph.center};
    const Index3 two[] = {ph.center, ph.center};
    CHECK(segment(ph.volume, one, cfg, oracle, oracle).mask == segment(ph.volume, two, cfg, oracle, oracle).mask);
  }

  TEST_CASE("extra prompts do not lower the oracle dice") {
    SearchConfig cfg;
    const Index3 one[] = {ph.center};
    const Index3 three[] = {ph.center, {ph.center.w - 4, ph.center.h, ph.center.d},
                            {ph.center.w + 4, ph.center.h, ph.center.d}};
    const auto dice = [&](const Mask& m) {
      std::size_t inter = 0;
      for (std::size_t i = 0; i < m.data().size(); ++i) inter += m.data()[i] & ph.mask.data()[i];
      return 2.0 * inter / static_cast<double>(m.count() + ph.mask.count());
    };
    const Mask a = segment(ph.volume, one, cfg, oracle, oracle).mask;
    const Mask b = segment(ph.volume, three, cfg, oracle, oracle).mask;
    CHECK(subset(a, b));
    CHECK(dice(b) >= dice(a));
  }

  TEST_CASE("tau monotonicity") {
    Mask previous;
    bool first = true;
    for (double tau : {0.01, 0.05, 0.10, 0.3}) {
      SearchConfig cfg;
      cfg.tau = tau;
      const Index3 prompts[] = {{ph.center.w + 3, ph.center.h - 2, ph.center.d}};
      const Mask m = segment(ph.volume, prompts, cfg, oracle, oracle).mask;
      if (!first) CHECK(subset(m, previous));
      previous = m;
      first = false;
    }
  }

  TEST_CASE("alpha endpoints ignore the unused network") {
    const Network wsc = Network::initialized(NetworkSpec::weakly_supervised(), 1);
    const Network fsc = Network::initialized(NetworkSpec::fully_supervised({10, 10, 6}), 2);
    const Network other_wsc = Network::initialized(NetworkSpec::weakly_supervised(), 3);
    const Network other_fsc = Network::initialized(NetworkSpec::fully_supervised({10, 10, 6}), 4);
    const Volume v = testing::random_volume({32, 32, 12}, 2, 5);
    const Index3 prompts[] = {{16, 16, 6}};
    SearchConfig cfg;
    cfg.n_runs = 2;
    cfg.set_steps(20, 8.0);
    cfg.tau = 0.5;
    cfg.alpha = 1.0;
    CHECK(segment(v, prompts, cfg, NetworkScorer(wsc), NetworkScorer(fsc)).mask ==
          segment(v, prompts, cfg, NetworkScorer(wsc), NetworkScorer(other_fsc)).mask);
    cfg.alpha = 0.0;
    CHECK(segment(v, prompts, cfg, NetworkScorer(wsc), NetworkScorer(fsc)).mask ==
          segment(v, prompts, cfg, NetworkScorer(other_wsc), NetworkScorer(fsc)).mask);
  }

  TEST_CASE("deterministic for every strategy") {
    for (Strategy s : {Strategy::Spiral, Strategy::SlidingWindow, Strategy::Random}) {
      SearchConfig cfg;
      cfg.strategy = s;
      cfg.seed = 4;
      const Index3 prompts[] = {ph.center};
      CHECK(segment(ph.volume, prompts, cfg, oracle, oracle).mask ==
            segment(ph.volume, prompts, cfg, oracle, oracle).mask);
    }
  }

  TEST_CASE("out-of-volume prompt names its index") {
    SearchConfig cfg;
    const Index3 prompts[] = {ph.center, {64, 10, 10}};
    try {
      segment(ph.volume, prompts, cfg, oracle, oracle);
      FAIL("expected a prompt error");
    } catch (const PromptError& e) {
      CHECK(e.index() == 1);
    }
    CHECK_THROWS_AS(segment(ph.volume, std::span<const Index3>{}, cfg, oracle, oracle), ValidationError);
  }

  TEST_CASE("strategy names") {
    CHECK(strategy_from_string("sliding_window") == Strategy::SlidingWindow);
    CHECK(to_string(Strategy::Random) == "random");
    CHECK_THROWS_AS(strategy_from_string("bfs"), ValidationError);
  }
}
