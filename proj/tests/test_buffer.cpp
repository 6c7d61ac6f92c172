#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "tom/buffer.hpp"
#include "tom/envs.hpp"

using namespace tom;

namespace {

Transition make_transition(double tag, bool start = false) {
  Transition t;
  t.state = Eigen::VectorXd::Constant(2, tag);
  t.action = Eigen::VectorXd::Constant(1, tag);
  t.next_state = Eigen::VectorXd::Constant(2, tag + 0.5);
  t.reward = tag;
  t.episode_start = start;
  return t;
}

Transition tabular_transition(int s, int a, bool start = false) {
  Transition t;
  t.state = Eigen::VectorXd::Constant(1, s);
  t.action = Eigen::VectorXd::Constant(1, a);
  t.next_state = Eigen::VectorXd::Constant(1, s);
  t.reward = 0.0;
  t.episode_start = start;
  return t;
}

}  // namespace

TEST_CASE("buffer_push: size grows, FIFO eviction keeps the newest entries") {
  ReplayBuffer buf(3);
  buf.push(make_transition(0, true));
  CHECK(buf.size() == 1);
  for (int i = 1; i < 4; ++i) buf.push(make_transition(i));
  CHECK(buf.size() == 3);
  CHECK(buf[0].reward == doctest::Approx(1.0));
  CHECK(buf[1].reward == doctest::Approx(2.0));
  CHECK(buf[2].reward == doctest::Approx(3.0));
  CHECK(buf[2].insertion_index == 3);  // zero-based stamp of the 4th push
  // temporal ordering of insertion_index survives eviction
  CHECK(buf[0].insertion_index < buf[1].insertion_index);
  CHECK(buf[1].insertion_index < buf[2].insertion_index);
}

TEST_CASE("buffer_push rejects mismatched dimensions") {
  ReplayBuffer buf(10);
  buf.push(make_transition(0));
  Transition bad = make_transition(1);
  bad.state = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(buf.push(std::move(bad)), std::invalid_argument);
}

TEST_CASE("buffer_sample: degenerate weight vectors") {
  ReplayBuffer buf(10);
  for (int i = 0; i < 3; ++i) buf.push(make_transition(i));
  Rng rng(1);
  Eigen::VectorXd w(3);
  w << 1.0, 0.0, 0.0;
  for (std::size_t idx : buf.sample_indices(50, w, rng)) CHECK(idx == 0);
  CHECK_THROWS_AS(buf.sample_indices(1, Eigen::VectorXd::Zero(3), rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(buf.sample_indices(1, Eigen::VectorXd::Ones(2), rng),
                  std::invalid_argument);
}

TEST_CASE("buffer_sample: uniform frequencies over 100k draws") {
  ReplayBuffer buf(10);
  for (int i = 0; i < 4; ++i) buf.push(make_transition(i));
  Rng rng(2);
  Eigen::Vector4d counts = Eigen::Vector4d::Zero();
  const int draws = 100000;
  for (std::size_t idx : buf.sample_indices(draws, rng)) counts[static_cast<int>(idx)] += 1.0;
  for (int i = 0; i < 4; ++i) CHECK(std::abs(counts[i] / draws - 0.25) < 0.01);

  // chi-square goodness of fit at p > 0.01 (df = 3, critical value 11.345)
  double chi2 = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double expected = draws / 4.0;
    chi2 += (counts[i] - expected) * (counts[i] - expected) / expected;
  }
  CHECK(chi2 < 11.345);
}

TEST_CASE("buffer_sample: weighted frequencies converge to the weights") {
  ReplayBuffer buf(10);
  buf.push(make_transition(0));
  buf.push(make_transition(1));
  Rng rng(3);
  Eigen::VectorXd w(2);
  w << 3.0, 1.0;
  const int draws = 100000;
  int count0 = 0;
  for (std::size_t idx : buf.sample_indices(draws, w, rng)) count0 += idx == 0;
  CHECK(std::abs(static_cast<double>(count0) / draws - 0.75) < 0.01);

  // chi-square against the target distribution (df = 1, critical 6.635)
  const double e0 = draws * 0.75, e1 = draws * 0.25;
  const double chi2 = (count0 - e0) * (count0 - e0) / e0 +
                      (draws - count0 - e1) * (draws - count0 - e1) / e1;
  CHECK(chi2 < 6.635);
}

TEST_CASE("empirical_policy: count ratios and row sums") {
  ReplayBuffer buf(100);
  for (int i = 0; i < 3; ++i) buf.push(tabular_transition(0, 0));
  buf.push(tabular_transition(0, 1));
  const EmpiricalPolicy ep = empirical_policy(buf, 3, 2);
  CHECK(ep.pi(0, 0) == doctest::Approx(0.75));
  CHECK(ep.pi(0, 1) == doctest::Approx(0.25));
  CHECK(ep.visited[0]);
  CHECK_FALSE(ep.visited[1]);  // unvisited states flagged, not filled

  SUBCASE("single action everywhere") {
    ReplayBuffer only(100);
    for (int s = 0; s < 3; ++s) only.push(tabular_transition(s, 0));
    const EmpiricalPolicy ep2 = empirical_policy(only, 3, 2);
    for (int s = 0; s < 3; ++s) CHECK(ep2.pi(s, 0) == doctest::Approx(1.0));
  }

  SUBCASE("row sums equal one on random buffers") {
    Rng rng(8);
    ReplayBuffer rnd(1000);
    for (int i = 0; i < 500; ++i) {
      rnd.push(tabular_transition(static_cast<int>(rng.uniform_int(4)),
                                  static_cast<int>(rng.uniform_int(3))));
    }
    const EmpiricalPolicy ep3 = empirical_policy(rnd, 4, 3);
    for (int s = 0; s < 4; ++s) {
      if (ep3.visited[static_cast<std::size_t>(s)]) {
        CHECK(std::abs(ep3.pi.row(s).sum() - 1.0) < 1e-12);
      }
    }
  }
}

TEST_CASE("initial_state_batch: uniform over episode starts") {
  ReplayBuffer buf(100);
  buf.push(make_transition(7.0, true));
  for (int i = 0; i < 5; ++i) buf.push(make_transition(1.0));
  Rng rng(4);
  for (const auto& s : buf.initial_state_batch(20, rng)) {
    CHECK(s[0] == doctest::Approx(7.0));
  }

  SUBCASE("two starts split evenly") {
    buf.push(make_transition(9.0, true));
    int hits7 = 0;
    const int draws = 10000;
    for (const auto& s : buf.initial_state_batch(draws, rng)) hits7 += s[0] == 7.0;
    CHECK(std::abs(static_cast<double>(hits7) / draws - 0.5) < 0.02);
  }

  SUBCASE("no start flags is an error") {
    ReplayBuffer empty_starts(10);
    empty_starts.push(make_transition(1.0, false));
    CHECK_THROWS_AS(empty_starts.initial_state_batch(1, rng), std::runtime_error);
  }
}

TEST_CASE("collect_rollout basics on a deterministic setup") {
  PointMassReach env;
  const PolicyFn zero_policy = [](const Eigen::VectorXd&, Rng&) {
    return Eigen::VectorXd::Zero(2);
  };
  Rng rng(5);
  CHECK(collect_rollout(env, zero_policy, 0, rng).empty());

  Rng a(6), b(6);
  const auto ra = collect_rollout(env, zero_policy, 10, a);
  const auto rb = collect_rollout(env, zero_policy, 10, b);
  REQUIRE(ra.size() == 10);
  CHECK(ra.front().episode_start);
  CHECK_FALSE(ra[1].episode_start);
  for (std::size_t i = 0; i < ra.size(); ++i) {
    CHECK(ra[i].state == rb[i].state);
    CHECK(ra[i].next_state == rb[i].next_state);
  }
  // temporal chaining
  for (std::size_t i = 1; i < ra.size(); ++i) CHECK(ra[i].state == ra[i - 1].next_state);
}

TEST_CASE("current-policy buffer equals the replay suffix under one stream") {
  ReplayBuffer replay(ReplayBuffer::kDefaultCapacity);
  CurrentPolicyBuffer pool = make_current_policy_buffer();
  Rng rng(9);
  for (int i = 0; i < 2500; ++i) {
    Transition t = make_transition(rng.normal(), i % 200 == 0);
    replay.push(t);
    pool.push(t);
  }
  CHECK(pool.size() == ReplayBuffer::kCurrentPolicyCapacity);
  const std::size_t offset = replay.size() - pool.size();
  for (std::size_t i = 0; i < pool.size(); ++i) {
    CHECK(pool[i].state == replay[offset + i].state);
    CHECK(pool[i].reward == replay[offset + i].reward);
  }
}

TEST_CASE("round boundaries: membership and survivors after eviction") {
  ReplayBuffer buf(100);
  buf.begin_round();
  for (int i = 0; i < 3; ++i) buf.push(make_transition(i));
  buf.begin_round();
  for (int i = 0; i < 2; ++i) buf.push(make_transition(10 + i));
  const auto rounds = buf.rounds();
  CHECK(rounds == std::vector<int>{0, 0, 0, 1, 1});
  CHECK(buf.round_count() == 2);
}

TEST_CASE("buffer CSV round trip preserves contents and rounds") {
  const std::string path = "buffer_roundtrip_test.csv";
  ReplayBuffer buf(100);
  Rng rng(11);
  buf.begin_round();
  for (int i = 0; i < 7; ++i) {
    Transition t;
    t.state = Eigen::Vector2d(rng.normal(), rng.normal());
    t.action = Eigen::VectorXd::Constant(1, rng.normal());
    t.next_state = Eigen::Vector2d(rng.normal(), rng.normal());
    t.reward = rng.uniform();
    t.episode_start = (i % 3 == 0);
    buf.push(std::move(t));
    if (i == 3) buf.begin_round();
  }
  buf.save_csv(path);
  const ReplayBuffer loaded = ReplayBuffer::load_csv(path);
  REQUIRE(loaded.size() == buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    CHECK(loaded[i].state == buf[i].state);
    CHECK(loaded[i].action == buf[i].action);
    CHECK(loaded[i].next_state == buf[i].next_state);
    CHECK(loaded[i].reward == buf[i].reward);
    CHECK(loaded[i].episode_start == buf[i].episode_start);
    CHECK(loaded[i].insertion_index == buf[i].insertion_index);
  }
  CHECK(loaded.rounds() == buf.rounds());
  std::filesystem::remove(path);
}
