#include "tom/buffer.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "tom/envs.hpp"

namespace tom {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  require(capacity >= 1, "ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
  if (!data_.empty()) {
    const auto& prev = data_.back();
    require(t.state.size() == prev.state.size() && t.action.size() == prev.action.size() &&
                t.next_state.size() == prev.next_state.size(),
            "ReplayBuffer::push: transition dimensions do not match buffer contents");
  }
  t.insertion_index = next_index_++;
  data_.push_back(std::move(t));
  if (data_.size() > capacity_) data_.pop_front();
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  return sample_indices(batch, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(size())), rng);
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch,
                                                      const Eigen::VectorXd& weights,
                                                      Rng& rng) const {
  require(static_cast<std::size_t>(weights.size()) == size(),
          "ReplayBuffer::sample_indices: weights length must equal buffer size");
  require((weights.array() >= 0.0).all(), "ReplayBuffer::sample_indices: negative weight");
  // Categorical sampling over cumulative sums.
  Eigen::VectorXd cum(weights.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    total += weights[i];
    cum[i] = total;
  }
  if (!(total > 0.0)) {
    throw std::invalid_argument("ReplayBuffer::sample_indices: weights sum to zero");
  }
  std::vector<std::size_t> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const double u = rng.uniform() * total;
    const double* it = std::upper_bound(cum.data(), cum.data() + cum.size(), u);
    std::size_t idx = static_cast<std::size_t>(it - cum.data());
    if (idx >= size()) idx = size() - 1;
    out[b] = idx;
  }
  return out;
}

void ReplayBuffer::begin_round() { round_starts_.push_back(next_index_); }

int ReplayBuffer::round_count() const {
  if (data_.empty()) return 0;
  int n = 1;
  for (std::int64_t start : round_starts_) {
    if (start > data_.front().insertion_index && start <= data_.back().insertion_index) ++n;
  }
  return n;
}

std::vector<int> ReplayBuffer::rounds() const {
  std::vector<int> out(size(), 0);
  if (data_.empty()) return out;
  // Boundaries at or before the oldest surviving transition collapse into
  // round 0.
  std::vector<std::int64_t> cuts;
  for (std::int64_t start : round_starts_) {
    if (start > data_.front().insertion_index && start <= data_.back().insertion_index) {
      cuts.push_back(start);
    }
  }
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t i = 0; i < size(); ++i) {
    const std::int64_t idx = data_[i].insertion_index;
    out[i] = static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), idx) - cuts.begin());
  }
  return out;
}

std::vector<Eigen::VectorXd> ReplayBuffer::initial_state_batch(std::size_t batch,
                                                               Rng& rng) const {
  std::vector<const Transition*> starts;
  for (const auto& t : data_) {
    if (t.episode_start) starts.push_back(&t);
  }
  if (starts.empty()) {
    throw std::runtime_error("initial_state_batch: buffer holds no episode-start transitions");
  }
  std::vector<Eigen::VectorXd> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    out.push_back(starts[static_cast<std::size_t>(rng.uniform_int(
                      static_cast<std::int64_t>(starts.size())))]->state);
  }
  return out;
}

void ReplayBuffer::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  const int sd = data_.empty() ? 0 : static_cast<int>(data_.front().state.size());
  const int ad = data_.empty() ? 0 : static_cast<int>(data_.front().action.size());
  out << "# tom-buffer v1 state_dim=" << sd << " action_dim=" << ad
      << " rounds=";
  for (std::size_t i = 0; i < round_starts_.size(); ++i) {
    if (i) out << ';';
    out << round_starts_[i];
  }
  out << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out << buf;
  };
  for (const auto& t : data_) {
    for (Eigen::Index i = 0; i < t.state.size(); ++i) { put(t.state[i]); out << ','; }
    for (Eigen::Index i = 0; i < t.action.size(); ++i) { put(t.action[i]); out << ','; }
    for (Eigen::Index i = 0; i < t.next_state.size(); ++i) { put(t.next_state[i]); out << ','; }
    put(t.reward);
    out << ',' << (t.episode_start ? 1 : 0) << ',' << t.insertion_index << "\n";
  }
}

ReplayBuffer ReplayBuffer::load_csv(const std::string& path, std::size_t capacity) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string header;
  std::getline(in, header);
  int sd = -1, ad = -1;
  std::string rounds_field;
  {
    std::istringstream hs(header);
    std::string tok;
    while (hs >> tok) {
      if (tok.rfind("state_dim=", 0) == 0) sd = std::stoi(tok.substr(10));
      if (tok.rfind("action_dim=", 0) == 0) ad = std::stoi(tok.substr(11));
      if (tok.rfind("rounds=", 0) == 0) rounds_field = tok.substr(7);
    }
  }
  if (sd < 0 || ad < 0) throw std::runtime_error("load_csv: malformed header in " + path);

  ReplayBuffer buf(capacity);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
    const std::size_t expected = static_cast<std::size_t>(2 * sd + ad + 3);
    if (vals.size() != expected) throw std::runtime_error("load_csv: bad row in " + path);
    Transition t;
    t.state = Eigen::Map<Eigen::VectorXd>(vals.data(), sd);
    t.action = Eigen::Map<Eigen::VectorXd>(vals.data() + sd, ad);
    t.next_state = Eigen::Map<Eigen::VectorXd>(vals.data() + sd + ad, sd);
    t.reward = vals[2 * sd + ad];
    t.episode_start = vals[2 * sd + ad + 1] != 0.0;
    buf.push(std::move(t));
  }
  // Restore recorded round boundaries.
  if (!rounds_field.empty()) {
    std::istringstream rs(rounds_field);
    std::string tok;
    while (std::getline(rs, tok, ';')) {
      if (!tok.empty()) buf.round_starts_.push_back(std::stoll(tok));
    }
  }
  return buf;
}

EmpiricalPolicy empirical_policy(const ReplayBuffer& buffer, int n_states, int n_actions) {
  require(n_states >= 1 && n_actions >= 1, "empirical_policy: grid must be positive");
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(n_states, n_actions);
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    const auto& t = buffer[i];
    require(t.state.size() == 1 && t.action.size() == 1,
            "empirical_policy: requires tabular (index) transitions");
    const int s = static_cast<int>(t.state[0]);
    const int a = static_cast<int>(t.action[0]);
    require(s >= 0 && s < n_states && a >= 0 && a < n_actions,
            "empirical_policy: index out of range");
    counts(s, a) += 1.0;
  }
  EmpiricalPolicy out;
  out.pi = Eigen::MatrixXd::Zero(n_states, n_actions);
  out.visited.assign(static_cast<std::size_t>(n_states), false);
  for (int s = 0; s < n_states; ++s) {
    const double n = counts.row(s).sum();
    if (n > 0.0) {
      out.pi.row(s) = counts.row(s) / n;
      out.visited[static_cast<std::size_t>(s)] = true;
    }
  }
  return out;
}

std::vector<Transition> collect_rollout(const Env& env, const PolicyFn& policy, int max_steps,
                                        Rng& rng) {
  std::vector<Transition> out;
  if (max_steps <= 0) return out;
  Eigen::VectorXd s = env.reset(rng);
  const int steps = std::min(max_steps, env.spec().horizon);
  for (int i = 0; i < steps; ++i) {
    Eigen::VectorXd a = policy(s, rng);
    auto [s2, r] = env.step(s, a, rng);
    Transition t;
    t.state = s;
    t.action = std::move(a);
    t.next_state = s2;
    t.reward = r;
    t.episode_start = (i == 0);
    out.push_back(std::move(t));
    s = std::move(s2);
  }
  return out;
}

}  // namespace tom
