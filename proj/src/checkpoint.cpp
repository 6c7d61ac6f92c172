#include "tom/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

namespace tom {
namespace {

using nlohmann::json;

json spec_to_json(const MlpSpec& spec) {
  return json{{"input_dim", spec.input_dim},
              {"hidden_layers", spec.hidden_layers},
              {"output_dim", spec.output_dim},
              {"hidden_activation", activation_name(spec.hidden_activation)},
              {"output_activation", activation_name(spec.output_activation)}};
}

MlpSpec spec_from_json(const json& j) {
  MlpSpec spec;
  spec.input_dim = j.at("input_dim").get<int>();
  spec.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
  spec.output_dim = j.at("output_dim").get<int>();
  spec.hidden_activation = activation_from_name(j.at("hidden_activation").get<std::string>());
  spec.output_activation = activation_from_name(j.at("output_activation").get<std::string>());
  return spec;
}

json vector_to_json(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto raw = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(raw.data(), static_cast<Eigen::Index>(raw.size()));
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(std::vector<double>(m.row(i).begin(), m.row(i).end()));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows[0].size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(i, c) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
    }
  }
  return m;
}

void write_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  out << j.dump(1);
}

json read_json(const std::string& path, const char* expected_kind) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  json j;
  in >> j;
  if (j.value("kind", "") != expected_kind) {
    throw std::runtime_error("checkpoint: " + path + " is not a " + expected_kind +
                             " checkpoint");
  }
  if (j.value("version", 0) != 1) {
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  }
  return j;
}

}  // namespace

void save_discriminator(const Discriminator& disc, const std::string& path) {
  write_json(json{{"version", 1},
                  {"kind", "discriminator"},
                  {"net", spec_to_json(disc.net)},
                  {"clamp_epsilon", disc.clamp_epsilon},
                  {"reward_clip", disc.reward_clip},
                  {"params", vector_to_json(disc.params)}},
             path);
}

Discriminator load_discriminator(const std::string& path) {
  const json j = read_json(path, "discriminator");
  Discriminator d;
  d.net = spec_from_json(j.at("net"));
  d.clamp_epsilon = j.at("clamp_epsilon").get<double>();
  d.reward_clip = j.at("reward_clip").get<double>();
  d.params = vector_from_json(j.at("params"));
  require(d.params.size() == d.net.param_count(), "discriminator checkpoint: size mismatch");
  return d;
}

void save_dual_q(const DualQ& q, const std::string& path) {
  write_json(json{{"version", 1},
                  {"kind", "dual_q"},
                  {"net", spec_to_json(q.net)},
                  {"gamma", q.gamma},
                  {"value_action_samples", q.value_action_samples},
                  {"params", vector_to_json(q.params)}},
             path);
}

DualQ load_dual_q(const std::string& path) {
  const json j = read_json(path, "dual_q");
  DualQ q;
  q.net = spec_from_json(j.at("net"));
  q.gamma = j.at("gamma").get<double>();
  q.value_action_samples = j.at("value_action_samples").get<int>();
  q.params = vector_from_json(j.at("params"));
  require(q.params.size() == q.net.param_count(), "dual_q checkpoint: size mismatch");
  return q;
}

void save_policy(const StochasticPolicy& policy, const std::string& path) {
  write_json(json{{"version", 1},
                  {"kind", "policy"},
                  {"actor", spec_to_json(policy.actor)},
                  {"action_low", vector_to_json(policy.action_low)},
                  {"action_high", vector_to_json(policy.action_high)},
                  {"params", vector_to_json(policy.params)}},
             path);
}

StochasticPolicy load_policy(const std::string& path) {
  const json j = read_json(path, "policy");
  StochasticPolicy p;
  p.actor = spec_from_json(j.at("actor"));
  p.action_low = vector_from_json(j.at("action_low"));
  p.action_high = vector_from_json(j.at("action_high"));
  p.params = vector_from_json(j.at("params"));
  require(p.params.size() == p.actor.param_count(), "policy checkpoint: size mismatch");
  return p;
}

void save_gaussian_mlp(const GaussianMlpModel& model, const std::string& path) {
  write_json(json{{"version", 1},
                  {"kind", "gaussian_mlp_model"},
                  {"mean_net", spec_to_json(model.mean_net)},
                  {"state_dim", model.state_dim},
                  {"action_dim", model.action_dim},
                  {"predicts_delta", model.predicts_delta},
                  {"params", vector_to_json(model.params)}},
             path);
}

GaussianMlpModel load_gaussian_mlp(const std::string& path) {
  const json j = read_json(path, "gaussian_mlp_model");
  GaussianMlpModel m;
  m.mean_net = spec_from_json(j.at("mean_net"));
  m.state_dim = j.at("state_dim").get<int>();
  m.action_dim = j.at("action_dim").get<int>();
  m.predicts_delta = j.at("predicts_delta").get<bool>();
  m.params = vector_from_json(j.at("params"));
  require(m.params.size() == m.net_param_count() + m.state_dim,
          "gaussian_mlp checkpoint: size mismatch");
  return m;
}

void save_linear_gaussian(const LinearGaussianModel& model, const std::string& path) {
  write_json(json{{"version", 1},
                  {"kind", "linear_gaussian_model"},
                  {"a", matrix_to_json(model.a)},
                  {"b", matrix_to_json(model.b)},
                  {"c", vector_to_json(model.c)},
                  {"noise_std", vector_to_json(model.noise_std)}},
             path);
}

LinearGaussianModel load_linear_gaussian(const std::string& path) {
  const json j = read_json(path, "linear_gaussian_model");
  LinearGaussianModel m;
  m.a = matrix_from_json(j.at("a"));
  m.b = matrix_from_json(j.at("b"));
  m.c = vector_from_json(j.at("c"));
  m.noise_std = vector_from_json(j.at("noise_std"));
  return m;
}

}  // namespace tom
