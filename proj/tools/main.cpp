#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "tom/checkpoint.hpp"
#include "tom/envs.hpp"
#include "tom/loop.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::unique_ptr<tom::Env> make_env(const std::string& name, std::uint64_t map_seed) {
  if (name == "point_mass") return std::make_unique<tom::PointMassReach>();
  if (name == "road_and_rocks") return std::make_unique<tom::RoadAndRocks>(map_seed);
  throw CLI::ValidationError("--env", "unknown environment: " + name);
}

struct TrainOptions {
  std::string mode = "online";
  std::string env_name = "point_mass";
  std::string scheme = "uniform";
  std::string divergence = "chi_squared";
  std::string model = "auto";
  std::string out_dir = "runs";
  std::string dataset_path;
  std::string policy_data_path;
  std::uint64_t seed = 0;
  std::uint64_t map_seed = 7;
  bool print_config = false;
  tom::LoopConfig loop;
};

void add_train_options(CLI::App* cmd, TrainOptions& opt) {
  cmd->add_option("--mode", opt.mode, "online or offline")
      ->check(CLI::IsMember({"online", "offline"}))
      ->capture_default_str();
  cmd->add_option("--env", opt.env_name, "environment: point_mass or road_and_rocks")
      ->check(CLI::IsMember({"point_mass", "road_and_rocks"}))
      ->capture_default_str();
  cmd->add_option("--scheme", opt.scheme, "model-weighting scheme: uniform, tom or pmac")
      ->check(CLI::IsMember({"uniform", "tom", "pmac"}))
      ->capture_default_str();
  cmd->add_option("--divergence", opt.divergence, "f-divergence: chi_squared or kl")
      ->check(CLI::IsMember({"chi_squared", "kl"}))
      ->capture_default_str();
  cmd->add_option("--model", opt.model,
                  "dynamics model: gaussian_mlp, linear, or auto (linear when offline)")
      ->check(CLI::IsMember({"auto", "gaussian_mlp", "linear"}))
      ->capture_default_str();
  cmd->add_option("--out", opt.out_dir, "output root directory")->capture_default_str();
  cmd->add_option("--dataset", opt.dataset_path, "offline mode: buffer CSV with the dataset");
  cmd->add_option("--policy-data", opt.policy_data_path,
                  "offline mode: buffer CSV with current-policy transitions");
  cmd->add_option("--seed", opt.seed, "run seed")->capture_default_str();
  cmd->add_option("--map-seed", opt.map_seed, "road_and_rocks map seed")->capture_default_str();
  cmd->add_flag("--print-config", opt.print_config,
                "print the resolved configuration with defaults and exit");

  tom::LoopConfig& c = opt.loop;
  cmd->add_option("--epochs", c.epochs)->capture_default_str();
  cmd->add_option("--env-steps-per-epoch", c.env_steps_per_epoch)->capture_default_str();
  cmd->add_option("--init-env-steps", c.init_env_steps)->capture_default_str();
  cmd->add_option("--rollout-batch", c.rollout_batch)->capture_default_str();
  cmd->add_option("--rollout-length", c.rollout_length)->capture_default_str();
  cmd->add_option("--policy-updates-per-step", c.policy_updates_per_step)
      ->capture_default_str();
  cmd->add_option("--discriminator-steps", c.discriminator_steps)->capture_default_str();
  cmd->add_option("--dual-q-steps", c.dual_q_steps)->capture_default_str();
  cmd->add_option("--model-steps", c.model_steps)->capture_default_str();
  cmd->add_option("--batch-size", c.batch_size)->capture_default_str();
  cmd->add_option("--eval-episodes", c.eval_episodes)->capture_default_str();
  cmd->add_option("--value-action-samples", c.value_action_samples)->capture_default_str();
  cmd->add_option("--weight-action-samples", c.weight_action_samples)->capture_default_str();
  cmd->add_option("--learning-rate", c.learning_rate)->capture_default_str();
  cmd->add_option("--alpha", c.alpha)->capture_default_str();
  cmd->add_option("--polyak", c.polyak)->capture_default_str();
  cmd->add_option("--pmac-decay", c.scheme.decay_rate)->capture_default_str();
  cmd->add_option("--hidden", c.actor_hidden,
                  "hidden layer sizes applied to every network")
      ->capture_default_str();
  cmd->add_flag("--loss-weighting", c.loss_weighting,
                "consume weights in the loss instead of by sampling");
  cmd->add_flag("--force-unit-weights", c.force_unit_weights,
                "diagnostic: run the tom machinery but pin weights to 1");
  cmd->set_config("--config", "", "configuration file (ini-style key=value)");
}

int run_train(const CLI::App* cmd, TrainOptions& opt) {
  if (opt.print_config) {
    std::cout << cmd->config_to_str(true, true);
    return 0;
  }
  opt.loop.seed = opt.seed;
  opt.loop.scheme.kind = tom::weight_scheme_from_name(opt.scheme);
  opt.loop.divergence = tom::FDivergence::from_name(opt.divergence).kind;
  if (opt.model == "auto") opt.model = (opt.mode == "offline") ? "linear" : "gaussian_mlp";
  opt.loop.model_kind =
      opt.model == "linear" ? tom::ModelKind::kLinearGaussian : tom::ModelKind::kGaussianMlp;
  opt.loop.critic_hidden = opt.loop.actor_hidden;
  opt.loop.model_hidden = opt.loop.actor_hidden;
  opt.loop.disc_hidden = opt.loop.actor_hidden;
  opt.loop.q_hidden = opt.loop.actor_hidden;

  std::string root = opt.out_dir;
  if (const char* env_root = std::getenv("TOM_OUTPUT_ROOT")) {
    root = std::string(env_root) + "/" + root;
  }
  const std::string run_name = "run_" + opt.mode + "_" + opt.env_name + "_" + opt.scheme +
                               "_seed" + std::to_string(opt.seed);
  const fs::path run_dir = fs::path(root) / run_name;
  fs::create_directories(run_dir);

  const std::string config_text = cmd->config_to_str(true, false);
  {
    json manifest{{"schema", "tom-manifest v1"},
                  {"seed", opt.seed},
                  {"config", config_text},
                  {"config_hash", fnv1a(config_text)}};
    std::ofstream out(run_dir / "manifest.json");
    out << manifest.dump(1);
  }

  auto env = make_env(opt.env_name, opt.map_seed);
  tom::Rng rng(opt.seed);
  tom::RunResult result;
  if (opt.mode == "online") {
    result = tom::run_online(opt.loop, *env, rng);
  } else {
    if (opt.dataset_path.empty()) {
      throw CLI::ValidationError("--dataset", "offline mode needs a dataset CSV");
    }
    tom::ReplayBuffer dataset = tom::ReplayBuffer::load_csv(opt.dataset_path);
    tom::ReplayBuffer policy_data = tom::make_current_policy_buffer();
    if (!opt.policy_data_path.empty()) {
      policy_data = tom::ReplayBuffer::load_csv(opt.policy_data_path,
                                                tom::ReplayBuffer::kCurrentPolicyCapacity);
    } else {
      for (std::size_t i = dataset.size() - std::min<std::size_t>(dataset.size(), 1000);
           i < dataset.size(); ++i) {
        policy_data.push(dataset[i]);
      }
    }
    result = tom::run_offline(opt.loop, dataset, policy_data, *env, rng);
  }

  tom::write_metrics_csv(result, (run_dir / "metrics.csv").string());
  tom::write_phases_csv(result, (run_dir / "phases.csv").string());
  tom::save_policy(result.policy, (run_dir / "policy.json").string());
  if (result.mlp_model) {
    tom::save_gaussian_mlp(*result.mlp_model, (run_dir / "model.json").string());
  }
  if (result.linear_model) {
    tom::save_linear_gaussian(*result.linear_model, (run_dir / "model.json").string());
  }
  if (result.discriminator) {
    tom::save_discriminator(*result.discriminator, (run_dir / "discriminator.json").string());
  }
  if (result.dual_q) tom::save_dual_q(*result.dual_q, (run_dir / "dual_q.json").string());
  result.replay.save_csv((run_dir / "buffer.csv").string());
  if (result.last_weights.size() > 0) {
    std::function<int(const tom::Transition&)> flag;
    if (opt.env_name == "road_and_rocks") {
      const auto road = std::make_shared<tom::RoadAndRocks>(opt.map_seed);
      flag = [road](const tom::Transition& t) { return road->is_on_road(t.state) ? 1 : 0; };
    }
    tom::write_weights_csv(result.last_weights, result.replay, flag,
                           (run_dir / "weights.csv").string());
  }
  {
    json meta{{"schema", "tom-run-meta v1"},
              {"env", opt.env_name},
              {"map_seed", opt.map_seed},
              {"divergence", opt.divergence},
              {"gamma", env->spec().gamma},
              {"weight_action_samples", opt.loop.weight_action_samples},
              {"failed", result.failed},
              {"failure", result.failure}};
    std::ofstream out(run_dir / "meta.json");
    out << meta.dump(1);
  }
  std::cout << "run directory: " << run_dir.string() << "\n";
  if (result.failed) {
    std::cerr << "run failed: " << result.failure << "\n";
    return 2;
  }
  return 0;
}

struct DumpWeightsOptions {
  std::string checkpoint_dir;
  std::string buffer_path;
  std::string out_path = "weights.csv";
  std::uint64_t seed = 0;
};

int run_dump_weights(const DumpWeightsOptions& opt) {
  const fs::path dir(opt.checkpoint_dir);
  json meta;
  {
    std::ifstream in(dir / "meta.json");
    if (!in) throw std::runtime_error("dump-weights: missing meta.json in " + opt.checkpoint_dir);
    in >> meta;
  }
  tom::Discriminator disc = tom::load_discriminator((dir / "discriminator.json").string());
  tom::DualQ dualq = tom::load_dual_q((dir / "dual_q.json").string());
  tom::StochasticPolicy policy = tom::load_policy((dir / "policy.json").string());
  tom::ReplayBuffer buffer = tom::ReplayBuffer::load_csv(opt.buffer_path);
  if (buffer.empty()) throw std::runtime_error("dump-weights: buffer is empty");
  const int sd = static_cast<int>(buffer[0].state.size());
  const int ad = static_cast<int>(buffer[0].action.size());
  if (disc.net.input_dim != 2 * sd + ad || dualq.net.input_dim != sd + ad) {
    throw std::runtime_error("dump-weights: checkpoint and buffer dimensions do not match");
  }

  const tom::FDivergence div =
      tom::FDivergence::from_name(meta.value("divergence", "chi_squared"));
  tom::Rng rng(opt.seed);
  const Eigen::VectorXd weights =
      tom::importance_weights(dualq, tom::make_action_sampler(policy), disc, buffer, div,
                              meta.value("weight_action_samples", 16), rng);

  std::function<int(const tom::Transition&)> flag;
  if (meta.value("env", "") == "road_and_rocks") {
    const auto road = std::make_shared<tom::RoadAndRocks>(
        meta.value("map_seed", static_cast<std::uint64_t>(7)));
    flag = [road](const tom::Transition& t) { return road->is_on_road(t.state) ? 1 : 0; };
  }
  tom::write_weights_csv(weights, buffer, flag, opt.out_path);
  std::cout << "wrote " << weights.size() << " rows to " << opt.out_path << "\n";
  return 0;
}

struct MakeDatasetOptions {
  std::string out_dir = "dataset";
  int n_random = 20000;
  int n_expert = 5;
  std::uint64_t seed = 0;
  std::uint64_t map_seed = 7;
};

int run_make_dataset(const MakeDatasetOptions& opt) {
  tom::RoadAndRocks env(opt.map_seed);
  tom::Rng rng(opt.seed);
  tom::OfflineDataset data = tom::make_offline_dataset(env, opt.n_random, opt.n_expert, rng);
  fs::create_directories(opt.out_dir);
  data.buffer.save_csv((fs::path(opt.out_dir) / "dataset.csv").string());

  // The last expert trajectory doubles as the current-policy footprint.
  tom::ReplayBuffer policy_data = tom::make_current_policy_buffer();
  const std::size_t horizon = static_cast<std::size_t>(env.spec().horizon);
  const std::size_t begin = data.buffer.size() - std::min(horizon, data.buffer.size());
  for (std::size_t i = begin; i < data.buffer.size(); ++i) policy_data.push(data.buffer[i]);
  policy_data.save_csv((fs::path(opt.out_dir) / "policy_data.csv").string());
  std::cout << "dataset: " << data.buffer.size() << " transitions ("
            << data.buffer.size() - data.expert_begin << " expert), wrote " << opt.out_dir
            << "/dataset.csv and policy_data.csv\n";
  return 0;
}

struct OracleCheckOptions {
  std::string suite;
  int seeds = 100;
};

int run_oracle_check(const OracleCheckOptions& opt) {
  bool pass = true;
  double worst = 0.0;
  tom::Rng rng(12345);

  if (opt.suite == "bellman-flow") {
    for (int k = 0; k < opt.seeds; ++k) {
      tom::Rng r = rng.split(static_cast<std::uint64_t>(k));
      const auto mdp = tom::random_tabular_mdp(2 + static_cast<int>(r.uniform_int(7)),
                                               1 + static_cast<int>(r.uniform_int(4)), 0.9, r);
      const auto policy = tom::random_tabular_policy(mdp.n_states, mdp.n_actions, r);
      const auto d = tom::exact_occupancy(mdp, policy);
      worst = std::max(worst, tom::bellman_flow_residual(d, mdp, policy));
      worst = std::max(worst, std::abs(d.sum() - 1.0));
      const auto dtod = tom::transition_occupancy(d, mdp);
      worst = std::max(worst, tom::bellman_transition_flow_residual(dtod, mdp, policy));
    }
    pass = worst < 1e-8;
  } else if (opt.suite == "lower-bound") {
    for (int k = 0; k < opt.seeds; ++k) {
      tom::Rng r = rng.split(static_cast<std::uint64_t>(k));
      const auto mdp = tom::random_tabular_mdp(2 + static_cast<int>(r.uniform_int(5)),
                                               1 + static_cast<int>(r.uniform_int(3)), 0.9, r);
      const auto policy = tom::random_tabular_policy(mdp.n_states, mdp.n_actions, r);
      const auto model = tom::perturb_transition(mdp.transition, 0.5, r);
      for (auto div : {tom::FDivergence::kl(), tom::FDivergence::chi_squared()}) {
        const auto bound = tom::verify_lower_bound(mdp, policy, model, div);
        worst = std::max(worst, bound.rhs - bound.lhs);
      }
    }
    pass = worst <= 1e-9;
  } else if (opt.suite == "fenchel") {
    for (auto div : {tom::FDivergence::chi_squared(), tom::FDivergence::kl()}) {
      for (int k = 0; k < 10000; ++k) {
        const double x = rng.uniform(0.0, 10.0);
        const double y = rng.uniform(-10.0, 10.0);
        worst = std::max(worst, x * y - div.f(x) - div.conjugate(y));
      }
    }
    pass = worst <= 1e-9;
  } else if (opt.suite == "dual-primal") {
    const auto mdp = tom::random_tabular_mdp(3, 2, 0.9, rng);
    const auto policy = tom::random_tabular_policy(3, 2, rng);
    const auto behavior = tom::random_tabular_policy(3, 2, rng);
    const auto div = tom::FDivergence::chi_squared();
    const auto q_dtod = tom::transition_occupancy(tom::exact_occupancy(mdp, behavior), mdp);
    const auto d_star = tom::primal_tom_solve(mdp, policy, q_dtod, div);
    const auto relevance = tom::exact_relevance_reward(
        tom::transition_occupancy(tom::exact_occupancy(mdp, policy), mdp), q_dtod);
    const auto q_table = tom::train_dual_q_tabular(mdp, policy, q_dtod, relevance, div);
    const auto xi = tom::tabular_importance_weights(q_table, mdp, policy, relevance, div);
    Eigen::VectorXd dual_d = xi.v.cwiseProduct(q_dtod.v);
    dual_d /= dual_d.sum();
    worst = 0.5 * (dual_d - d_star.v / d_star.v.sum()).cwiseAbs().sum();
    pass = worst < 0.05;
  } else {
    throw CLI::ValidationError("--suite", "unknown suite: " + opt.suite);
  }

  std::cout << "suite " << opt.suite << ": " << (pass ? "PASS" : "FAIL")
            << " (worst residual " << worst << ")\n";
  return pass ? 0 : 2;
}

// Bare key=value tokens become --key value pairs, so config overrides can be
// passed without dashes.
std::vector<std::string> preprocess_args(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) {
    const std::string tok = argv[i];
    const auto eq = tok.find('=');
    if (!tok.empty() && tok[0] != '-' && eq != std::string::npos && eq > 0) {
      args.push_back("--" + tok.substr(0, eq));
      args.push_back(tok.substr(eq + 1));
    } else {
      args.push_back(tok);
    }
  }
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transition-occupancy-matching model-based RL toolkit"};
  app.require_subcommand(1);

  TrainOptions train_opt;
  CLI::App* train_cmd = app.add_subcommand("train", "run the MBRL loop (online or offline)");
  add_train_options(train_cmd, train_opt);

  DumpWeightsOptions dump_opt;
  CLI::App* dump_cmd =
      app.add_subcommand("dump-weights", "compute importance weights for a saved buffer");
  dump_cmd->add_option("--checkpoint", dump_opt.checkpoint_dir, "run directory with checkpoints")
      ->required();
  dump_cmd->add_option("--buffer", dump_opt.buffer_path, "buffer CSV")->required();
  dump_cmd->add_option("--out", dump_opt.out_path, "output CSV path")->capture_default_str();
  dump_cmd->add_option("--seed", dump_opt.seed)->capture_default_str();

  MakeDatasetOptions ds_opt;
  CLI::App* ds_cmd =
      app.add_subcommand("make-dataset", "generate the road-and-rocks offline dataset");
  ds_cmd->add_option("--out", ds_opt.out_dir)->capture_default_str();
  ds_cmd->add_option("--n-random", ds_opt.n_random)->capture_default_str();
  ds_cmd->add_option("--n-expert", ds_opt.n_expert)->capture_default_str();
  ds_cmd->add_option("--seed", ds_opt.seed)->capture_default_str();
  ds_cmd->add_option("--map-seed", ds_opt.map_seed)->capture_default_str();

  OracleCheckOptions oc_opt;
  CLI::App* oc_cmd = app.add_subcommand("oracle-check", "run a property suite");
  oc_cmd->add_option("--suite", oc_opt.suite,
                     "one of: bellman-flow, lower-bound, dual-primal, fenchel")
      ->required()
      ->check(CLI::IsMember({"bellman-flow", "lower-bound", "dual-primal", "fenchel"}));
  oc_cmd->add_option("--seeds", oc_opt.seeds)->capture_default_str();

  const auto args = preprocess_args(argc, argv);
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train_cmd) return run_train(train_cmd, train_opt);
    if (*dump_cmd) return run_dump_weights(dump_opt);
    if (*ds_cmd) return run_make_dataset(ds_opt);
    if (*oc_cmd) return run_oracle_check(oc_opt);
  } catch (const tom::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
