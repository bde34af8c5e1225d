// icrl_lab: train / eval / verify / sample-mdp front end.
#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "icrl/errors.hpp"
#include "icrl/eval.hpp"
#include "icrl/features.hpp"
#include "icrl/io.hpp"
#include "icrl/theory.hpp"
#include "icrl/training.hpp"

#ifndef ICRL_VERSION
#define ICRL_VERSION "dev"
#endif

using namespace icrl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitDiverged = 3;

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

fs::path default_out(const std::string& command) {
  const char* root = std::getenv("ICRL_LAB_OUT");
  return fs::path(root && *root ? root : "icrl_lab_out") / command;
}

// Manifest shared by every subcommand; only the timestamps block varies
// between identical invocations.
struct Manifest {
  json j;
  explicit Manifest(const std::string& command) {
    j["tool"] = "icrl_lab";
    j["version"] = ICRL_VERSION;
    j["command"] = command;
    j["artifacts"] = json::object();
    j["timestamps"]["started"] = utc_now();
  }
  void artifact(const std::string& key, const fs::path& p) { j["artifacts"][key] = p.string(); }
  void finish(const fs::path& out, const std::string& status) {
    j["status"] = status;
    j["timestamps"]["finished"] = utc_now();
    write_json(out / "manifest.json", j);
  }
};

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string mode;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool paper_scale = false;
  std::optional<int> mdps, frames, window, d, m;
  std::optional<double> lr, alpha, epsilon;
  bool full_param = false;
  bool no_teacher_forcing = false;
  int checkpoint_every = 0;
};

TrainConfig resolve_train_config(const std::string& mode_flag, const std::string& config_path,
                                 bool paper_scale) {
  std::optional<json> file;
  if (!config_path.empty()) file = read_json(config_path);
  PromptMode mode = PromptMode::sarsa;
  if (!mode_flag.empty()) {
    mode = prompt_mode_from_string(mode_flag);
  } else if (file && file->contains("mode")) {
    mode = prompt_mode_from_string((*file)["mode"].get<std::string>());
  }
  TrainConfig cfg = paper_scale ? TrainConfig::paper_scale(mode) : TrainConfig::desk_scale(mode);
  if (file) cfg = train_config_from_json(*file, cfg);
  cfg.mode = mode;
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg = resolve_train_config(a.mode, a.config, a.paper_scale);
  if (a.seed) cfg.seed = *a.seed;
  if (a.mdps) cfg.num_mdps = *a.mdps;
  if (a.frames) cfg.frames_per_mdp = *a.frames;
  if (a.window) cfg.window = *a.window;
  if (a.d) cfg.d = *a.d;
  if (a.m) cfg.m = *a.m;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.alpha) cfg.teacher.alpha = *a.alpha;
  if (a.epsilon) cfg.epsilon = *a.epsilon;
  if (a.full_param) cfg.full_parameterization = true;
  if (a.no_teacher_forcing) cfg.teacher_forcing = false;
  cfg.validate();

  const fs::path out = a.out.empty() ? default_out("train") : fs::path(a.out);
  fs::create_directories(out);
  Manifest man("train");
  man.j["config"] = train_config_to_json(cfg);
  man.j["seeds"] = {{"master", cfg.seed}};
  write_json(out / "config.json", train_config_to_json(cfg));
  man.artifact("config", out / "config.json");

  const fs::path ck_root = out / "checkpoints";
  const long frames = cfg.frames_per_mdp;
  auto on_mdp = [&](int done, const AttentionParams& params) {
    if (a.checkpoint_every > 0 && done % a.checkpoint_every == 0) {
      const fs::path dir = ck_root / ("mdp_" + std::to_string(done));
      save_checkpoint(dir, {params, done * frames, cfg.seed});
      man.j["artifacts"]["checkpoints"].push_back(dir.string());
    }
  };
  const RunReport rep = train(cfg, on_mdp);

  save_checkpoint(ck_root / "init", {rep.initial_params, 0, cfg.seed});
  man.artifact("init_checkpoint", ck_root / "init");
  save_checkpoint(ck_root / "final",
                  {rep.final_params, static_cast<long>(rep.losses.size()), cfg.seed});
  man.artifact("final_checkpoint", ck_root / "final");
  write_loss_csv(out / "loss.csv", rep);
  man.artifact("loss_csv", out / "loss.csv");

  json result;
  result["frames"] = rep.losses.size();
  result["tail100_mean_loss"] = rep.losses.empty() ? json(nullptr) : json(rep.tail_mean_loss(100));
  result["diverged"] = rep.diverged;
  result["message"] = rep.message;
  man.j["result"] = result;
  man.j["timestamps"]["wall_seconds"] = rep.wall_seconds;
  man.finish(out, rep.diverged ? "diverged" : "ok");

  std::cout << "trained " << rep.losses.size() << " frames";
  if (!rep.losses.empty()) std::cout << ", tail-100 loss " << rep.tail_mean_loss(100);
  std::cout << "\nartifacts in " << out.string() << "\n";
  if (rep.diverged) {
    std::cerr << "training diverged: " << rep.message << " (last good checkpoint kept)\n";
    return kExitDiverged;
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  std::string agents = "transformer,teacher,oracle,random";
  std::optional<int> test_mdps, steps, interval, rollouts, horizon;
  bool paper_protocol = false;
};

// Training config consistent with a checkpoint unless a config file says otherwise.
TrainConfig family_for(const Checkpoint& ck, const std::string& config_path) {
  const BlockLayout& l = ck.params.layout();
  TrainConfig cfg = TrainConfig::desk_scale(l.mode);
  if (!config_path.empty()) return train_config_from_json(read_json(config_path), cfg);
  cfg.d = l.d;
  if (l.mode == PromptMode::actor_critic) cfg.m = l.m;
  return cfg;
}

int cmd_eval(const EvalArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  EvalConfig cfg = EvalConfig::from(family_for(ck, a.config));
  if (a.paper_protocol) cfg.num_test_mdps = 100;
  if (a.seed) cfg.seed = *a.seed;
  if (a.test_mdps) cfg.num_test_mdps = *a.test_mdps;
  if (a.steps) cfg.update_steps = *a.steps;
  if (a.interval) cfg.eval_interval = *a.interval;
  if (a.rollouts) cfg.mc_rollouts = *a.rollouts;
  if (a.horizon) cfg.mc_horizon = *a.horizon;
  cfg.jobs = a.jobs;
  cfg.agents = parse_agents(a.agents);
  for (const auto& w : cfg.validate()) std::cerr << "warning: " << w << "\n";

  const fs::path out = a.out.empty() ? default_out("eval") : fs::path(a.out);
  fs::create_directories(out);
  Manifest man("eval");
  man.j["config"] = eval_config_to_json(cfg);
  man.j["seeds"] = {{"eval", cfg.seed}, {"checkpoint", ck.seed}};
  man.artifact("checkpoint", a.checkpoint);

  const EvalCurves curves = closed_loop_eval(ck.params, cfg);
  write_eval_csv(out / "eval.csv", curves);
  man.artifact("eval_csv", out / "eval.csv");
  write_json(out / "summary.json", eval_summary_json(curves));
  man.artifact("summary", out / "summary.json");
  write_plot_data(out / "plot-data", curves);
  man.artifact("plot_data", out / "plot-data");
  man.finish(out, "ok");

  const std::size_t last = curves.steps.size() - 1;
  for (Agent ag : curves.agents)
    std::cout << std::left << std::setw(12) << to_string(ag) << " final mean return "
              << curves[ag].mean[last] << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::string checkpoint;
  std::string init;
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  int prompts = 100;
  int pl_samples = 512;
  int probe_steps = 0;
  double c_lo = 0.05;
  double c_hi = 20.0;
};

int cmd_verify(const VerifyArgs& a) {
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  const TrainConfig cfg = family_for(ck, a.config);
  const BlockLayout& l = ck.params.layout();
  if (cfg.layout() != l) throw ConfigError("config layout does not match the checkpoint");

  const fs::path out = a.out.empty() ? default_out("verify") : fs::path(a.out);
  fs::create_directories(out);
  Manifest man("verify");
  man.j["config"] = train_config_to_json(cfg);
  man.j["seeds"] = {{"verify", a.seed}};
  man.artifact("checkpoint", a.checkpoint);

  json diag;
  diag["checkpoint"] = {{"path", a.checkpoint}, {"step", ck.step}, {"mode", to_string(l.mode)},
                        {"d", l.d}, {"m", l.m}};

  Rng res_rng = make_stream(a.seed, "verify_prompts");
  diag["teacher_equivalence"] = {
      {"n_prompts", a.prompts},
      {"max_abs_residual", teacher_equivalence_residual(ck.params, cfg, a.prompts, res_rng)}};

  if (!a.init.empty()) {
    const Checkpoint init = load_checkpoint(a.init);
    diag["inert_blocks"] = inert_json(check_inert_blocks(init.params, ck.params));
    diag["inert_blocks"]["baseline"] = a.init;
  } else {
    diag["inert_blocks"] = inert_json(check_inert_blocks(AttentionParams(l), ck.params));
    diag["inert_blocks"]["baseline"] = "zero";
  }
  diag["quadratic_blocks"] = {{"p22_norm", ck.params.p22().norm()},
                              {"v22_bar_norm", ck.params.v22_bar().norm()}};

  const OptimalConstruction oc =
      l.mode == PromptMode::sarsa
          ? construct_sarsa_optimal(l.d, cfg.teacher.alpha)
          : construct_ac_optimal(l.d, l.m, cfg.teacher.alpha, cfg.teacher.beta);
  const StructureMetrics sm =
      structure_recovery_metrics(EffectiveParams::from(ck.params), oc, a.c_lo, a.c_hi);
  diag["structure"] = structure_json(sm);

  if (l.mode == PromptMode::sarsa) {
    const SamplerConfig sc = SamplerConfig::from(cfg);
    const MimicSampler sampler = [sc](Rng& r) { return sample_sarsa_mimic(sc, r); };
    PlEstimateOptions opt;
    opt.n_samples = a.pl_samples;
    opt.alpha = cfg.teacher.alpha;
    opt.c_lo = a.c_lo;
    opt.c_hi = a.c_hi;
    opt.r = sm.projection.distance;
    Rng pl_rng = make_stream(a.seed, "verify_pl");
    const PLConstants k = estimate_pl_constants(sampler, opt, pl_rng);
    diag["pl_constants"] = pl_constants_json(k);

    if (a.probe_steps > 0) {
      LocalProbeConfig pc;
      pc.sampler = sc;
      pc.steps = a.probe_steps;
      pc.seed = a.seed;
      const LocalProbeResult pr = run_local_probe(pc);
      std::vector<PlLogEntry> log;
      for (std::size_t i = 0; i < pr.loss.size(); ++i) log.push_back({pr.loss[i], pr.grad_norm[i]});
      const PlTrajectoryReport tr =
          pl_trajectory_check(log, k.mu_r > 0.0 ? std::optional<double>(k.mu_r) : std::nullopt);
      diag["pl_trajectory"] = {{"steps", a.probe_steps},
                               {"step_size", pr.step_size},
                               {"initial_loss", pr.loss.front()},
                               {"final_loss", pr.loss.back()},
                               {"initial_distance", pr.distance.front()},
                               {"final_distance", pr.distance.back()},
                               {"empirical_pl", tr.empirical_pl},
                               {"violations_below_mu_r", tr.violations},
                               {"skipped", tr.skipped},
                               {"fitted_rate", tr.fitted_rate},
                               {"fit_r_squared", tr.fit_r_squared}};
    }
  } else {
    diag["pl_constants"] = nullptr;  // the local analysis covers the SARSA construction
  }

  write_json(out / "diagnostics.json", diag);
  man.artifact("diagnostics", out / "diagnostics.json");
  write_matrix_csv(out / "P.csv", ck.params.p());
  write_matrix_csv(out / "V.csv", ck.params.v());
  man.artifact("heatmap_p", out / "P.csv");
  man.artifact("heatmap_v", out / "V.csv");
  man.finish(out, "ok");

  std::cout << "teacher residual " << diag["teacher_equivalence"]["max_abs_residual"]
            << ", manifold distance " << sm.projection.distance << " (c_hat " << sm.projection.c_hat
            << "), cos P12 " << sm.cos_p12 << ", cos V21 " << sm.cos_v21 << ", off-pattern "
            << sm.off_pattern_mass << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct SampleArgs {
  std::uint64_t seed = 0;
  int index = 0;
  std::string out;
  std::string config;
  std::string mode;
  bool features = false;
};

int cmd_sample_mdp(const SampleArgs& a) {
  TrainConfig cfg = resolve_train_config(a.mode, a.config, false);
  cfg.seed = a.seed;
  cfg.mdp.validate();
  const fs::path out = a.out.empty() ? default_out("sample-mdp") : fs::path(a.out);
  fs::create_directories(out);
  Manifest man("sample-mdp");
  man.j["config"] = train_config_to_json(cfg);
  man.j["seeds"] = {{"master", a.seed}, {"index", a.index}};

  // same streams as training MDP `index`
  Rng mdp_rng = make_stream(a.seed, "mdp", a.index);
  const TabularMdp mdp = sample_mdp(mdp_rng, cfg.mdp);
  write_json(out / "mdp.json", mdp_to_json(mdp, derive_seed(a.seed, "mdp", a.index)));
  man.artifact("mdp", out / "mdp.json");
  if (a.features) {
    Rng feat_rng = make_stream(a.seed, "features", a.index);
    const FeatureDims dims{cfg.mdp.n_states, cfg.mdp.n_actions, cfg.d};
    if (cfg.mode == PromptMode::sarsa) {
      write_json(out / "features.json",
                 features_to_json(sample_features(feat_rng, FeatureKind::state_action, dims)));
    } else {
      write_json(out / "features.json",
                 features_to_json(sample_features(feat_rng, FeatureKind::state_value, dims)));
      write_json(out / "policy_features.json",
                 features_to_json(sample_features(
                     feat_rng, FeatureKind::policy, {cfg.mdp.n_states, cfg.mdp.n_actions, cfg.m})));
      man.artifact("policy_features", out / "policy_features.json");
    }
    man.artifact("features", out / "features.json");
  }
  man.finish(out, "ok");
  std::cout << "wrote " << (out / "mdp.json").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-context RL with linear self-attention: train, evaluate and verify"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ICRL_VERSION);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "teacher-mimicry training");
  train_cmd->add_option("--mode", ta.mode, "sarsa or ac")->check(CLI::IsMember({"sarsa", "ac"}));
  train_cmd->add_option("--config", ta.config, "JSON config (fields of TrainConfig)");
  train_cmd->add_option("--seed", ta.seed, "master seed");
  train_cmd->add_option("--out", ta.out, "output directory");
  train_cmd->add_flag("--paper-scale", ta.paper_scale, "paper-size preset (long run)");
  train_cmd->add_option("--mdps", ta.mdps, "number of training MDPs K");
  train_cmd->add_option("--frames", ta.frames, "frames per MDP T");
  train_cmd->add_option("--window", ta.window, "prompt window n");
  train_cmd->add_option("--d", ta.d, "feature (critic) dimension");
  train_cmd->add_option("--m", ta.m, "actor dimension (ac)");
  train_cmd->add_option("--lr", ta.lr, "Adam learning rate");
  train_cmd->add_option("--alpha", ta.alpha, "teacher step size");
  train_cmd->add_option("--epsilon", ta.epsilon, "exploration rate");
  train_cmd->add_flag("--full-param", ta.full_param, "also train P22 and V22_bar");
  train_cmd->add_flag("--no-teacher-forcing", ta.no_teacher_forcing,
                      "roll out with the model's own update");
  train_cmd->add_option("--checkpoint-every", ta.checkpoint_every, "checkpoint every N MDPs");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "closed-loop evaluation on held-out MDPs");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "checkpoint directory")->required();
  eval_cmd->add_option("--config", ea.config, "training config describing the MDP family");
  eval_cmd->add_option("--seed", ea.seed, "evaluation seed");
  eval_cmd->add_option("--out", ea.out, "output directory");
  eval_cmd->add_option("--jobs", ea.jobs, "parallel MDP workers")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--agents", ea.agents, "comma list of transformer,teacher,oracle,random");
  eval_cmd->add_option("--test-mdps", ea.test_mdps, "held-out MDP count");
  eval_cmd->add_option("--steps", ea.steps, "in-context update steps");
  eval_cmd->add_option("--interval", ea.interval, "steps between return estimates");
  eval_cmd->add_option("--rollouts", ea.rollouts, "Monte-Carlo rollouts per estimate");
  eval_cmd->add_option("--horizon", ea.horizon, "Monte-Carlo horizon");
  eval_cmd->add_flag("--paper-protocol", ea.paper_protocol, "100 held-out MDPs");

  VerifyArgs va;
  auto* verify_cmd = app.add_subcommand("verify", "structural diagnostics for a checkpoint");
  verify_cmd->add_option("--checkpoint", va.checkpoint, "checkpoint directory")->required();
  verify_cmd->add_option("--init", va.init, "initial checkpoint for the inert-block check");
  verify_cmd->add_option("--config", va.config, "training config describing the MDP family");
  verify_cmd->add_option("--seed", va.seed, "diagnostics seed");
  verify_cmd->add_option("--out", va.out, "output directory");
  verify_cmd->add_option("--prompts", va.prompts, "prompts for the teacher residual");
  verify_cmd->add_option("--pl-samples", va.pl_samples, "samples for the PL constants");
  verify_cmd->add_option("--probe-steps", va.probe_steps, "run the local descent probe");
  verify_cmd->add_option("--c-lo", va.c_lo, "smallest |c| searched");
  verify_cmd->add_option("--c-hi", va.c_hi, "largest |c| searched");

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample-mdp", "draw one MDP (and features) to JSON");
  sample_cmd->add_option("--seed", sa.seed, "master seed");
  sample_cmd->add_option("--index", sa.index, "MDP index within the seed");
  sample_cmd->add_option("--out", sa.out, "output directory");
  sample_cmd->add_option("--config", sa.config, "training config for sizes");
  sample_cmd->add_option("--mode", sa.mode, "sarsa or ac")->check(CLI::IsMember({"sarsa", "ac"}));
  sample_cmd->add_flag("--features", sa.features, "also write the feature tables");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(ta);
    if (*eval_cmd) return cmd_eval(ea);
    if (*verify_cmd) return cmd_verify(va);
    if (*sample_cmd) return cmd_sample_mdp(sa);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
