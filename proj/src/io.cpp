#include "icrl/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "icrl/errors.hpp"

namespace icrl {

static_assert(std::endian::native == std::endian::little, "checkpoints assume little-endian");

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& value) { write_text(path, value.dump(2) + "\n"); }

namespace {

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const json& rows, Eigen::Index n_rows, Eigen::Index n_cols,
                                 const char* what) {
  detail::require_config(rows.is_array() && static_cast<Eigen::Index>(rows.size()) == n_rows,
                         std::string(what) + ": wrong number of rows");
  Eigen::MatrixXd m(n_rows, n_cols);
  for (Eigen::Index r = 0; r < n_rows; ++r) {
    const json& row = rows[r];
    detail::require_config(row.is_array() && static_cast<Eigen::Index>(row.size()) == n_cols,
                           std::string(what) + ": wrong number of columns");
    for (Eigen::Index c = 0; c < n_cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

}  // namespace

json mdp_to_json(const TabularMdp& mdp, std::optional<std::uint64_t> seed) {
  json j;
  j["n_states"] = mdp.n_states();
  j["n_actions"] = mdp.n_actions();
  j["discount"] = mdp.discount();
  j["reward_low"] = mdp.reward_low();
  j["reward_high"] = mdp.reward_high();
  j["transition"] = matrix_rows(mdp.transition());
  j["reward"] = matrix_rows(mdp.reward());
  j["initial_dist"] = std::vector<double>(mdp.initial_dist().data(),
                                          mdp.initial_dist().data() + mdp.initial_dist().size());
  j["seed"] = seed ? json(*seed) : json(nullptr);
  return j;
}

TabularMdp mdp_from_json(const json& j) {
  try {
    const int s = j.at("n_states").get<int>();
    const int a = j.at("n_actions").get<int>();
    detail::require_config(s >= 1 && a >= 1, "MDP sizes must be positive");
    Eigen::MatrixXd p = matrix_from_rows(j.at("transition"), s * a, s, "transition");
    Eigen::MatrixXd r = matrix_from_rows(j.at("reward"), a, s, "reward");
    const auto init = j.at("initial_dist").get<std::vector<double>>();
    detail::require_config(static_cast<int>(init.size()) == s, "initial_dist has wrong length");
    Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(init.data(), s);
    return TabularMdp(s, a, std::move(p), std::move(r), std::move(mu),
                      j.at("discount").get<double>(), j.value("reward_low", -1.0),
                      j.value("reward_high", 1.0));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad MDP JSON: ") + e.what());
  }
}

const char* to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::state_action: return "state_action";
    case FeatureKind::state_value: return "state_value";
    case FeatureKind::policy: return "policy";
  }
  return "?";
}

FeatureKind feature_kind_from_string(const std::string& s) {
  for (FeatureKind k : {FeatureKind::state_action, FeatureKind::state_value, FeatureKind::policy})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown feature kind '" + s + "'");
}

json features_to_json(const FeatureMap& f) {
  json j;
  j["kind"] = to_string(f.kind);
  j["n_states"] = f.n_states;
  j["n_actions"] = f.n_actions;
  j["shape"] = {f.table.rows(), f.table.cols()};
  std::vector<double> values;
  values.reserve(f.table.size());
  for (Eigen::Index r = 0; r < f.table.rows(); ++r)
    for (Eigen::Index c = 0; c < f.table.cols(); ++c) values.push_back(f.table(r, c));
  j["values"] = std::move(values);
  return j;
}

FeatureMap features_from_json(const json& j) {
  try {
    FeatureMap f;
    f.kind = feature_kind_from_string(j.at("kind").get<std::string>());
    f.n_states = j.at("n_states").get<int>();
    f.n_actions = j.at("n_actions").get<int>();
    const auto shape = j.at("shape").get<std::vector<long>>();
    detail::require_config(shape.size() == 2 && shape[0] >= 0 && shape[1] >= 0,
                           "feature shape must have two non-negative entries");
    const auto values = j.at("values").get<std::vector<double>>();
    detail::require_config(static_cast<long>(values.size()) == shape[0] * shape[1],
                           "feature values do not match the shape header");
    f.table = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                             Eigen::RowMajor>>(values.data(), shape[0], shape[1]);
    f.validate();
    return f;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad feature JSON: ") + e.what());
  }
}

void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m) {
  std::ostringstream os;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) os << ',';
      os << csv_number(m(r, c));
    }
    os << '\n';
  }
  write_text(path, os.str());
}

void write_prompt_csv(const fs::path& path, const Prompt& prompt) {
  write_matrix_csv(path, prompt.matrix);
}

namespace {

void write_bin(const fs::path& path, const Eigen::MatrixXd& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(rm.data()),
            static_cast<std::streamsize>(rm.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Eigen::MatrixXd read_bin(const fs::path& path, int dim) {
  const std::string bytes = read_text(path);
  const std::size_t want = static_cast<std::size_t>(dim) * dim * sizeof(double);
  if (bytes.size() != want) {
    std::ostringstream os;
    os << path.string() << " holds " << bytes.size() << " bytes, manifest D=" << dim
       << " needs " << want;
    throw ConfigError(os.str());
  }
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(dim, dim);
  std::memcpy(rm.data(), bytes.data(), want);
  return rm;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
  fs::create_directories(dir);
  const BlockLayout& l = ckpt.params.layout();
  write_bin(dir / "P.bin", ckpt.params.p());
  write_bin(dir / "V.bin", ckpt.params.v());
  json j;
  j["D"] = l.dim();
  j["d"] = l.d;
  j["m"] = l.m;
  j["mode"] = to_string(l.mode);
  j["step"] = ckpt.step;
  j["seed"] = ckpt.seed;
  write_json(dir / "manifest.json", j);
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const json j = read_json(dir / "manifest.json");
  try {
    const PromptMode mode = prompt_mode_from_string(j.at("mode").get<std::string>());
    const int d = j.at("d").get<int>();
    const int m = j.at("m").get<int>();
    const BlockLayout layout =
        mode == PromptMode::sarsa ? BlockLayout::sarsa(d) : BlockLayout::actor_critic(d, m);
    const int dim = j.at("D").get<int>();
    if (dim != layout.dim()) {
      std::ostringstream os;
      os << "manifest D=" << dim << " disagrees with mode " << to_string(mode) << ", d=" << d
         << ", m=" << m << " (expected " << layout.dim() << ")";
      throw ConfigError(os.str());
    }
    Checkpoint c{AttentionParams(layout, read_bin(dir / "P.bin", dim), read_bin(dir / "V.bin", dim)),
                 j.at("step").get<long>(), j.at("seed").get<std::uint64_t>()};
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad checkpoint manifest: ") + e.what());
  }
}

void write_loss_csv(const fs::path& path, const RunReport& report) {
  std::ostringstream os;
  os << "frame,mdp_index,loss\n";
  const int t = report.config.frames_per_mdp;
  for (std::size_t i = 0; i < report.losses.size(); ++i)
    os << i << ',' << (t > 0 ? static_cast<long>(i) / t : 0) << ','
       << csv_number(report.losses[i]) << '\n';
  write_text(path, os.str());
}

json train_config_to_json(const TrainConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["n_states"] = c.mdp.n_states;
  j["n_actions"] = c.mdp.n_actions;
  j["discount"] = c.mdp.discount;
  j["reward_low"] = c.mdp.reward_low;
  j["reward_high"] = c.mdp.reward_high;
  j["d"] = c.d;
  j["m"] = c.m;
  j["window"] = c.window;
  j["frames_per_mdp"] = c.frames_per_mdp;
  j["num_mdps"] = c.num_mdps;
  j["epsilon"] = c.epsilon;
  j["learning_rate"] = c.learning_rate;
  j["lr_decay"] = c.lr_decay;
  j["decay_period"] = c.decay_period;
  j["alpha"] = c.teacher.alpha;
  j["beta"] = c.teacher.beta;
  j["init_gain"] = c.init_gain;
  j["seed"] = c.seed;
  j["full_parameterization"] = c.full_parameterization;
  j["teacher_forcing"] = c.teacher_forcing;
  j["optimizer"] = c.optimizer == OptimizerKind::adam ? "adam" : "sgd";
  j["adam_beta1"] = c.adam.beta1;
  j["adam_beta2"] = c.adam.beta2;
  j["adam_eps"] = c.adam.eps_hat;
  j["divergence_threshold"] = c.divergence_threshold;
  return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  detail::require_config(j.is_object(), "config must be a JSON object");
  static const char* known[] = {
      "mode", "n_states", "n_actions", "discount", "reward_low", "reward_high", "d", "m",
      "window", "frames_per_mdp", "num_mdps", "epsilon", "learning_rate", "lr_decay",
      "decay_period", "alpha", "beta", "init_gain", "seed", "full_parameterization",
      "teacher_forcing", "optimizer", "adam_beta1", "adam_beta2", "adam_eps",
      "divergence_threshold"};
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    detail::require_config(ok, "unknown config key '" + item.key() + "'");
  }
  try {
    if (j.contains("mode")) c.mode = prompt_mode_from_string(j["mode"].get<std::string>());
    c.mdp.n_states = j.value("n_states", c.mdp.n_states);
    c.mdp.n_actions = j.value("n_actions", c.mdp.n_actions);
    c.mdp.discount = j.value("discount", c.mdp.discount);
    c.mdp.reward_low = j.value("reward_low", c.mdp.reward_low);
    c.mdp.reward_high = j.value("reward_high", c.mdp.reward_high);
    c.d = j.value("d", c.d);
    c.m = j.value("m", c.m);
    c.window = j.value("window", c.window);
    c.frames_per_mdp = j.value("frames_per_mdp", c.frames_per_mdp);
    c.num_mdps = j.value("num_mdps", c.num_mdps);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.lr_decay = j.value("lr_decay", c.lr_decay);
    c.decay_period = j.value("decay_period", c.decay_period);
    c.teacher.alpha = j.value("alpha", c.teacher.alpha);
    c.teacher.beta = j.value("beta", c.teacher.beta);
    c.init_gain = j.value("init_gain", c.init_gain);
    c.seed = j.value("seed", c.seed);
    c.full_parameterization = j.value("full_parameterization", c.full_parameterization);
    c.teacher_forcing = j.value("teacher_forcing", c.teacher_forcing);
    if (j.contains("optimizer")) {
      const auto opt = j["optimizer"].get<std::string>();
      detail::require_config(opt == "adam" || opt == "sgd", "optimizer must be adam or sgd");
      c.optimizer = opt == "adam" ? OptimizerKind::adam : OptimizerKind::sgd;
    }
    c.adam.beta1 = j.value("adam_beta1", c.adam.beta1);
    c.adam.beta2 = j.value("adam_beta2", c.adam.beta2);
    c.adam.eps_hat = j.value("adam_eps", c.adam.eps_hat);
    c.divergence_threshold = j.value("divergence_threshold", c.divergence_threshold);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  c.teacher.gamma = c.mdp.discount;
  return c;
}

json eval_config_to_json(const EvalConfig& c) {
  json j;
  j["mode"] = to_string(c.mode);
  j["n_states"] = c.mdp.n_states;
  j["n_actions"] = c.mdp.n_actions;
  j["discount"] = c.mdp.discount;
  j["d"] = c.d;
  j["m"] = c.m;
  j["window"] = c.window;
  j["epsilon"] = c.epsilon;
  j["alpha"] = c.teacher.alpha;
  j["beta"] = c.teacher.beta;
  j["num_test_mdps"] = c.num_test_mdps;
  j["update_steps"] = c.update_steps;
  j["eval_interval"] = c.eval_interval;
  j["mc_rollouts"] = c.mc_rollouts;
  j["mc_horizon"] = c.mc_horizon;
  j["seed"] = c.seed;
  json agents = json::array();
  for (Agent a : c.agents) agents.push_back(to_string(a));
  j["agents"] = agents;
  j["jobs"] = c.jobs;
  return j;
}

void write_eval_csv(const fs::path& path, const EvalCurves& curves) {
  std::ostringstream os;
  os << "mdp_id,step,agent,return,std_error\n";
  for (const auto& mc : curves.per_mdp)
    for (Agent a : curves.agents) {
      const AgentCurve& c = mc[a];
      for (std::size_t j = 0; j < c.returns.size(); ++j)
        os << mc.mdp_id << ',' << curves.steps[j] << ',' << to_string(a) << ','
           << csv_number(c.returns[j]) << ',' << csv_number(c.std_errors[j]) << '\n';
    }
  write_text(path, os.str());
}

json eval_summary_json(const EvalCurves& curves) {
  json j;
  j["steps"] = curves.steps;
  j["num_mdps"] = curves.per_mdp.size();
  json agents = json::object();
  for (Agent a : curves.agents) {
    const AggregateCurve& agg = curves[a];
    json aj;
    aj["mean"] = agg.mean;
    aj["p25"] = agg.p25;
    aj["p75"] = agg.p75;
    aj["count"] = agg.count;
    int truncated = 0;
    for (const auto& mc : curves.per_mdp) truncated += mc[a].truncated ? 1 : 0;
    aj["truncated_mdps"] = truncated;
    agents[to_string(a)] = aj;
  }
  j["agents"] = agents;
  return j;
}

void write_plot_data(const fs::path& dir, const EvalCurves& curves) {
  for (Agent a : curves.agents) {
    const AggregateCurve& agg = curves[a];
    std::ostringstream os;
    os << "step,mean,p25,p75,count\n";
    for (std::size_t j = 0; j < curves.steps.size(); ++j)
      os << curves.steps[j] << ',' << csv_number(agg.mean[j]) << ',' << csv_number(agg.p25[j])
         << ',' << csv_number(agg.p75[j]) << ',' << agg.count[j] << '\n';
    write_text(dir / (std::string(to_string(a)) + ".csv"), os.str());
  }
}

namespace {

// JSON has no inf/nan; emit null instead
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json projection_json(const ManifoldProjection& p) {
  return {{"c_hat", num(p.c_hat)},
          {"distance", num(p.distance)},
          {"flipped", p.flipped},
          {"normal_residual", num(p.normal_residual)}};
}

json structure_json(const StructureMetrics& m) {
  return {{"projection", projection_json(m.projection)},
          {"cos_p12", num(m.cos_p12)},
          {"cos_v21", num(m.cos_v21)},
          {"off_pattern_mass", num(m.off_pattern_mass)}};
}

json inert_json(const InertBlockReport& r) {
  return {{"unchanged", r.unchanged}, {"differences", r.differences}};
}

json pl_constants_json(const PLConstants& k) {
  const PlInputs& in = k.inputs;
  return {{"inputs",
           {{"b_phi", num(in.b_phi)},
            {"b_r", num(in.b_r)},
            {"b_w_tilde", num(in.b_w_tilde)},
            {"kappa_w_tilde", num(in.kappa_w_tilde)},
            {"kappa_r", num(in.kappa_r)},
            {"kappa_q", num(in.kappa_q)},
            {"rho", num(in.rho)},
            {"alpha", num(in.alpha)},
            {"c_minus", num(in.c_minus)},
            {"c_plus", num(in.c_plus)},
            {"r", num(in.r)},
            {"d", in.d}}},
          {"b_sigma", num(k.b_sigma)},
          {"c_q", num(k.c_q)},
          {"m0", num(k.m0)},
          {"M0", num(k.big_m0)},
          {"r_max", num(k.r_max)},
          {"mu_r", num(k.mu_r)},
          {"k_r", num(k.k_r)},
          {"lambda_r", num(k.lambda_r)},
          {"in_regime", k.in_regime},
          {"violations", k.violations}};
}

}  // namespace icrl
