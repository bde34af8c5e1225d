#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "icrl/attention.hpp"
#include "icrl/errors.hpp"
#include "icrl/eval.hpp"
#include "icrl/features.hpp"
#include "icrl/io.hpp"
#include "icrl/mdp.hpp"
#include "icrl/prompt.hpp"
#include "icrl/teachers.hpp"
#include "icrl/theory.hpp"
#include "icrl/training.hpp"

namespace py = pybind11;
using namespace icrl;

namespace {

// Python callers pass integer seeds; each call gets a fresh named stream.
Rng seeded(std::uint64_t seed, const char* stream) { return make_stream(seed, stream); }

PolicySpec policy_from(const std::string& kind, const Eigen::MatrixXd& table, double epsilon) {
  if (kind == "epsilon_greedy") return PolicySpec::epsilon_greedy(table, epsilon);
  if (kind == "softmax") return PolicySpec::softmax(table, epsilon);
  if (kind == "greedy") return PolicySpec::greedy(table);
  if (kind == "uniform") return PolicySpec::uniform();
  throw ConfigError("unknown policy kind '" + kind + "'");
}

py::dict structure_dict(const StructureMetrics& m) {
  py::dict d;
  d["c_hat"] = m.projection.c_hat;
  d["distance"] = m.projection.distance;
  d["flipped"] = m.projection.flipped;
  d["normal_residual"] = m.projection.normal_residual;
  d["cos_p12"] = m.cos_p12;
  d["cos_v21"] = m.cos_v21;
  d["off_pattern_mass"] = m.off_pattern_mass;
  return d;
}

}  // namespace

PYBIND11_MODULE(_icrl, mod) {
  mod.doc() = "Linear self-attention as an in-context RL learner";

  py::register_exception<ConfigError>(mod, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(mod, "ContractError", PyExc_ValueError);
  py::register_exception<NumericalError>(mod, "NumericalError", PyExc_ArithmeticError);

  py::enum_<PromptMode>(mod, "PromptMode")
      .value("sarsa", PromptMode::sarsa)
      .value("actor_critic", PromptMode::actor_critic);

  py::class_<MdpConfig>(mod, "MdpConfig")
      .def(py::init<>())
      .def_readwrite("n_states", &MdpConfig::n_states)
      .def_readwrite("n_actions", &MdpConfig::n_actions)
      .def_readwrite("discount", &MdpConfig::discount)
      .def_readwrite("reward_low", &MdpConfig::reward_low)
      .def_readwrite("reward_high", &MdpConfig::reward_high);

  py::class_<TabularMdp>(mod, "TabularMdp")
      .def(py::init<int, int, Eigen::MatrixXd, Eigen::MatrixXd, Eigen::VectorXd, double, double,
                    double>(),
           py::arg("n_states"), py::arg("n_actions"), py::arg("transition"), py::arg("reward"),
           py::arg("initial_dist"), py::arg("discount"), py::arg("reward_low") = -1.0,
           py::arg("reward_high") = 1.0)
      .def_property_readonly("n_states", &TabularMdp::n_states)
      .def_property_readonly("n_actions", &TabularMdp::n_actions)
      .def_property_readonly("discount", &TabularMdp::discount)
      .def_property_readonly("transition", &TabularMdp::transition)
      .def_property_readonly("reward", [](const TabularMdp& m) { return m.reward(); })
      .def_property_readonly("initial_dist", &TabularMdp::initial_dist)
      .def("to_json", [](const TabularMdp& m) { return mdp_to_json(m).dump(); })
      .def_static("from_json", [](const std::string& s) { return mdp_from_json(json::parse(s)); });

  py::class_<Trajectory>(mod, "Trajectory")
      .def_readonly("states", &Trajectory::states)
      .def_readonly("actions", &Trajectory::actions)
      .def_readonly("rewards", &Trajectory::rewards);

  py::class_<PolicySpec>(mod, "Policy")
      .def(py::init(&policy_from), py::arg("kind"), py::arg("table") = Eigen::MatrixXd(),
           py::arg("epsilon") = 0.0)
      .def("action_probabilities", &PolicySpec::action_probabilities);

  mod.def("sample_mdp", [](std::uint64_t seed, const MdpConfig& cfg) {
    Rng rng = seeded(seed, "mdp");
    return sample_mdp(rng, cfg);
  }, py::arg("seed"), py::arg("config") = MdpConfig{});
  mod.def("rollout", [](const TabularMdp& mdp, const PolicySpec& pol, int start, int n,
                        std::uint64_t seed) {
    Rng rng = seeded(seed, "rollout");
    return rollout(mdp, pol, start, n, rng);
  });
  mod.def("value_iteration", &value_iteration, py::arg("mdp"), py::arg("tol") = 1e-10);
  mod.def("policy_state_values", &policy_state_values);
  mod.def("exact_policy_return", &exact_policy_return);
  mod.def("mc_return", [](const TabularMdp& mdp, const PolicySpec& pol, int rollouts,
                          int horizon, std::uint64_t seed) {
    Rng rng = seeded(seed, "mc");
    const McEstimate e = mc_return(mdp, pol, rollouts, horizon, rng);
    return py::make_tuple(e.mean, e.std_error);
  }, py::arg("mdp"), py::arg("policy"), py::arg("rollouts") = 32, py::arg("horizon") = 50,
     py::arg("seed") = 0);

  py::enum_<FeatureKind>(mod, "FeatureKind")
      .value("state_action", FeatureKind::state_action)
      .value("state_value", FeatureKind::state_value)
      .value("policy", FeatureKind::policy);
  py::class_<FeatureMap>(mod, "FeatureMap")
      .def_readonly("kind", &FeatureMap::kind)
      .def_readonly("table", &FeatureMap::table)
      .def_property_readonly("dim", &FeatureMap::dim);
  mod.def("sample_features", [](std::uint64_t seed, FeatureKind kind, int n_states,
                                int n_actions, int dim) {
    Rng rng = seeded(seed, "features");
    return sample_features(rng, kind, {n_states, n_actions, dim});
  });
  mod.def("q_table", &q_table);

  py::class_<BlockLayout>(mod, "BlockLayout")
      .def_static("sarsa", &BlockLayout::sarsa)
      .def_static("actor_critic", &BlockLayout::actor_critic)
      .def_readonly("mode", &BlockLayout::mode)
      .def_readonly("d", &BlockLayout::d)
      .def_readonly("m", &BlockLayout::m)
      .def_property_readonly("dim", &BlockLayout::dim);

  py::class_<Prompt>(mod, "Prompt")
      .def_readonly("matrix", &Prompt::matrix)
      .def_readonly("n", &Prompt::n)
      .def_readonly("layout", &Prompt::layout);
  mod.def("build_sarsa_prompt", &build_sarsa_prompt);
  mod.def("build_ac_prompt", &build_ac_prompt);

  py::class_<AttentionParams>(mod, "AttentionParams")
      .def(py::init<BlockLayout, Eigen::MatrixXd, Eigen::MatrixXd>())
      .def(py::init<BlockLayout>())
      .def_property_readonly("layout", &AttentionParams::layout)
      .def_property_readonly("P", [](const AttentionParams& a) { return a.p(); })
      .def_property_readonly("V", [](const AttentionParams& a) { return a.v(); });
  mod.def("attention_forward", &attention_forward);
  mod.def("readout_sarsa", &readout_sarsa);
  mod.def("readout_ac", [](const AttentionParams& p, const Prompt& pr) {
    const ActorCriticReadout r = readout_ac(p, pr);
    return py::make_tuple(r.lambda, r.w);
  });

  py::class_<TeacherConfig>(mod, "TeacherConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &TeacherConfig::alpha)
      .def_readwrite("beta", &TeacherConfig::beta)
      .def_readwrite("gamma", &TeacherConfig::gamma);
  mod.def("sarsa_teacher", &sarsa_teacher);
  mod.def("ac_teacher", [](const Trajectory& tr, const FeatureMap& fv, const FeatureMap& fp,
                           const Eigen::VectorXd& w, const Eigen::VectorXd& lambda,
                           const TeacherConfig& cfg) {
    const ActorCriticTarget t = ac_teacher(tr, fv, fp, w, lambda, cfg);
    return py::make_tuple(t.lambda, t.w);
  });

  py::class_<OptimalConstruction>(mod, "OptimalConstruction")
      .def_readonly("c", &OptimalConstruction::c)
      .def_readonly("p12_star", &OptimalConstruction::p12_star)
      .def_readonly("v21_bar_star", &OptimalConstruction::v21_bar_star)
      .def_readonly("params", &OptimalConstruction::params);
  mod.def("construct_sarsa_optimal", &construct_sarsa_optimal, py::arg("d"),
          py::arg("alpha") = 0.2, py::arg("c") = 1.0);
  mod.def("construct_ac_optimal", &construct_ac_optimal, py::arg("d"), py::arg("m"),
          py::arg("alpha") = 0.2, py::arg("beta") = 0.8, py::arg("c") = 1.0);
  mod.def("structure_recovery_metrics", [](const AttentionParams& learned,
                                           const OptimalConstruction& oc, double lo, double hi) {
    return structure_dict(structure_recovery_metrics(EffectiveParams::from(learned), oc, lo, hi));
  }, py::arg("learned"), py::arg("construction"), py::arg("c_lo") = 0.05, py::arg("c_hi") = 20.0);
  mod.def("inert_blocks_unchanged", [](const AttentionParams& a, const AttentionParams& b) {
    return check_inert_blocks(a, b).unchanged;
  });

  py::class_<TrainConfig>(mod, "TrainConfig")
      .def(py::init<>())
      .def_static("desk_scale", &TrainConfig::desk_scale)
      .def_static("paper_scale", &TrainConfig::paper_scale)
      .def_readwrite("mode", &TrainConfig::mode)
      .def_readwrite("mdp", &TrainConfig::mdp)
      .def_readwrite("d", &TrainConfig::d)
      .def_readwrite("m", &TrainConfig::m)
      .def_readwrite("window", &TrainConfig::window)
      .def_readwrite("frames_per_mdp", &TrainConfig::frames_per_mdp)
      .def_readwrite("num_mdps", &TrainConfig::num_mdps)
      .def_readwrite("epsilon", &TrainConfig::epsilon)
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("teacher", &TrainConfig::teacher)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("full_parameterization", &TrainConfig::full_parameterization)
      .def_readwrite("teacher_forcing", &TrainConfig::teacher_forcing);

  py::class_<RunReport>(mod, "RunReport")
      .def_readonly("losses", &RunReport::losses)
      .def_readonly("initial_params", &RunReport::initial_params)
      .def_readonly("final_params", &RunReport::final_params)
      .def_readonly("diverged", &RunReport::diverged)
      .def_readonly("wall_seconds", &RunReport::wall_seconds)
      .def("tail_mean_loss", &RunReport::tail_mean_loss);
  mod.def("train", [](const TrainConfig& cfg) { return train(cfg); },
          py::call_guard<py::gil_scoped_release>());

  mod.def("closed_loop_eval", [](const AttentionParams& params, const TrainConfig& family,
                                 int num_test_mdps, int update_steps, int eval_interval,
                                 std::uint64_t seed, const std::string& agents, int jobs) {
    EvalConfig cfg = EvalConfig::from(family);
    cfg.num_test_mdps = num_test_mdps;
    cfg.update_steps = update_steps;
    cfg.eval_interval = eval_interval;
    cfg.seed = seed;
    cfg.agents = parse_agents(agents);
    cfg.jobs = jobs;
    EvalCurves curves;
    {
      py::gil_scoped_release release;
      curves = closed_loop_eval(params, cfg);
    }
    py::dict out;
    out["steps"] = curves.steps;
    for (Agent a : curves.agents) {
      py::dict d;
      d["mean"] = curves[a].mean;
      d["p25"] = curves[a].p25;
      d["p75"] = curves[a].p75;
      out[to_string(a)] = d;
    }
    return out;
  }, py::arg("params"), py::arg("family"), py::arg("num_test_mdps") = 20,
     py::arg("update_steps") = 100, py::arg("eval_interval") = 10, py::arg("seed") = 0,
     py::arg("agents") = "transformer,teacher,oracle,random", py::arg("jobs") = 1);

  mod.def("save_checkpoint", [](const fs::path& dir, const AttentionParams& p, long step,
                                std::uint64_t seed) { save_checkpoint(dir, {p, step, seed}); },
          py::arg("dir"), py::arg("params"), py::arg("step") = 0, py::arg("seed") = 0);
  mod.def("load_checkpoint", [](const fs::path& dir) { return load_checkpoint(dir).params; });
}
