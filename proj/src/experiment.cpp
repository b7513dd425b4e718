#include "nmdr/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "nmdr/csv.hpp"
#include "nmdr/errors.hpp"
#include "nmdr/rng.hpp"
#include "nmdr/transforms.hpp"

namespace nmdr {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw config_error(path + ": invalid JSON: " + e.what());
  }
  return j;
}

void dump_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

std::vector<int> parse_features(const json& j, int p, const std::string& where) {
  if (j.is_string()) {
    if (j.get<std::string>() == "all") {
      std::vector<int> all(static_cast<size_t>(p));
      for (int i = 0; i < p; ++i) all[static_cast<size_t>(i)] = i;
      return all;
    }
    throw config_error(where + ": features must be \"all\" or an index array");
  }
  if (!j.is_array()) throw config_error(where + ": features must be \"all\" or an index array");
  std::vector<int> out;
  for (const auto& v : j) out.push_back(v.get<int>());
  return out;
}

std::vector<TermSpec> parse_terms(const json& jterms, int p, const std::string& where) {
  if (!jterms.is_array()) throw config_error(where + ": 'terms' must be an array");
  std::vector<TermSpec> terms;
  for (const auto& jt : jterms) {
    const std::string type = jt.value("type", "");
    TermSpec term;
    term.l1 = jt.value("l1", false);
    term.trainable = jt.value("trainable", true);
    term.label = jt.value("label", "");
    if (type == "intercept") {
      term.kind = InterceptTerm{};
      terms.push_back(std::move(term));
    } else if (type == "linear") {
      LinearTerm lt;
      lt.features = parse_features(jt.at("features"), p, where);
      if (jt.contains("lambda")) lt.lambda = jt.at("lambda").get<double>();
      term.kind = std::move(lt);
      terms.push_back(std::move(term));
    } else if (type == "spline" || type == "spline_each") {
      SplineTerm st;
      st.num_basis = jt.value("num_basis", 10);
      st.degree = jt.value("degree", 3);
      st.penalty_order = jt.value("penalty_order", 2);
      st.sum_to_zero = jt.value("sum_to_zero", true);
      if (jt.contains("lambda")) st.lambda = jt.at("lambda").get<double>();
      if (jt.contains("df")) st.df = jt.at("df").get<double>();
      if (type == "spline") {
        st.feature = jt.at("feature").get<int>();
        term.kind = st;
        terms.push_back(std::move(term));
      } else {
        for (int f : parse_features(jt.at("features"), p, where)) {
          TermSpec each = term;
          SplineTerm sf = st;
          sf.feature = f;
          each.kind = sf;
          terms.push_back(std::move(each));
        }
      }
    } else if (type == "dense") {
      DenseTerm dt;
      dt.features = parse_features(jt.value("features", json("all")), p, where);
      dt.widths = jt.at("widths").get<std::vector<int>>();
      dt.activation = activation_from_name(jt.value("activation", "relu"));
      term.kind = std::move(dt);
      terms.push_back(std::move(term));
    } else {
      throw config_error(where + ": unknown term type '" + type + "'");
    }
  }
  return terms;
}

PredictorSpec parse_predictor(const json& j, int p, const std::string& where) {
  PredictorSpec spec;
  if (j.contains("terms")) {
    spec.terms = parse_terms(j.at("terms"), p, where);
  } else {
    spec = intercept_only();
  }
  return spec;
}

ComponentSpec parse_component(const json& j, int p, const std::string& where) {
  const std::string family_name = j.value("family", "");
  if (family_name.empty()) throw config_error(where + ": component needs a 'family'");
  ComponentSpec comp(family_from_name(family_name));
  const int k = comp.family.param_count();

  if (j.contains("params")) {
    const json& jp = j.at("params");
    if (jp.is_array()) {
      int idx = 0;
      for (const auto& jpred : jp) {
        comp.param_predictors.push_back(
            parse_predictor(jpred, p, where + ".params[" + std::to_string(idx++) + "]"));
      }
    } else if (jp.is_object()) {
      for (int param = 0; param < k; ++param) {
        const std::string name = comp.family.param_name(param);
        if (jp.contains(name)) {
          comp.param_predictors.push_back(parse_predictor(jp.at(name), p, where + "." + name));
        } else {
          comp.param_predictors.push_back(intercept_only());
        }
      }
    } else {
      throw config_error(where + ": 'params' must be an array or object");
    }
    if (static_cast<int>(comp.param_predictors.size()) != k) {
      throw config_error(where + ": expected " + std::to_string(k) + " parameter predictors");
    }
  }

  if (j.contains("transforms")) {
    for (const auto& t : j.at("transforms")) {
      comp.param_transforms.push_back(transform_from_name(t.get<std::string>()));
    }
    if (static_cast<int>(comp.param_transforms.size()) != k) {
      throw config_error(where + ": expected " + std::to_string(k) + " transforms");
    }
  }
  return comp;
}

FamilyKind family_kind_from_name(const std::string& name) {
  return family_from_name(name).kind();
}

DataSpec parse_data(const json& j) {
  DataSpec spec;
  if (j.contains("csv")) spec.csv_path = j.at("csv").get<std::string>();
  if (j.contains("truth")) spec.truth_path = j.at("truth").get<std::string>();
  if (j.contains("generator")) spec.generator = j.at("generator").get<std::string>();
  if (!spec.csv_path.empty() && !spec.generator.empty()) {
    throw config_error("data: give exactly one of 'csv' and 'generator'");
  }
  if (spec.csv_path.empty() && spec.generator.empty()) {
    throw config_error("data: a 'csv' path or a 'generator' is required");
  }
  spec.n = j.value("n", 0);
  spec.components = j.value("components", 2);
  spec.p = j.value("p", 2);
  if (j.contains("family")) spec.family = family_kind_from_name(j.at("family").get<std::string>());
  if (j.contains("pi_case")) {
    const std::string pc = j.at("pi_case").get<std::string>();
    if (pc == "equal") {
      spec.pi_case = PiCase::Equal;
    } else if (pc == "increasing") {
      spec.pi_case = PiCase::Increasing;
    } else {
      throw config_error("data.pi_case must be 'equal' or 'increasing'");
    }
  }
  spec.p_noise = j.value("p_noise", 3);
  spec.scale = j.value("scale", 2.0);
  spec.seed = j.value("seed", 1u);
  return spec;
}

TrainConfig parse_train(const json& j) {
  TrainConfig config;
  if (j.contains("optimizer")) config.optimizer = optimizer_from_name(j.at("optimizer").get<std::string>());
  config.base_lr = j.value("base_lr", 0.1);
  if (j.contains("clr") && !j.at("clr").is_null()) {
    ClrConfig clr;
    clr.max_lr = j.at("clr").value("max_lr", 5.0 * config.base_lr);
    clr.cycle_epochs = j.at("clr").value("cycle_epochs", 100);
    config.clr = clr;
  }
  config.epochs = j.value("epochs", 1500);
  config.batch_size = j.value("batch_size", 50);
  config.restarts = j.value("restarts", 1);
  config.seed = j.value("seed", 1u);
  config.shuffle = j.value("shuffle", true);
  config.validate();
  return config;
}

json truth_to_json(const SimTruth& truth) {
  json j;
  j["generator"] = truth.generator;
  j["family"] = Family(truth.family).name();
  j["seed"] = truth.seed;
  j["n"] = truth.y.size();
  j["components"] = truth.num_components;
  j["p"] = truth.x.cols();
  j["true_pi"] = std::vector<double>(truth.true_pi.data(), truth.true_pi.data() + truth.true_pi.size());
  std::vector<std::vector<double>> locs;
  for (const Vector& v : truth.true_location) {
    locs.emplace_back(v.data(), v.data() + v.size());
  }
  j["true_location"] = locs;
  j["true_scale"] =
      std::vector<double>(truth.true_scale.data(), truth.true_scale.data() + truth.true_scale.size());
  return j;
}

SimTruth truth_from_json(const json& j) {
  SimTruth truth;
  truth.generator = j.value("generator", "");
  truth.family = family_kind_from_name(j.value("family", "normal"));
  truth.seed = j.value("seed", 0u);
  truth.num_components = j.value("components", 0);
  const auto pi = j.at("true_pi").get<std::vector<double>>();
  truth.true_pi = Eigen::Map<const Vector>(pi.data(), static_cast<Eigen::Index>(pi.size()));
  for (const auto& row : j.at("true_location")) {
    const auto v = row.get<std::vector<double>>();
    truth.true_location.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  const auto sc = j.at("true_scale").get<std::vector<double>>();
  truth.true_scale = Eigen::Map<const Vector>(sc.data(), static_cast<Eigen::Index>(sc.size()));
  return truth;
}

SimTruth run_generator(const DataSpec& spec) {
  if (spec.generator == "linear_mixture") {
    return gen_linear_mixture(spec.n, spec.components, spec.p, spec.family, spec.seed);
  }
  if (spec.generator == "sparse_mixture") {
    return gen_sparse_mixture(spec.n, spec.seed);
  }
  if (spec.generator == "additive_mixture") {
    return gen_additive_mixture(spec.n, spec.family, spec.pi_case, spec.p_noise, spec.scale,
                                spec.seed);
  }
  throw config_error("unknown generator: '" + spec.generator + "'");
}

}  // namespace

ExperimentConfig load_config(const std::string& path) {
  const json j = load_json(path);
  ExperimentConfig config;
  config.name = j.value("name", fs::path(path).stem().string());
  if (!j.contains("data")) throw config_error(path + ": missing 'data' section");
  config.data = parse_data(j.at("data"));

  if (j.contains("model")) {
    const json& jm = j.at("model");
    config.model_template.entropy_xi = jm.value("entropy_xi", 0.0);
    config.model_template.penalties.rho = jm.value("rho", 0.0);
    const std::string gt = jm.value("gating_transform", "softmax");
    if (gt == "softmax") {
      config.model_template.gating_kind = GatingKind::Softmax;
    } else if (gt == "ordered_simplex") {
      config.model_template.gating_kind = GatingKind::OrderedSimplex;
    } else {
      throw config_error("model.gating_transform must be 'softmax' or 'ordered_simplex'");
    }

    // Components: explicit array or {count, ...template}. Feature lists are
    // resolved later against the dataset width, so keep the raw JSON.
    if (!jm.contains("components")) throw config_error("model: missing 'components'");
    config.raw_model = jm.dump();
  } else {
    throw config_error(path + ": missing 'model' section");
  }

  if (j.contains("train")) config.train = parse_train(j.at("train"));
  if (j.contains("eval")) {
    const json& je = j.at("eval");
    config.eval.replications = je.value("replications", 1);
    config.eval.test_fraction = je.value("test_fraction", 0.0);
    config.eval.em_baseline = je.value("em_baseline", false);
    config.eval.em_restarts = je.value("em_restarts", 20);
    config.eval.em_max_iter = je.value("em_max_iter", 500);
    config.eval.em_tol = je.value("em_tol", 1e-8);
    if (config.eval.replications < 1) throw config_error("eval.replications must be >= 1");
    if (config.eval.test_fraction < 0.0 || config.eval.test_fraction >= 1.0) {
      throw config_error("eval.test_fraction must lie in [0, 1)");
    }
  }
  if (j.contains("path")) {
    config.xi_grid = j.at("path").at("xi_grid").get<std::vector<double>>();
  }
  if (j.contains("sweep")) {
    const json& js = j.at("sweep");
    if (js.contains("optimizers")) config.sweep.optimizers = js.at("optimizers").get<std::vector<std::string>>();
    if (js.contains("lrs")) config.sweep.lrs = js.at("lrs").get<std::vector<double>>();
    config.sweep.clr = js.value("clr", true);
  }
  config.warm_start_path = j.value("warm_start", "");
  return config;
}

ModelSpec build_model_spec(const ExperimentConfig& config, int p) {
  if (config.raw_model.empty()) throw config_error("experiment config has no model section");
  const json jm = json::parse(config.raw_model);
  ModelSpec spec = config.model_template;

  const json& jc = jm.at("components");
  if (jc.is_array()) {
    int idx = 0;
    for (const auto& comp : jc) {
      spec.components.push_back(parse_component(comp, p, "components[" + std::to_string(idx++) + "]"));
    }
  } else if (jc.is_object()) {
    const int count = jc.value("count", 1);
    if (count < 1) throw config_error("model.components.count must be >= 1");
    for (int m = 0; m < count; ++m) {
      spec.components.push_back(parse_component(jc, p, "components"));
    }
  } else {
    throw config_error("model.components must be an array or an object");
  }

  const int m_comp = static_cast<int>(spec.components.size());
  if (jm.contains("gating")) {
    const json& jg = jm.at("gating");
    if (jg.is_array()) {
      for (const auto& g : jg) spec.gating.push_back(parse_predictor(g, p, "gating"));
      if (static_cast<int>(spec.gating.size()) != m_comp) {
        throw config_error("gating array must have one predictor per component");
      }
    } else {
      for (int m = 0; m < m_comp; ++m) spec.gating.push_back(parse_predictor(jg, p, "gating"));
    }
  }
  return spec;
}

Dataset load_dataset(const DataSpec& spec) {
  Dataset ds;
  if (!spec.csv_path.empty()) {
    const CsvTable table = read_csv(spec.csv_path);
    const int ycol = table.column("y");
    if (ycol < 0) throw data_error(spec.csv_path + ": missing outcome column 'y'");
    ds.y = table.values.col(ycol);
    ds.x.resize(table.values.rows(), table.values.cols() - 1);
    Eigen::Index out = 0;
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
      if (j == ycol) continue;
      ds.x.col(out++) = table.values.col(j);
    }
    if (!spec.truth_path.empty()) ds.truth = truth_from_json(load_json(spec.truth_path));
    return ds;
  }
  SimTruth truth = run_generator(spec);
  ds.x = truth.x;
  ds.y = truth.y;
  ds.truth = std::move(truth);
  return ds;
}

Split split_dataset(const Matrix& x, const Vector& y, double test_fraction, std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  Split split;
  if (test_fraction <= 0.0) {
    split.x_train = x;
    split.y_train = y;
    split.train_rows.resize(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) split.train_rows[static_cast<size_t>(i)] = i;
    return split;
  }
  IndexVec idx(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  auto rng = make_rng(seed, Stream::Split);
  std::shuffle(idx.begin(), idx.end(), rng);
  const Eigen::Index n_test = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(test_fraction * n));
  split.test_rows.assign(idx.begin(), idx.begin() + n_test);
  split.train_rows.assign(idx.begin() + n_test, idx.end());
  std::sort(split.test_rows.begin(), split.test_rows.end());
  std::sort(split.train_rows.begin(), split.train_rows.end());

  split.x_train.resize(static_cast<Eigen::Index>(split.train_rows.size()), x.cols());
  split.y_train.resize(static_cast<Eigen::Index>(split.train_rows.size()));
  for (size_t i = 0; i < split.train_rows.size(); ++i) {
    split.x_train.row(static_cast<Eigen::Index>(i)) = x.row(split.train_rows[i]);
    split.y_train[static_cast<Eigen::Index>(i)] = y[split.train_rows[i]];
  }
  split.x_test.resize(static_cast<Eigen::Index>(split.test_rows.size()), x.cols());
  split.y_test.resize(static_cast<Eigen::Index>(split.test_rows.size()));
  for (size_t i = 0; i < split.test_rows.size(); ++i) {
    split.x_test.row(static_cast<Eigen::Index>(i)) = x.row(split.test_rows[i]);
    split.y_test[static_cast<Eigen::Index>(i)] = y[split.test_rows[i]];
  }
  return split;
}

std::vector<ComponentSummary> summarize_fitted_components(const CompiledModel& model,
                                                          const ParamField& field) {
  std::vector<ComponentSummary> out;
  const int m_comp = model.num_components();
  for (int m = 0; m < m_comp; ++m) {
    const ComponentSpec& comp = model.spec().components[static_cast<size_t>(m)];
    ComponentSummary s;
    s.pi = field.pi.col(m).mean();
    std::vector<double> coefs;
    // Location coefficients: intercept and linear weights in term order.
    for (int param = 0; param < comp.family.param_count(); ++param) {
      if (comp.family.param_role(param) != ParamRole::Location) continue;
      const CompiledPredictor& pred = model.param_predictors()[static_cast<size_t>(m)][static_cast<size_t>(param)];
      for (const CompiledTerm& ct : pred.terms()) {
        if (std::holds_alternative<InterceptTerm>(ct.spec.kind) ||
            std::holds_alternative<LinearTerm>(ct.spec.kind)) {
          for (int wi = 0; wi < ct.weight_count; ++wi) {
            coefs.push_back(model.weights()[ct.weight_offset + wi]);
          }
        }
      }
    }
    // Scale parameters enter as fitted means on the constrained scale.
    for (int param = 0; param < comp.family.param_count(); ++param) {
      if (comp.family.param_role(param) == ParamRole::Scale) {
        coefs.push_back(field.theta[static_cast<size_t>(m)].col(param).mean());
      }
    }
    s.coefs = Eigen::Map<const Vector>(coefs.data(), static_cast<Eigen::Index>(coefs.size()));
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ComponentSummary> summarize_truth_components(const SimTruth& truth) {
  std::vector<ComponentSummary> out;
  for (int m = 0; m < truth.num_components; ++m) {
    ComponentSummary s;
    s.pi = truth.true_pi[m];
    const Vector& loc = truth.true_location[static_cast<size_t>(m)];
    Vector coefs(loc.size() + 1);
    coefs.head(loc.size()) = loc;
    coefs[loc.size()] = truth.true_scale[m];
    s.coefs = std::move(coefs);
    out.push_back(std::move(s));
  }
  return out;
}

void cmd_simulate(const ExperimentConfig& config, const std::string& out_dir) {
  if (config.data.generator.empty()) {
    throw config_error("simulate requires a generator data source");
  }
  fs::create_directories(out_dir);
  const SimTruth truth = run_generator(config.data);

  std::vector<std::string> header{"y"};
  for (Eigen::Index j = 0; j < truth.x.cols(); ++j) header.push_back("x" + std::to_string(j + 1));
  Matrix table(truth.x.rows(), truth.x.cols() + 1);
  table.col(0) = truth.y;
  table.rightCols(truth.x.cols()) = truth.x;
  write_csv((fs::path(out_dir) / "data.csv").string(), header, table);

  json jt = truth_to_json(truth);
  if (truth.generator == "additive_mixture") {
    jt["pi_case"] = config.data.pi_case == PiCase::Equal ? "equal" : "increasing";
    jt["p_noise"] = config.data.p_noise;
    jt["scale"] = config.data.scale;
  }
  dump_json(jt, (fs::path(out_dir) / "truth.json").string());
}

namespace {

struct FitOutput {
  FitResult fit;
  CompiledModel model;
  Split split;
};

FitOutput fit_once(const ExperimentConfig& config, const Dataset& ds, std::uint64_t data_seed) {
  Split split = split_dataset(ds.x, ds.y, config.eval.test_fraction, data_seed);
  ModelSpec spec = build_model_spec(config, static_cast<int>(ds.x.cols()));
  CompiledModel base = CompiledModel::compile(spec, split.x_train, split.y_train);
  const BoundData train_data = base.bind(split.x_train, split.y_train);

  std::optional<Vector> warm;
  if (!config.warm_start_path.empty()) {
    const json jf = load_json(config.warm_start_path);
    const auto w = jf.at("weights_flat").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != base.num_weights()) {
      throw config_error("warm start weight count mismatch: " + std::to_string(w.size()) +
                         " vs " + std::to_string(base.num_weights()));
    }
    warm = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
  }

  const ModelFactory factory = [&](std::uint64_t seed) {
    CompiledModel m = base;
    if (warm) {
      m.weights() = *warm;
    } else {
      m.init_weights(seed);
    }
    return m;
  };

  FitOutput out{multi_restart(factory, train_data, config.train), base, std::move(split)};
  out.model.weights() = out.fit.weights;
  return out;
}

}  // namespace

void cmd_fit(const ExperimentConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const Dataset ds = load_dataset(config.data);
  FitOutput out = fit_once(config, ds, config.data.seed);

  json jf;
  jf["name"] = config.name;
  jf["final_risk"] = out.fit.final_risk;
  jf["seed"] = out.fit.seed;
  jf["n_train"] = out.split.y_train.size();
  jf["n_test"] = out.split.y_test.size();
  json jr = json::array();
  for (const RestartSummary& rs : out.fit.restarts) {
    jr.push_back({{"seed", rs.seed}, {"final_risk", rs.final_risk}, {"diverged", rs.diverged}});
  }
  jf["restarts"] = jr;
  json jl = json::object();
  for (const auto& [label, lambda] : out.model.resolved_lambdas()) jl[label] = lambda;
  jf["lambdas"] = jl;

  const Vector pi_mean = out.fit.train_field.pi.colwise().mean().transpose();
  jf["pi_mean"] = std::vector<double>(pi_mean.data(), pi_mean.data() + pi_mean.size());

  json jw = json::object();
  auto dump_weights = [&](const CompiledPredictor& pred) {
    for (const CompiledTerm& ct : pred.terms()) {
      const auto w = out.fit.weights.segment(ct.weight_offset, ct.weight_count);
      jw[ct.label] = std::vector<double>(w.data(), w.data() + w.size());
    }
  };
  for (const auto& per_comp : out.model.param_predictors()) {
    for (const CompiledPredictor& p : per_comp) dump_weights(p);
  }
  for (const CompiledPredictor& g : out.model.gating_predictors()) dump_weights(g);
  jf["weights"] = jw;
  jf["weights_flat"] =
      std::vector<double>(out.fit.weights.data(), out.fit.weights.data() + out.fit.weights.size());
  dump_json(jf, (fs::path(out_dir) / "fit.json").string());

  Matrix traj(static_cast<Eigen::Index>(out.fit.risk_trajectory.size()), 3);
  for (size_t e = 0; e < out.fit.risk_trajectory.size(); ++e) {
    traj(static_cast<Eigen::Index>(e), 0) = static_cast<double>(e + 1);
    traj(static_cast<Eigen::Index>(e), 1) = out.fit.risk_trajectory[e];
    traj(static_cast<Eigen::Index>(e), 2) = out.fit.lr_trajectory[e];
  }
  write_csv((fs::path(out_dir) / "trajectory.csv").string(), {"epoch", "risk", "lr"}, traj);
}

namespace {

struct MetricRow {
  int replication;
  std::string method;
  std::string metric;
  double value;
};

void append_alignment_metrics(std::vector<MetricRow>& rows, int rep, const std::string& method,
                              const std::vector<ComponentSummary>& est, const SimTruth& truth,
                              bool with_coefs) {
  const std::vector<ComponentSummary> tr = summarize_truth_components(truth);
  const std::vector<int> perm = align_components(est, tr);
  if (with_coefs) rows.push_back({rep, method, "coef_rmse", coef_rmse(est, tr, perm)});
  rows.push_back({rep, method, "pi_rmse", pi_rmse(est, tr, perm)});
  // Unequal component counts were aligned against zero-probability dummies.
  rows.push_back({rep, method, "component_mismatch", est.size() == tr.size() ? 0.0 : 1.0});
}

// One replication of the evaluation experiment: generate/split/fit/score.
void evaluate_replication(const ExperimentConfig& config, int rep, std::vector<MetricRow>& rows) {
  DataSpec data_spec = config.data;
  data_spec.seed = config.data.seed + static_cast<std::uint64_t>(rep);
  ExperimentConfig local = config;
  local.data = data_spec;
  local.train.seed = config.train.seed + static_cast<std::uint64_t>(rep);

  const Dataset ds = load_dataset(data_spec);
  FitOutput out = fit_once(local, ds, data_spec.seed);

  const double n_train = static_cast<double>(out.split.y_train.size());
  const BoundData train_data = out.model.bind(out.split.x_train, out.split.y_train);
  const double ls = log_score(out.model, train_data);
  rows.push_back({rep, "nmdr", "ls", ls});
  rows.push_back({rep, "nmdr", "ls_per_obs", ls / n_train});
  rows.push_back({rep, "nmdr", "final_risk", out.fit.final_risk});

  double pls = ls;
  double n_test = n_train;
  if (out.split.y_test.size() > 0) {
    const BoundData test_data = out.model.bind(out.split.x_test, out.split.y_test);
    pls = log_score(out.model, test_data);
    n_test = static_cast<double>(out.split.y_test.size());
  }
  rows.push_back({rep, "nmdr", "pls", pls});
  rows.push_back({rep, "nmdr", "pls_per_obs", pls / n_test});

  const bool linear_truth =
      ds.truth && (ds.truth->generator == "linear_mixture" || ds.truth->generator == "sparse_mixture");
  if (ds.truth) {
    const auto est = summarize_fitted_components(out.model, out.fit.train_field);
    append_alignment_metrics(rows, rep, "nmdr", est, *ds.truth, linear_truth);
  }

  if (config.eval.em_baseline) {
    try {
      const EmModel em = em_fit_restarts(out.split.x_train, out.split.y_train,
                                         ds.truth ? ds.truth->num_components : config.data.components,
                                         config.eval.em_tol, config.eval.em_max_iter,
                                         data_spec.seed, config.eval.em_restarts);
      const double em_ls = -em.loglik_trajectory.back();
      rows.push_back({rep, "em", "ls", em_ls});
      rows.push_back({rep, "em", "ls_per_obs", em_ls / n_train});
      double em_pls = em_ls;
      if (out.split.y_test.size() > 0) {
        em_pls = -em_loglik(em, out.split.x_test, out.split.y_test);
      }
      rows.push_back({rep, "em", "pls", em_pls});
      rows.push_back({rep, "em", "pls_per_obs", em_pls / n_test});
      rows.push_back({rep, "em", "failed", 0.0});
      if (ds.truth && linear_truth) {
        std::vector<ComponentSummary> est;
        for (Eigen::Index m = 0; m < em.pi.size(); ++m) {
          ComponentSummary s;
          s.pi = em.pi[m];
          Vector coefs(em.beta[static_cast<size_t>(m)].size() + 1);
          coefs.head(em.beta[static_cast<size_t>(m)].size()) = em.beta[static_cast<size_t>(m)];
          coefs[em.beta[static_cast<size_t>(m)].size()] = em.sigma[m];
          s.coefs = std::move(coefs);
          est.push_back(std::move(s));
        }
        append_alignment_metrics(rows, rep, "em", est, *ds.truth, true);
      }
    } catch (const std::exception&) {
      // EM failures are recorded, not fatal (high-dimensional cells).
      rows.push_back({rep, "em", "failed", 1.0});
    }
  }
}

}  // namespace

void cmd_evaluate(const ExperimentConfig& config, const std::string& out_dir,
                  const std::string& fit_path) {
  fs::create_directories(out_dir);
  std::vector<MetricRow> rows;

  if (!fit_path.empty()) {
    // Score an existing fit artifact on the configured data.
    const Dataset ds = load_dataset(config.data);
    Split split = split_dataset(ds.x, ds.y, config.eval.test_fraction, config.data.seed);
    ModelSpec spec = build_model_spec(config, static_cast<int>(ds.x.cols()));
    CompiledModel model = CompiledModel::compile(spec, split.x_train, split.y_train);
    const json jf = load_json(fit_path);
    const auto w = jf.at("weights_flat").get<std::vector<double>>();
    if (static_cast<int>(w.size()) != model.num_weights()) {
      throw config_error("fit artifact weight count mismatch");
    }
    model.weights() = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));

    const BoundData train_data = model.bind(split.x_train, split.y_train);
    const double ls = log_score(model, train_data);
    rows.push_back({0, "nmdr", "ls", ls});
    rows.push_back({0, "nmdr", "ls_per_obs", ls / static_cast<double>(split.y_train.size())});
    double pls = ls;
    double n_test = static_cast<double>(split.y_train.size());
    if (split.y_test.size() > 0) {
      const BoundData test_data = model.bind(split.x_test, split.y_test);
      pls = log_score(model, test_data);
      n_test = static_cast<double>(split.y_test.size());
    }
    rows.push_back({0, "nmdr", "pls", pls});
    rows.push_back({0, "nmdr", "pls_per_obs", pls / n_test});
    if (ds.truth) {
      const ParamField field = model.forward(train_data);
      const auto est = summarize_fitted_components(model, field);
      const bool linear_truth =
          ds.truth->generator == "linear_mixture" || ds.truth->generator == "sparse_mixture";
      append_alignment_metrics(rows, 0, "nmdr", est, *ds.truth, linear_truth);
    }
  } else {
    const int reps = config.eval.replications;
    std::vector<std::vector<MetricRow>> per_rep(static_cast<size_t>(reps));
    const int jobs = std::min(config.train.jobs, reps);
    if (jobs <= 1) {
      for (int r = 0; r < reps; ++r) evaluate_replication(config, r, per_rep[static_cast<size_t>(r)]);
    } else {
      ExperimentConfig inner = config;
      inner.train.jobs = 1;
      std::atomic<int> next{0};
      std::vector<std::thread> workers;
      for (int t = 0; t < jobs; ++t) {
        workers.emplace_back([&]() {
          for (int r = next.fetch_add(1); r < reps; r = next.fetch_add(1)) {
            evaluate_replication(inner, r, per_rep[static_cast<size_t>(r)]);
          }
        });
      }
      for (auto& w : workers) w.join();
    }
    for (auto& r : per_rep) rows.insert(rows.end(), r.begin(), r.end());
  }

  // Long-format CSV plus a mean/sd JSON summary.
  {
    std::ofstream out(fs::path(out_dir) / "metrics.csv");
    if (!out) throw data_error("cannot write metrics.csv");
    out << "replication,method,metric,value\n";
    for (const MetricRow& row : rows) {
      out << row.replication << "," << row.method << "," << row.metric << ","
          << format_double(row.value) << "\n";
    }
  }
  {
    std::map<std::string, std::map<std::string, std::vector<double>>> grouped;
    for (const MetricRow& row : rows) grouped[row.method][row.metric].push_back(row.value);
    json js = json::object();
    for (const auto& [method, metrics] : grouped) {
      json jmeth = json::object();
      for (const auto& [metric, values] : metrics) {
        const MeanSd ms = mean_sd(values);
        jmeth[metric] = {{"mean", ms.mean}, {"sd", ms.sd}, {"n", values.size()}};
      }
      js[method] = jmeth;
    }
    dump_json(js, (fs::path(out_dir) / "metrics.json").string());
  }
}

void cmd_path(const ExperimentConfig& config, const std::string& out_dir) {
  if (config.xi_grid.empty()) throw config_error("path requires path.xi_grid in the config");
  fs::create_directories(out_dir);
  const Dataset ds = load_dataset(config.data);
  const ModelSpec spec = build_model_spec(config, static_cast<int>(ds.x.cols()));

  const auto rows = entropy_path(spec, ds.x, ds.y, config.xi_grid, config.train);
  const int m_comp = static_cast<int>(rows.front().mean_pi.size());
  std::vector<std::string> header{"xi"};
  for (int m = 1; m <= m_comp; ++m) header.push_back("pi_" + std::to_string(m));
  header.push_back("diverged");
  Matrix table(static_cast<Eigen::Index>(rows.size()), m_comp + 2);
  for (size_t i = 0; i < rows.size(); ++i) {
    table(static_cast<Eigen::Index>(i), 0) = rows[i].xi;
    for (int m = 0; m < m_comp; ++m) table(static_cast<Eigen::Index>(i), m + 1) = rows[i].mean_pi[m];
    table(static_cast<Eigen::Index>(i), m_comp + 1) = rows[i].diverged ? 1.0 : 0.0;
  }
  write_csv((fs::path(out_dir) / "path.csv").string(), header, table);
}

void cmd_sweep(const ExperimentConfig& config, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const Dataset ds = load_dataset(config.data);

  struct SweepRow {
    std::string optimizer;
    double lr;
    bool clr;
    double final_risk = std::numeric_limits<double>::quiet_NaN();
    double pls = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
  };
  std::vector<SweepRow> rows;

  for (const std::string& opt : config.sweep.optimizers) {
    for (double lr : config.sweep.lrs) {
      SweepRow row{opt, lr, config.sweep.clr, 0.0, 0.0, false};
      ExperimentConfig local = config;
      local.train.optimizer = optimizer_from_name(opt);
      local.train.base_lr = lr;
      if (config.sweep.clr) {
        ClrConfig clr;
        clr.max_lr = 5.0 * lr;
        clr.cycle_epochs = local.train.clr ? local.train.clr->cycle_epochs : 100;
        local.train.clr = clr;
      } else {
        local.train.clr.reset();
      }
      try {
        FitOutput out = fit_once(local, ds, config.data.seed);
        row.final_risk = out.fit.final_risk;
        if (out.split.y_test.size() > 0) {
          const BoundData test_data = out.model.bind(out.split.x_test, out.split.y_test);
          row.pls = log_score(out.model, test_data);
        } else {
          row.pls = out.fit.final_risk;
        }
      } catch (const divergence_error&) {
        row.diverged = true;
      }
      rows.push_back(std::move(row));
    }
  }

  // Rank by predicted log-score; diverged settings sort last.
  std::vector<size_t> order(rows.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const double pa = rows[a].diverged ? std::numeric_limits<double>::infinity() : rows[a].pls;
    const double pb = rows[b].diverged ? std::numeric_limits<double>::infinity() : rows[b].pls;
    return pa < pb;
  });
  std::vector<int> rank(rows.size(), 0);
  for (size_t pos = 0; pos < order.size(); ++pos) rank[order[pos]] = static_cast<int>(pos) + 1;

  std::ofstream out(fs::path(out_dir) / "sweep.csv");
  if (!out) throw data_error("cannot write sweep.csv");
  out << "optimizer,lr,clr,final_risk,test_pls,diverged,rank\n";
  for (size_t i = 0; i < rows.size(); ++i) {
    out << rows[i].optimizer << "," << format_double(rows[i].lr) << ","
        << (rows[i].clr ? 1 : 0) << "," << format_double(rows[i].final_risk) << ","
        << format_double(rows[i].pls) << "," << (rows[i].diverged ? 1 : 0) << "," << rank[i]
        << "\n";
  }
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Finite mixtures of distributional regressions"};
  app.require_subcommand(1);

  std::string config_path, out_dir, fit_path;
  std::int64_t seed_override = -1;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed", seed_override, "override the data and train seeds");
    sub->add_option("--jobs", jobs, "worker bound for restarts/replications")->check(CLI::PositiveNumber);
  };

  CLI::App* simulate = app.add_subcommand("simulate", "generate a dataset and its ground truth");
  CLI::App* fit = app.add_subcommand("fit", "train a model on the configured data");
  CLI::App* evaluate = app.add_subcommand("evaluate", "compute metrics (optionally for a fit artifact)");
  CLI::App* path = app.add_subcommand("path", "entropy-penalty coefficient path");
  CLI::App* sweep = app.add_subcommand("sweep", "optimizer sweep with a rank table");
  for (CLI::App* sub : {simulate, fit, evaluate, path, sweep}) add_common(sub);
  evaluate->add_option("--fit", fit_path, "fit.json to score instead of refitting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    ExperimentConfig config = load_config(config_path);
    if (seed_override >= 0) {
      config.data.seed = static_cast<std::uint64_t>(seed_override);
      config.train.seed = static_cast<std::uint64_t>(seed_override);
    }
    config.train.jobs = jobs;

    if (simulate->parsed()) {
      cmd_simulate(config, out_dir);
    } else if (fit->parsed()) {
      cmd_fit(config, out_dir);
    } else if (evaluate->parsed()) {
      cmd_evaluate(config, out_dir, fit_path);
    } else if (path->parsed()) {
      cmd_path(config, out_dir);
    } else if (sweep->parsed()) {
      cmd_sweep(config, out_dir);
    }
    return 0;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const support_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const divergence_error& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace nmdr
