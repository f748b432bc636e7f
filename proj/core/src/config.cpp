#include "flowps/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flowps/builtins.hpp"
#include "flowps/errors.hpp"
#include "flowps/io.hpp"

namespace flowps {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) {
    return "";
  }
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double_value(const std::string& v, const std::string& key) {
  double out = 0.0;
  const char* first = v.data();
  const char* last = v.data() + v.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
  }
  return out;
}

long long parse_int_value(const std::string& v, const std::string& key) {
  long long out = 0;
  const char* first = v.data();
  const char* last = v.data() + v.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError("config key '" + key + "': not an integer: '" + v +
                      "'");
  }
  return out;
}

std::uint64_t parse_u64_value(const std::string& v, const std::string& key) {
  std::uint64_t out = 0;
  const char* first = v.data();
  const char* last = v.data() + v.size();
  const auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError("config key '" + key +
                      "': not an unsigned integer: '" + v + "'");
  }
  return out;
}

bool parse_bool_value(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") {
    return true;
  }
  if (v == "false" || v == "0") {
    return false;
  }
  throw ConfigError("config key '" + key + "': not a boolean: '" + v + "'");
}

std::vector<double> parse_double_list(const std::string& v,
                                      const std::string& key) {
  std::istringstream is(v);
  std::vector<double> out;
  std::string tok;
  while (is >> tok) {
    out.push_back(parse_double_value(tok, key));
  }
  return out;
}

std::vector<int> parse_int_list(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  std::vector<int> out;
  std::string tok;
  while (is >> tok) {
    out.push_back(static_cast<int>(parse_int_value(tok, key)));
  }
  return out;
}

// Consumes keys from a working copy so leftovers can be reported as typos.
class KvReader {
 public:
  explicit KvReader(KvMap kv) : kv_(std::move(kv)) {}

  bool has(const std::string& key) const { return kv_.count(key) != 0; }

  std::string take(const std::string& key, const std::string& fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) {
      return fallback;
    }
    std::string v = it->second;
    kv_.erase(it);
    return v;
  }

  std::string require(const std::string& key) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) {
      throw ConfigError("config is missing required key '" + key + "'");
    }
    std::string v = it->second;
    kv_.erase(it);
    return v;
  }

  double take_double(const std::string& key, double fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) {
      return fallback;
    }
    const double v = parse_double_value(it->second, key);
    kv_.erase(it);
    return v;
  }

  long long take_int(const std::string& key, long long fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) {
      return fallback;
    }
    const long long v = parse_int_value(it->second, key);
    kv_.erase(it);
    return v;
  }

  std::uint64_t take_u64(const std::string& key, std::uint64_t fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) {
      return fallback;
    }
    const std::uint64_t v = parse_u64_value(it->second, key);
    kv_.erase(it);
    return v;
  }

  bool take_bool(const std::string& key, bool fallback) {
    const auto it = kv_.find(key);
    if (it == kv_.end()) {
      return fallback;
    }
    const bool v = parse_bool_value(it->second, key);
    kv_.erase(it);
    return v;
  }

  void finish() const {
    if (!kv_.empty()) {
      std::string keys;
      for (const auto& [k, _] : kv_) {
        if (!keys.empty()) {
          keys += ", ";
        }
        keys += k;
      }
      throw ConfigError("config has unknown keys: " + keys);
    }
  }

 private:
  KvMap kv_;
};

std::string join_doubles(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i > 0) {
      out += ' ';
    }
    out += format_double(v(i));
  }
  return out;
}

std::string join_matrix_rowmajor(const Eigen::MatrixXd& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (r + c > 0) {
        out += ' ';
      }
      out += format_double(m(r, c));
    }
  }
  return out;
}

GammaSchedule parse_gamma(const std::string& v) {
  GammaSchedule g;
  if (v == "sigma_t") {
    g.kind = GammaSchedule::Kind::sigma_t;
  } else if (v == "one_minus_sigma_t") {
    g.kind = GammaSchedule::Kind::one_minus_sigma_t;
  } else if (v == "one") {
    g.kind = GammaSchedule::Kind::one;
  } else if (v.rfind("constant:", 0) == 0) {
    g.kind = GammaSchedule::Kind::constant;
    g.value = parse_double_value(v.substr(9), "solver.gamma");
  } else {
    throw ConfigError("solver.gamma: expected sigma_t, one_minus_sigma_t, "
                      "one or constant:<v>, got '" +
                      v + "'");
  }
  return g;
}

std::string gamma_string(const GammaSchedule& g) {
  switch (g.kind) {
    case GammaSchedule::Kind::sigma_t:
      return "sigma_t";
    case GammaSchedule::Kind::one_minus_sigma_t:
      return "one_minus_sigma_t";
    case GammaSchedule::Kind::one:
      return "one";
    case GammaSchedule::Kind::constant:
      return "constant:" + format_double(g.value);
  }
  throw UsageError("gamma_string: unknown kind");
}

EtaSchedule parse_eta(const std::string& v) {
  EtaSchedule e;
  if (v == "flowdps") {
    e.kind = EtaSchedule::Kind::flowdps;
  } else if (v == "zero") {
    e.kind = EtaSchedule::Kind::zero;
  } else if (v.rfind("constant:", 0) == 0) {
    e.kind = EtaSchedule::Kind::constant;
    e.value = parse_double_value(v.substr(9), "solver.eta");
  } else {
    throw ConfigError(
        "solver.eta: expected flowdps, zero or constant:<v>, got '" + v + "'");
  }
  return e;
}

std::string eta_string(const EtaSchedule& e) {
  switch (e.kind) {
    case EtaSchedule::Kind::flowdps:
      return "flowdps";
    case EtaSchedule::Kind::zero:
      return "zero";
    case EtaSchedule::Kind::constant:
      return "constant:" + format_double(e.value);
  }
  throw UsageError("eta_string: unknown kind");
}

DcMethod parse_dc(const std::string& v) {
  if (v == "disabled") {
    return DcMethod::disabled();
  }
  std::istringstream is(v);
  std::string kind, a, b;
  std::getline(is, kind, ':');
  std::getline(is, a, ':');
  std::getline(is, b, ':');
  if (kind == "gd" && !a.empty() && !b.empty()) {
    return DcMethod::gd(static_cast<int>(parse_int_value(a, "solver.dc")),
                        parse_double_value(b, "solver.dc"));
  }
  if (kind == "cg" && !a.empty()) {
    if (b.empty()) {
      return DcMethod::cg(static_cast<int>(parse_int_value(a, "solver.dc")));
    }
    return DcMethod::cg(static_cast<int>(parse_int_value(a, "solver.dc")),
                        parse_double_value(b, "solver.dc"));
  }
  throw ConfigError("solver.dc: expected gd:<steps>:<step_size>, "
                    "cg:<steps>[:<tol>] or disabled, got '" +
                    v + "'");
}

std::string dc_string(const DcMethod& dc) {
  if (dc.steps == 0) {
    return "disabled";
  }
  switch (dc.kind) {
    case DcMethod::Kind::gradient_descent:
      return "gd:" + std::to_string(dc.steps) + ":" +
             format_double(dc.step_size);
    case DcMethod::Kind::conjugate_gradient:
      return "cg:" + std::to_string(dc.steps) + ":" + format_double(dc.tol);
  }
  throw UsageError("dc_string: unknown kind");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

KvMap parse_config_text(const std::string& text) {
  KvMap kv;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') {
      continue;
    }
    if (t.front() == '[') {
      if (t.back() != ']' || t.size() < 3) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": malformed section header '" + t + "'");
      }
      section = trim(t.substr(1, t.size() - 2));
      if (section.empty()) {
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": empty section name");
      }
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected 'key = value', got '" + t + "'");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": empty key");
    }
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": key '" + key + "' appears before any [section]");
    }
    const std::string full = section + "." + key;
    if (!kv.emplace(full, value).second) {
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": duplicate key '" + full + "'");
    }
  }
  return kv;
}

KvMap parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw ConfigError("cannot open config file: " + path);
  }
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_config_text(buf.str());
}

std::string serialize_config(const KvMap& kv) {
  std::string out;
  std::string section;
  for (const auto& [full, value] : kv) {
    const auto dot = full.find('.');
    if (dot == std::string::npos) {
      throw UsageError("serialize_config: key without section: " + full);
    }
    const std::string sec = full.substr(0, dot);
    if (sec != section) {
      if (!out.empty()) {
        out += '\n';
      }
      out += '[' + sec + "]\n";
      section = sec;
    }
    out += full.substr(dot + 1) + " = " + value + '\n';
  }
  return out;
}

std::string TaskSpec::name() const {
  switch (kind) {
    case Kind::none:
      return "none";
    case Kind::sr_avgpool:
      return "sr_avgpool";
    case Kind::deblur_gauss:
      return "deblur_gauss";
    case Kind::inpaint:
      return "inpaint";
    case Kind::dense:
      return "dense";
  }
  throw UsageError("TaskSpec::name: unknown kind");
}

std::shared_ptr<LinearOperator> make_task_operator(const TaskSpec& task,
                                                   int dim) {
  switch (task.kind) {
    case TaskSpec::Kind::none: {
      std::vector<int> all(static_cast<std::size_t>(dim));
      for (int i = 0; i < dim; ++i) {
        all[static_cast<std::size_t>(i)] = i;
      }
      return std::make_shared<LinearOperator>(
          LinearOperator::mask(std::move(all), dim));
    }
    case TaskSpec::Kind::sr_avgpool:
    case TaskSpec::Kind::deblur_gauss: {
      const int side = static_cast<int>(std::lround(std::sqrt(dim)));
      if (side * side != dim) {
        throw ConfigError("image task requires square dimension, got " +
                          std::to_string(dim));
      }
      if (task.kind == TaskSpec::Kind::sr_avgpool) {
        return std::make_shared<LinearOperator>(
            LinearOperator::avgpool(side, side, task.factor));
      }
      return std::make_shared<LinearOperator>(LinearOperator::blur(
          side, side,
          gaussian_blur_kernel(task.kernel_size, task.kernel_std)));
    }
    case TaskSpec::Kind::inpaint:
      if (task.mask.empty()) {
        throw ConfigError("inpaint task requires a non-empty task.mask");
      }
      return std::make_shared<LinearOperator>(
          LinearOperator::mask(task.mask, dim));
    case TaskSpec::Kind::dense: {
      if (task.matrix_file.empty()) {
        throw ConfigError("dense task requires task.matrix_file");
      }
      Eigen::MatrixXd m = read_matrix(task.matrix_file);
      if (m.cols() != dim) {
        throw ConfigError("dense task matrix has " + std::to_string(m.cols()) +
                          " columns; prior dimension is " +
                          std::to_string(dim));
      }
      return std::make_shared<LinearOperator>(
          LinearOperator::dense(std::move(m)));
    }
  }
  throw UsageError("make_task_operator: unknown task kind");
}

std::string SolverSpec::name_string() const {
  switch (name) {
    case Name::flowdps:
      return "flowdps";
    case Name::dps_velocity:
      return "dps_velocity";
    case Name::flowchef:
      return "flowchef";
    case Name::oracle:
      return "oracle";
    case Name::unconditional:
      return "unconditional";
  }
  throw UsageError("SolverSpec::name_string: unknown name");
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_kv(parse_config_file(path));
}

ExperimentConfig ExperimentConfig::from_kv(const KvMap& kv) {
  KvReader r(kv);
  ExperimentConfig cfg;

  // Prior: either a builtin name or inline mixture components.
  if (r.has("prior.name")) {
    cfg.prior_name = r.require("prior.name");
    cfg.prior = builtin_prior(cfg.prior_name);
  } else {
    const int k = static_cast<int>(r.take_int("prior.components", 0));
    const int d = static_cast<int>(r.take_int("prior.dim", 0));
    if (k < 1 || d < 1) {
      throw ConfigError(
          "prior requires either prior.name or prior.components/prior.dim");
    }
    cfg.prior.weights.resize(k);
    for (int i = 0; i < k; ++i) {
      const std::string suffix = "." + std::to_string(i);
      cfg.prior.weights(i) =
          parse_double_value(r.require("prior.weight" + suffix),
                             "prior.weight" + suffix);
      const auto mean =
          parse_double_list(r.require("prior.mean" + suffix),
                            "prior.mean" + suffix);
      if (static_cast<int>(mean.size()) != d) {
        throw ConfigError("prior.mean" + suffix + ": expected " +
                          std::to_string(d) + " values");
      }
      cfg.prior.means.push_back(
          Eigen::Map<const Eigen::VectorXd>(mean.data(), d));
      const auto cov = parse_double_list(r.require("prior.cov" + suffix),
                                         "prior.cov" + suffix);
      if (static_cast<int>(cov.size()) != d * d) {
        throw ConfigError("prior.cov" + suffix + ": expected " +
                          std::to_string(d * d) + " row-major values");
      }
      Eigen::MatrixXd c(d, d);
      for (int rr = 0; rr < d; ++rr) {
        for (int cc = 0; cc < d; ++cc) {
          c(rr, cc) = cov[static_cast<std::size_t>(rr * d + cc)];
        }
      }
      cfg.prior.covs.push_back(std::move(c));
    }
    cfg.prior.validate();
  }

  // Task.
  const std::string task_kind = r.take("task.kind", "none");
  if (task_kind == "none") {
    cfg.task.kind = TaskSpec::Kind::none;
  } else if (task_kind == "sr_avgpool") {
    cfg.task.kind = TaskSpec::Kind::sr_avgpool;
  } else if (task_kind == "deblur_gauss") {
    cfg.task.kind = TaskSpec::Kind::deblur_gauss;
  } else if (task_kind == "inpaint") {
    cfg.task.kind = TaskSpec::Kind::inpaint;
  } else if (task_kind == "dense") {
    cfg.task.kind = TaskSpec::Kind::dense;
  } else {
    throw ConfigError("task.kind: unknown task '" + task_kind + "'");
  }
  cfg.task.factor = static_cast<int>(r.take_int("task.factor", 2));
  cfg.task.kernel_size = static_cast<int>(r.take_int("task.kernel_size", 5));
  cfg.task.kernel_std = r.take_double("task.kernel_std", 1.0);
  cfg.task.sigma_n = r.take_double("task.sigma_n", 0.03);
  if (r.has("task.mask")) {
    cfg.task.mask = parse_int_list(r.require("task.mask"), "task.mask");
  }
  cfg.task.matrix_file = r.take("task.matrix_file", "");

  // Solver.
  const std::string solver_name = r.take("solver.name", "flowdps");
  if (solver_name == "flowdps") {
    cfg.solver.name = SolverSpec::Name::flowdps;
  } else if (solver_name == "dps_velocity") {
    cfg.solver.name = SolverSpec::Name::dps_velocity;
  } else if (solver_name == "flowchef") {
    cfg.solver.name = SolverSpec::Name::flowchef;
  } else if (solver_name == "oracle") {
    cfg.solver.name = SolverSpec::Name::oracle;
  } else if (solver_name == "unconditional") {
    cfg.solver.name = SolverSpec::Name::unconditional;
  } else {
    throw ConfigError("solver.name: unknown solver '" + solver_name + "'");
  }
  cfg.solver.config.nfe = static_cast<int>(r.take_int("solver.nfe", 28));
  if (cfg.solver.config.nfe < 1) {
    throw ConfigError("solver.nfe must be >= 1");
  }
  cfg.solver.config.shift = r.take_double("solver.shift", 4.0);
  cfg.solver.config.gamma = parse_gamma(r.take("solver.gamma", "sigma_t"));
  cfg.solver.config.eta = parse_eta(r.take("solver.eta", "flowdps"));
  cfg.solver.config.dc = parse_dc(r.take("solver.dc", "gd:3:15"));
  cfg.solver.config.guidance_lambda =
      r.take_double("solver.guidance_lambda", 1.0);
  cfg.solver.config.condition =
      static_cast<int>(r.take_int("solver.condition", -1));
  const std::string zeta_name = r.take("solver.zeta", "paper");
  if (zeta_name == "paper") {
    cfg.solver.config.zeta_convention = ZetaConvention::paper;
  } else if (zeta_name == "derivation") {
    cfg.solver.config.zeta_convention = ZetaConvention::derivation;
  } else {
    throw ConfigError("solver.zeta: expected paper or derivation, got '" +
                      zeta_name + "'");
  }
  cfg.solver.config.chef_step = r.take_double("solver.chef_step", 1.0);

  // Training.
  cfg.train.config.steps = static_cast<int>(r.take_int("train.steps", 5000));
  cfg.train.config.batch_size =
      static_cast<int>(r.take_int("train.batch", 256));
  cfg.train.config.learning_rate = r.take_double("train.lr", 5e-4);
  cfg.train.config.warmup_steps =
      static_cast<int>(r.take_int("train.warmup", 1500));
  const std::string decay = r.take("train.decay", "cosine");
  if (decay == "cosine") {
    cfg.train.config.cosine_decay = true;
  } else if (decay == "none") {
    cfg.train.config.cosine_decay = false;
  } else {
    throw ConfigError("train.decay: expected cosine or none, got '" + decay +
                      "'");
  }
  cfg.train.mlp.dim = cfg.prior.dim();
  cfg.train.mlp.hidden_width =
      static_cast<int>(r.take_int("train.hidden_width", 128));
  cfg.train.mlp.hidden_layers =
      static_cast<int>(r.take_int("train.hidden_layers", 3));
  cfg.train.mlp.freqs = static_cast<int>(r.take_int("train.freqs", 8));
  cfg.train.mlp.output_bias = r.take_bool("train.output_bias", true);
  cfg.train.model_out = r.take("train.out", "model.bin");

  // Run.
  cfg.run.seed = r.take_u64("run.seed", 0);
  cfg.run.runs = static_cast<int>(r.take_int("run.runs", 1));
  if (cfg.run.runs < 1) {
    throw ConfigError("run.runs must be >= 1");
  }
  cfg.run.samples = static_cast<int>(r.take_int("run.samples", 1000));
  cfg.run.out_dir = r.take("run.out_dir", "out");
  cfg.run.write_images = r.take_bool("run.write_images", true);

  r.finish();
  return cfg;
}

KvMap ExperimentConfig::snapshot() const {
  KvMap kv;
  if (!prior_name.empty()) {
    kv["prior.name"] = prior_name;
  } else {
    const int k = prior.components();
    const int d = prior.dim();
    kv["prior.components"] = std::to_string(k);
    kv["prior.dim"] = std::to_string(d);
    for (int i = 0; i < k; ++i) {
      const std::string suffix = "." + std::to_string(i);
      kv["prior.weight" + suffix] = format_double(prior.weights(i));
      kv["prior.mean" + suffix] =
          join_doubles(prior.means[static_cast<std::size_t>(i)]);
      kv["prior.cov" + suffix] =
          join_matrix_rowmajor(prior.covs[static_cast<std::size_t>(i)]);
    }
  }

  kv["task.kind"] = task.name();
  kv["task.factor"] = std::to_string(task.factor);
  kv["task.kernel_size"] = std::to_string(task.kernel_size);
  kv["task.kernel_std"] = format_double(task.kernel_std);
  kv["task.sigma_n"] = format_double(task.sigma_n);
  if (!task.mask.empty()) {
    std::string m;
    for (std::size_t i = 0; i < task.mask.size(); ++i) {
      if (i > 0) {
        m += ' ';
      }
      m += std::to_string(task.mask[i]);
    }
    kv["task.mask"] = m;
  }
  if (!task.matrix_file.empty()) {
    kv["task.matrix_file"] = task.matrix_file;
  }

  kv["solver.name"] = solver.name_string();
  kv["solver.nfe"] = std::to_string(solver.config.nfe);
  kv["solver.shift"] = format_double(solver.config.shift);
  kv["solver.gamma"] = gamma_string(solver.config.gamma);
  kv["solver.eta"] = eta_string(solver.config.eta);
  kv["solver.dc"] = dc_string(solver.config.dc);
  kv["solver.guidance_lambda"] = format_double(solver.config.guidance_lambda);
  kv["solver.condition"] = std::to_string(solver.config.condition);
  kv["solver.zeta"] =
      solver.config.zeta_convention == ZetaConvention::paper ? "paper"
                                                             : "derivation";
  kv["solver.chef_step"] = format_double(solver.config.chef_step);

  kv["train.steps"] = std::to_string(train.config.steps);
  kv["train.batch"] = std::to_string(train.config.batch_size);
  kv["train.lr"] = format_double(train.config.learning_rate);
  kv["train.warmup"] = std::to_string(train.config.warmup_steps);
  kv["train.decay"] = train.config.cosine_decay ? "cosine" : "none";
  kv["train.hidden_width"] = std::to_string(train.mlp.hidden_width);
  kv["train.hidden_layers"] = std::to_string(train.mlp.hidden_layers);
  kv["train.freqs"] = std::to_string(train.mlp.freqs);
  kv["train.output_bias"] = train.mlp.output_bias ? "true" : "false";
  kv["train.out"] = train.model_out;

  kv["run.seed"] = std::to_string(run.seed);
  kv["run.runs"] = std::to_string(run.runs);
  kv["run.samples"] = std::to_string(run.samples);
  kv["run.out_dir"] = run.out_dir;
  kv["run.write_images"] = run.write_images ? "true" : "false";
  return kv;
}

}  // namespace flowps
