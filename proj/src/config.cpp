#include "fedcomp/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "fedcomp/error.hpp"

namespace fedcomp {

using nlohmann::json;

const char* to_string(Task t) { return t == Task::anomaly ? "anomaly" : "imputation"; }
const char* to_string(ThresholdScope s) { return s == ThresholdScope::global ? "global" : "per-client"; }
const char* to_string(LambdaSchedule s) { return s == LambdaSchedule::ramp ? "ramp" : "constant"; }

namespace {

using Errors = std::vector<std::string>;

bool read_value(const json& v, double& out) {
  if (!v.is_number()) return false;
  out = v.get<double>();
  return true;
}
bool read_value(const json& v, int& out) {
  if (!v.is_number_integer()) return false;
  const auto x = v.get<std::int64_t>();
  if (x < INT32_MIN || x > INT32_MAX) return false;
  out = static_cast<int>(x);
  return true;
}
bool read_value(const json& v, std::uint64_t& out) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    return false;
  }
  out = v.get<std::uint64_t>();
  return true;
}
static_assert(std::is_same_v<std::size_t, std::uint64_t>, "feature indices are read as uint64");
bool read_value(const json& v, bool& out) {
  if (!v.is_boolean()) return false;
  out = v.get<bool>();
  return true;
}
bool read_value(const json& v, std::string& out) {
  if (!v.is_string()) return false;
  out = v.get<std::string>();
  return true;
}
template <class T>
bool read_value(const json& v, std::vector<T>& out) {
  if (!v.is_array()) return false;
  std::vector<T> tmp;
  for (const auto& e : v) {
    T x{};
    if (!read_value(e, x)) return false;
    tmp.push_back(std::move(x));
  }
  out = std::move(tmp);
  return true;
}

template <class T>
constexpr const char* type_name() {
  if constexpr (std::is_same_v<T, double>) return "a number";
  else if constexpr (std::is_same_v<T, int>) return "an integer";
  else if constexpr (std::is_same_v<T, std::uint64_t>) return "a nonnegative integer";
  else if constexpr (std::is_same_v<T, bool>) return "a boolean";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else return "an array";
}

class ObjectReader {
 public:
  ObjectReader(const json* j, std::string path, Errors& errs) : j_(j), path_(std::move(path)), errs_(&errs) {
    if (j_ && !j_->is_object()) {
      errs_->push_back(path_ + " must be an object");
      j_ = nullptr;
    }
  }

  bool present() const { return j_ != nullptr; }
  bool has(const std::string& key) const { return j_ && j_->contains(key); }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    if (!read_value((*j_)[key], out)) errs_->push_back(field(key) + " must be " + type_name<T>());
  }

  ObjectReader child(const std::string& key) {
    seen_.insert(key);
    return ObjectReader(has(key) ? &(*j_)[key] : nullptr, field(key), *errs_);
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    return has(key) ? &(*j_)[key] : nullptr;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items()) {
      if (!seen_.count(k)) errs_->push_back("unknown key " + field(k));
    }
  }

 private:
  const json* j_;
  std::string path_;
  Errors* errs_;
  std::set<std::string> seen_;
};

void read_synthetic(ObjectReader r, SyntheticSpec& s, Errors& errs) {
  r.get("features", s.features);
  r.get("steps", s.steps);
  r.get("frequencies", s.frequencies);
  r.get("weights", s.weights);
  r.get("scale_min", s.scale_min);
  r.get("scale_max", s.scale_max);
  r.get("phase_jitter", s.phase_jitter);
  r.get("offset", s.offset);
  r.get("noise_std", s.noise_std);
  r.get("seed", s.seed);
  if (const json* comps = r.raw("components")) {
    const auto path = r.field("components");
    if (!comps->is_array()) {
      errs.push_back(path + " must be an array of arrays");
    } else {
      s.components.clear();
      for (std::size_t d = 0; d < comps->size(); ++d) {
        const auto& feat = (*comps)[d];
        const auto fpath = path + "[" + std::to_string(d) + "]";
        if (!feat.is_array()) {
          errs.push_back(fpath + " must be an array");
          continue;
        }
        std::vector<SinusoidComponent> list;
        for (std::size_t k = 0; k < feat.size(); ++k) {
          ObjectReader cr(&feat[k], fpath + "[" + std::to_string(k) + "]", errs);
          SinusoidComponent c;
          cr.get("frequency", c.frequency);
          cr.get("amplitude", c.amplitude);
          cr.get("phase", c.phase);
          cr.finish();
          list.push_back(c);
        }
        s.components.push_back(std::move(list));
      }
    }
  }
  r.finish();
}

void require(Errors& v, bool ok, const std::string& msg) {
  if (!ok) v.push_back(msg);
}

}  // namespace

std::vector<std::string> validate(const ExperimentConfig& c) {
  Errors v;
  const int sources = (c.synthetic ? 1 : 0) + (c.csv ? 1 : 0);
  require(v, sources == 1, "dataset must name exactly one source (synthetic or csv)");
  if (c.synthetic) {
    auto sv = c.synthetic->violations("dataset.synthetic");
    v.insert(v.end(), sv.begin(), sv.end());
    require(v, c.synthetic->steps >= c.window, "dataset.synthetic.steps must be >= window");
  }
  if (c.csv) require(v, !c.csv->path.empty(), "dataset.csv.path must not be empty");
  require(v, c.scheme == "centralized" || c.scheme == "multivariate" || c.scheme == "univariate",
          "scheme.name must be one of centralized, multivariate, univariate");
  require(v, c.clients >= 1, "scheme.clients must be >= 1");
  require(v, c.window >= 1, "window (w) must be >= 1");
  require(v, !c.layers.sizes.empty(), "layers must list at least one hidden width");
  for (std::size_t i = 0; i < c.layers.sizes.size(); ++i) {
    require(v, c.layers.sizes[i] >= 1, "layers[" + std::to_string(i) + "] must be >= 1");
  }
  require(v, c.schedule.compression_rounds >= 1, "schedule.compression_rounds must be >= 1");
  require(v, c.schedule.finetune_rounds >= 0, "schedule.finetune_rounds must be >= 0");
  require(v, c.schedule.compression_rate_target >= 0.0 && c.schedule.compression_rate_target <= 1.0,
          "schedule.compression_rate_target must lie in [0, 1]");
  const auto& f = c.compression.fusion;
  require(v, f.lambda >= 0.0 && std::isfinite(f.lambda), "fusion.lambda must be >= 0");
  require(v, f.penalty > 0.0 && std::isfinite(f.penalty), "fusion.penalty must be > 0");
  require(v, f.max_iters >= 1, "fusion.max_iters must be >= 1");
  require(v, f.tol > 0.0, "fusion.tol must be > 0");
  require(v, c.compression.zero_tol >= 0.0, "fusion.zero_tol must be >= 0");
  require(v, c.compression.ramp_rounds >= 0, "fusion.lambda_ramp_rounds must be >= 0");
  const auto& t = c.training;
  require(v, t.mu >= 0.0, "training.mu must be >= 0");
  require(v, t.epochs >= 1, "training.epochs must be >= 1");
  require(v, t.learning_rate > 0.0, "training.learning_rate must be > 0");
  require(v, t.batch_size >= 1, "training.batch_size must be >= 1");
  require(v, t.prox_factor == 1.0 || t.prox_factor == 2.0, "training.prox_factor must be 1 or 2");
  const auto& k = c.task;
  require(v, k.missing_rate >= 0.0 && k.missing_rate <= 1.0, "task.missing_rate must lie in [0, 1]");
  require(v, k.anomaly_rate >= 0.0 && k.anomaly_rate <= 1.0, "task.anomaly_rate must lie in [0, 1]");
  require(v, k.anomaly_factor > 1.0, "task.anomaly_factor must be > 1");
  require(v, std::isfinite(k.c), "task.c must be finite");
  for (double x : k.c_grid) require(v, std::isfinite(x), "task.c_grid entries must be finite");
  require(v, c.split.train > 0.0 && c.split.validation > 0.0 && c.split.test > 0.0 &&
                 std::abs(c.split.train + c.split.validation + c.split.test - 1.0) < 1e-9,
          "split fractions must be positive and sum to 1");
  require(v, !c.output_dir.empty(), "output_dir must not be empty");
  require(v, c.threads >= 0, "threads must be >= 0");
  return v;
}

ExperimentConfig parse_config(const json& j) {
  Errors errs;
  ExperimentConfig c;
  ObjectReader root(&j, "", errs);

  {
    auto ds = root.child("dataset");
    if (!ds.present()) errs.push_back("dataset is required");
    if (ds.has("synthetic")) {
      c.synthetic = SyntheticSpec{};
      read_synthetic(ds.child("synthetic"), *c.synthetic, errs);
    }
    if (ds.has("csv")) {
      c.csv = CsvSource{};
      auto r = ds.child("csv");
      r.get("path", c.csv->path);
      std::string delim(1, c.csv->delimiter);
      r.get("delimiter", delim);
      if (delim.size() != 1) errs.push_back("dataset.csv.delimiter must be a single character");
      else c.csv->delimiter = delim[0];
      r.get("header", c.csv->header);
      r.get("features", c.csv->features);
      r.finish();
    }
    ds.finish();
  }
  {
    auto r = root.child("scheme");
    r.get("name", c.scheme);
    r.get("clients", c.clients);
    r.finish();
  }
  root.get("window", c.window);
  root.get("layers", c.layers.sizes);
  {
    auto r = root.child("schedule");
    r.get("compression_rounds", c.schedule.compression_rounds);
    r.get("finetune_rounds", c.schedule.finetune_rounds);
    r.get("compression_rate_target", c.schedule.compression_rate_target);
    r.finish();
  }
  {
    auto r = root.child("fusion");
    r.get("lambda", c.compression.fusion.lambda);
    r.get("penalty", c.compression.fusion.penalty);
    r.get("max_iters", c.compression.fusion.max_iters);
    r.get("tol", c.compression.fusion.tol);
    r.get("zero_tol", c.compression.zero_tol);
    r.get("lambda_ramp_rounds", c.compression.ramp_rounds);
    std::string sched = to_string(c.compression.schedule);
    r.get("lambda_schedule", sched);
    if (sched == "constant") c.compression.schedule = LambdaSchedule::constant;
    else if (sched == "ramp") c.compression.schedule = LambdaSchedule::ramp;
    else errs.push_back("fusion.lambda_schedule must be constant or ramp");
    r.finish();
  }
  {
    auto r = root.child("training");
    r.get("mu", c.training.mu);
    r.get("epochs", c.training.epochs);
    r.get("learning_rate", c.training.learning_rate);
    r.get("batch_size", c.training.batch_size);
    r.get("prox_factor", c.training.prox_factor);
    r.finish();
  }
  {
    auto r = root.child("task");
    std::string kind = to_string(c.task.kind);
    r.get("kind", kind);
    if (kind == "imputation") c.task.kind = Task::imputation;
    else if (kind == "anomaly") c.task.kind = Task::anomaly;
    else errs.push_back("task.kind must be imputation or anomaly");
    r.get("missing_rate", c.task.missing_rate);
    r.get("anomaly_rate", c.task.anomaly_rate);
    r.get("anomaly_factor", c.task.anomaly_factor);
    r.get("c", c.task.c);
    r.get("c_grid", c.task.c_grid);
    std::string scope = to_string(c.task.scope);
    r.get("threshold_scope", scope);
    if (scope == "per-client") c.task.scope = ThresholdScope::per_client;
    else if (scope == "global") c.task.scope = ThresholdScope::global;
    else errs.push_back("task.threshold_scope must be per-client or global");
    r.finish();
  }
  {
    auto r = root.child("split");
    r.get("train", c.split.train);
    r.get("validation", c.split.validation);
    r.get("test", c.split.test);
    r.finish();
  }
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.get("threads", c.threads);
  root.get("compare_uncompressed", c.compare_uncompressed);
  root.finish();

  if (errs.empty()) errs = validate(c);
  else {
    auto more = validate(c);
    for (auto& m : more) errs.push_back(std::move(m));
  }
  if (!errs.empty()) throw ValidationError(std::move(errs));
  return c;
}

ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError({"config is not valid JSON: " + std::string(e.what())});
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  if (c.synthetic) {
    const auto& s = *c.synthetic;
    json sj = {{"features", s.features},   {"steps", s.steps},         {"frequencies", s.frequencies},
               {"weights", s.weights},     {"scale_min", s.scale_min}, {"scale_max", s.scale_max},
               {"phase_jitter", s.phase_jitter}, {"offset", s.offset}, {"noise_std", s.noise_std},
               {"seed", s.seed}};
    if (!s.components.empty()) {
      json comps = json::array();
      for (const auto& feat : s.components) {
        json fj = json::array();
        for (const auto& comp : feat) {
          fj.push_back({{"frequency", comp.frequency}, {"amplitude", comp.amplitude}, {"phase", comp.phase}});
        }
        comps.push_back(std::move(fj));
      }
      sj["components"] = std::move(comps);
    }
    j["dataset"]["synthetic"] = std::move(sj);
  }
  if (c.csv) {
    j["dataset"]["csv"] = {{"path", c.csv->path},
                           {"delimiter", std::string(1, c.csv->delimiter)},
                           {"header", c.csv->header},
                           {"features", c.csv->features}};
  }
  j["scheme"] = {{"name", c.scheme}, {"clients", c.clients}};
  j["window"] = c.window;
  j["layers"] = c.layers.sizes;
  j["schedule"] = {{"compression_rounds", c.schedule.compression_rounds},
                   {"finetune_rounds", c.schedule.finetune_rounds},
                   {"compression_rate_target", c.schedule.compression_rate_target}};
  j["fusion"] = {{"lambda", c.compression.fusion.lambda},
                 {"penalty", c.compression.fusion.penalty},
                 {"max_iters", c.compression.fusion.max_iters},
                 {"tol", c.compression.fusion.tol},
                 {"zero_tol", c.compression.zero_tol},
                 {"lambda_schedule", to_string(c.compression.schedule)},
                 {"lambda_ramp_rounds", c.compression.ramp_rounds}};
  j["training"] = {{"mu", c.training.mu},
                   {"epochs", c.training.epochs},
                   {"learning_rate", c.training.learning_rate},
                   {"batch_size", c.training.batch_size},
                   {"prox_factor", c.training.prox_factor}};
  j["task"] = {{"kind", to_string(c.task.kind)},
               {"missing_rate", c.task.missing_rate},
               {"anomaly_rate", c.task.anomaly_rate},
               {"anomaly_factor", c.task.anomaly_factor},
               {"c", c.task.c},
               {"c_grid", c.task.c_grid},
               {"threshold_scope", to_string(c.task.scope)}};
  j["split"] = {{"train", c.split.train}, {"validation", c.split.validation}, {"test", c.split.test}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["compare_uncompressed"] = c.compare_uncompressed;
  return j;
}

}  // namespace fedcomp
