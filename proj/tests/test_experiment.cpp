#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fedcomp/experiment.hpp"
#include "fedcomp/rng.hpp"

using namespace fedcomp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fedcomp_test_" + name);
  fs::remove_all(p);
  return p;
}

json small_config(const fs::path& out) {
  json j = json::parse(R"({
    "dataset": {"synthetic": {"features": 3, "steps": 400, "seed": 4}},
    "scheme": {"name": "univariate"},
    "window": 10,
    "layers": [8, 4, 8],
    "schedule": {"compression_rounds": 3, "finetune_rounds": 2},
    "fusion": {"lambda": 0.05},
    "training": {"epochs": 1, "learning_rate": 0.05, "batch_size": 16},
    "task": {"kind": "imputation", "missing_rate": 0.3},
    "seed": 9
  })");
  j["output_dir"] = out.string();
  return j;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(FEDCOMP_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("client counts follow the scheme") {
  auto j = small_config(scratch("scheme"));
  CHECK(prepare_data(parse_config(j)).clients.size() == 3);
  j["scheme"] = {{"name", "centralized"}};
  CHECK(prepare_data(parse_config(j)).clients.size() == 1);
  j["scheme"] = {{"name", "multivariate"}, {"clients", 2}};
  CHECK(prepare_data(parse_config(j)).clients.size() == 2);
}

TEST_CASE("a single client with lambda 0 reduces to plain local training") {
  auto j = small_config(scratch("central"));
  j["scheme"] = {{"name", "centralized"}};
  j["fusion"] = {{"lambda", 0.0}};
  const auto cfg = parse_config(j);
  auto data = prepare_data(cfg);
  const auto dataset = data.clients[0];
  const auto topo = make_topology(cfg, std::move(data.clients));
  const auto init = init_model(topo.input_dim(), cfg.layers, 1);
  const auto fused = run_compression_stage(topo, cfg.schedule, cfg.compression, init, 5).global;

  ParameterVector plain = init;
  for (int r = 1; r <= cfg.schedule.compression_rounds; ++r) {
    plain = local_train(plain, dataset, plain, cfg.training, nullptr, client_seed(5, 0, Stage::compression, r)).model;
  }
  CHECK((fused.flat() - plain.flat()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("full run produces a consistent report") {
  const auto out = scratch("run");
  auto cfg = parse_config(small_config(out));
  cfg.compare_uncompressed = true;
  const auto r = run_experiment(cfg);
  CHECK(r.n_clients == 3);
  CHECK(r.input_dim == 10);
  CHECK(r.compressed.rounds.size() == 5);
  REQUIRE(r.baseline.has_value());
  CHECK(r.baseline->lambda == 0.0);
  REQUIRE(r.compressed.rmse.has_value());
  CHECK(*r.compressed.rmse > 0.0);
  CHECK(r.compressed.compression_rate ==
        doctest::Approx(1.0 - static_cast<double>(r.compressed.nonzeros) / static_cast<double>(r.compressed.parameters)));
  CHECK(r.config == to_json(cfg));
  CHECK(ParameterVector::load(out / "model.bin").size() == r.compressed.parameters);
  CHECK(fs::exists(out / "model_baseline.bin"));
}

TEST_CASE("identical configs give byte-identical deterministic files") {
  const auto out = scratch("det");
  const auto cfg = parse_config(small_config(out));
  const char* files[] = {"report.json", "rounds.csv", "summary.txt"};
  emit_report(run_experiment(cfg), out);
  std::vector<std::string> first;
  for (const char* f : files) first.push_back(slurp(out / f));
  const auto first_model = slurp(out / "model.bin");
  emit_report(run_experiment(cfg), out);
  for (std::size_t i = 0; i < 3; ++i) CHECK(slurp(out / files[i]) == first[i]);
  CHECK(slurp(out / "model.bin") == first_model);

  auto other = cfg;
  other.seed = 10;
  CHECK(to_json(run_experiment(other)) != to_json(load_report(out)));
}

TEST_CASE("interrupted runs resume to the same result") {
  const auto ref_dir = scratch("resume_ref");
  const auto ref = run_experiment(parse_config(small_config(ref_dir)));
  for (int stop : {2, 4}) {
    CAPTURE(stop);
    const auto dir = scratch("resume_" + std::to_string(stop));
    auto cfg = parse_config(small_config(dir));
    RunOptions opts;
    opts.stop_after_rounds = stop;
    CHECK_THROWS_AS(run_experiment(cfg, opts), Interrupted);
    opts.stop_after_rounds = 0;
    opts.resume = true;
    auto resumed = run_experiment(cfg, opts);
    CHECK(resumed.compressed == ref.compressed);
  }
}

TEST_CASE("the compression-rate gate decides whether fine-tuning runs") {
  auto j = small_config(scratch("gate"));
  j["schedule"]["compression_rate_target"] = 1.0;
  const auto skipped = run_experiment(parse_config(j));
  CHECK_FALSE(skipped.compressed.finetune_ran);
  CHECK(skipped.compressed.rounds.size() == 3);
  j["schedule"]["compression_rate_target"] = 0.0;
  const auto ran = run_experiment(parse_config(j));
  CHECK(ran.compressed.finetune_ran);
  CHECK(ran.compressed.rounds.size() == 5);
}

TEST_CASE("anomaly task reports detection metrics and the chosen sensitivity") {
  auto j = small_config(scratch("anomaly"));
  j["task"] = {{"kind", "anomaly"}, {"anomaly_rate", 0.05}, {"c_grid", {0.5, 1.0, 2.0, 4.0}}};
  const auto r = run_experiment(parse_config(j));
  REQUIRE(r.compressed.detection.has_value());
  REQUIRE(r.compressed.sensitivity.has_value());
  CHECK(std::find(j["task"]["c_grid"].begin(), j["task"]["c_grid"].end(), *r.compressed.sensitivity) !=
        j["task"]["c_grid"].end());
  const auto& d = *r.compressed.detection;
  CHECK(d.tp + d.fn > 0);
  CHECK_FALSE(r.compressed.rmse.has_value());
  j["task"]["threshold_scope"] = "global";
  CHECK(run_experiment(parse_config(j)).compressed.detection.has_value());
}

TEST_CASE("command line interface") {
  const auto dir = scratch("cli");
  fs::create_directories(dir);
  const auto cfg_path = dir / "exp.json";
  std::ofstream(cfg_path) << small_config(dir / "out").dump();

  CHECK(run_cli("run --config " + cfg_path.string() + " --threads 1") == 0);
  CHECK(fs::exists(dir / "out" / "report.json"));
  CHECK(fs::exists(dir / "out" / "rounds.csv"));
  CHECK(slurp(dir / "out" / "summary.txt").find("Compress. rate") != std::string::npos);

  CHECK(run_cli("run --config " + cfg_path.string() + " --seed 3 --out " + (dir / "seeded").string()) == 0);
  CHECK(load_report(dir / "seeded").config["seed"] == 3);

  CHECK(run_cli("eval --config " + cfg_path.string() + " --model " + (dir / "out" / "model.bin").string() +
                " --out " + (dir / "eval").string()) == 0);
  CHECK(fs::exists(dir / "eval" / "eval.json"));

  SUBCASE("fuse") {
    const auto a = init_model(5, {{3}}, 1), b = init_model(5, {{3}}, 2);
    a.save(dir / "a.bin");
    b.save(dir / "b.bin");
    const std::string models = " --models " + (dir / "a.bin").string() + " " + (dir / "b.bin").string();
    CHECK(run_cli("fuse" + models + " --rule closed-form --lambda 0.2 --out " + (dir / "cf.bin").string()) == 0);
    CHECK(run_cli("fuse" + models + " --rule admm --lambda 0.2 --out " + (dir / "admm.bin").string()) == 0);
    const auto cf = ParameterVector::load(dir / "cf.bin");
    CHECK(cf == closed_form_sparse_fuse(std::vector{a, b}, 0.2));
    CHECK((ParameterVector::load(dir / "admm.bin").flat() - cf.flat()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(run_cli("fuse" + models + " --rule masked --mask-from " + (dir / "cf.bin").string() + " --out " +
                  (dir / "m.bin").string()) == 0);
    CHECK(ParameterVector::load(dir / "m.bin") == masked_average_fuse(std::vector{a, b}, extract_mask(cf)));
    CHECK(run_cli("fuse" + models + " --rule masked --out " + (dir / "m2.bin").string()) == 1);
  }
  SUBCASE("gen") {
    CHECK(run_cli("gen --config " + cfg_path.string() + " --header --out " + (dir / "data.csv").string()) == 0);
    const auto ts = load_csv(dir / "data.csv", {',', true});
    CHECK(ts.features() == 3);
    CHECK(ts.steps() == 400);
  }
  SUBCASE("exit codes") {
    auto bad = small_config(dir / "bad");
    bad["window"] = 0;
    bad["training"]["batch_size"] = 0;
    std::ofstream(dir / "bad.json") << bad.dump();
    CHECK(run_cli("run --config " + (dir / "bad.json").string()) == 1);
    CHECK(run_cli("run") == 1);
    CHECK(run_cli("bogus") == 1);

    auto missing = small_config(dir / "missing");
    missing["dataset"] = {{"csv", {{"path", (dir / "nope.csv").string()}}}};
    std::ofstream(dir / "missing.json") << missing.dump();
    CHECK(run_cli("run --config " + (dir / "missing.json").string()) == 2);
  }
}
