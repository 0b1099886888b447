#include "fedcomp/report.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "fedcomp/error.hpp"

namespace fedcomp {

using nlohmann::json;

namespace {

std::string num(double x) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, end);
}

Stage stage_from(const std::string& s) {
  if (s == "compression") return Stage::compression;
  if (s == "finetune") return Stage::finetune;
  throw Error("unknown stage '" + s + "'");
}

json variant_to_json(const VariantResult& v) {
  json j;
  j["name"] = v.name;
  j["lambda"] = v.lambda;
  j["finetune_ran"] = v.finetune_ran;
  j["parameters"] = v.parameters;
  j["nonzeros"] = v.nonzeros;
  j["compression_rate"] = v.compression_rate;
  if (v.detection) {
    const auto& d = *v.detection;
    j["detection"] = {{"tp", d.tp},
                      {"fp", d.fp},
                      {"tn", d.tn},
                      {"fn", d.fn},
                      {"precision", d.precision()},
                      {"recall", d.recall()},
                      {"accuracy", d.accuracy()}};
  }
  if (v.sensitivity) j["sensitivity"] = *v.sensitivity;
  if (v.rmse) j["rmse"] = *v.rmse;
  j["rounds"] = json::array();
  for (const auto& r : v.rounds) j["rounds"].push_back(to_json(r));
  return j;
}

VariantResult variant_from_json(const json& j) {
  VariantResult v;
  v.name = j.at("name").get<std::string>();
  v.lambda = j.at("lambda").get<double>();
  v.finetune_ran = j.at("finetune_ran").get<bool>();
  v.parameters = j.at("parameters").get<Eigen::Index>();
  v.nonzeros = j.at("nonzeros").get<Eigen::Index>();
  v.compression_rate = j.at("compression_rate").get<double>();
  if (j.contains("detection")) {
    const auto& d = j["detection"];
    v.detection = DetectionMetrics{d.at("tp").get<std::int64_t>(), d.at("fp").get<std::int64_t>(),
                                   d.at("tn").get<std::int64_t>(), d.at("fn").get<std::int64_t>()};
  }
  if (j.contains("sensitivity")) v.sensitivity = j["sensitivity"].get<double>();
  if (j.contains("rmse")) v.rmse = j["rmse"].get<double>();
  for (const auto& r : j.at("rounds")) v.rounds.push_back(round_record_from_json(r));
  return v;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot open '" + p.string() + "' for writing");
  out << content;
  if (!out) throw Error("I/O failure while writing '" + p.string() + "'");
}

json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("cannot open '" + p.string() + "'");
  return json::parse(in);
}

}  // namespace

json to_json(const RoundRecord& r) {
  return {{"round", r.round},
          {"stage", to_string(r.stage)},
          {"compression_rate", r.compression_rate},
          {"nonzeros", r.nonzeros},
          {"client_loss", r.client_loss},
          {"validation_loss", r.validation_loss},
          {"fusion_iterations", r.fusion_iterations},
          {"fusion_converged", r.fusion_converged}};
}

RoundRecord round_record_from_json(const json& j) {
  RoundRecord r;
  r.round = j.at("round").get<int>();
  r.stage = stage_from(j.at("stage").get<std::string>());
  r.compression_rate = j.at("compression_rate").get<double>();
  r.nonzeros = j.at("nonzeros").get<Eigen::Index>();
  r.client_loss = j.at("client_loss").get<std::vector<double>>();
  r.validation_loss = j.at("validation_loss").get<double>();
  r.fusion_iterations = j.at("fusion_iterations").get<int>();
  r.fusion_converged = j.at("fusion_converged").get<bool>();
  return r;
}

json to_json(const ExperimentReport& r) {
  json j;
  j["config"] = r.config;
  j["task"] = r.task;
  j["scheme"] = r.scheme;
  j["clients"] = r.n_clients;
  j["input_dim"] = r.input_dim;
  j["metric_convention"] = r.metric_convention;
  j["compressed"] = variant_to_json(r.compressed);
  if (r.baseline) j["baseline"] = variant_to_json(*r.baseline);
  return j;
}

json timings_to_json(const Timings& t) {
  return {{"data_seconds", t.data_seconds},
          {"compression_seconds", t.compression_seconds},
          {"finetune_seconds", t.finetune_seconds},
          {"evaluation_seconds", t.evaluation_seconds},
          {"total_seconds", t.total_seconds}};
}

ExperimentReport report_from_json(const json& j, const json& timings) {
  ExperimentReport r;
  r.config = j.at("config");
  r.task = j.at("task").get<std::string>();
  r.scheme = j.at("scheme").get<std::string>();
  r.n_clients = j.at("clients").get<int>();
  r.input_dim = j.at("input_dim").get<Eigen::Index>();
  r.metric_convention = j.at("metric_convention").get<std::string>();
  r.compressed = variant_from_json(j.at("compressed"));
  if (j.contains("baseline")) r.baseline = variant_from_json(j["baseline"]);
  if (!timings.is_null()) {
    r.timings.data_seconds = timings.at("data_seconds").get<double>();
    r.timings.compression_seconds = timings.at("compression_seconds").get<double>();
    r.timings.finetune_seconds = timings.at("finetune_seconds").get<double>();
    r.timings.evaluation_seconds = timings.at("evaluation_seconds").get<double>();
    r.timings.total_seconds = timings.at("total_seconds").get<double>();
  }
  return r;
}

std::string rounds_csv(const VariantResult& v) {
  std::ostringstream os;
  os << "stage,round,compression_rate,nonzeros,validation_loss,mean_client_loss,fusion_iterations,fusion_converged\n";
  for (const auto& r : v.rounds) {
    double mean = 0.0;
    for (double l : r.client_loss) mean += l;
    if (!r.client_loss.empty()) mean /= static_cast<double>(r.client_loss.size());
    os << to_string(r.stage) << ',' << r.round << ',' << num(r.compression_rate) << ',' << r.nonzeros << ','
       << num(r.validation_loss) << ',' << num(mean) << ',' << r.fusion_iterations << ','
       << (r.fusion_converged ? 1 : 0) << '\n';
  }
  return os.str();
}

std::string summary_table(const ExperimentReport& r) {
  const bool anomaly = r.task == "anomaly";
  std::vector<std::string> header{"Method"};
  if (anomaly) {
    header.insert(header.end(), {"Recall", "Prec", "Acc"});
  } else {
    header.push_back("RMSE");
  }
  header.insert(header.end(), {"No. Para.", "Compress. rate"});

  auto fixed = [](double x, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << x;
    return os.str();
  };
  std::vector<std::vector<std::string>> rows{header};
  auto add = [&](const VariantResult& v) {
    std::vector<std::string> row{"FL-" + r.scheme + (v.name == "compressed" ? " compressed" : "")};
    if (anomaly) {
      const auto d = v.detection.value_or(DetectionMetrics{});
      row.insert(row.end(), {fixed(d.recall(), 4), fixed(d.precision(), 4), fixed(d.accuracy(), 4)});
    } else {
      row.push_back(v.rmse ? fixed(*v.rmse, 4) : "-");
    }
    row.push_back(std::to_string(v.nonzeros) + " / " + std::to_string(v.parameters));
    row.push_back(fixed(100.0 * v.compression_rate, 2) + "%");
    rows.push_back(std::move(row));
  };
  if (r.baseline) add(*r.baseline);
  add(r.compressed);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  os << "task: " << r.task << " (" << r.metric_convention << " metrics), scheme: " << r.scheme
     << ", clients: " << r.n_clients << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t c = 0; c < rows[i].size(); ++c) {
      os << (c ? " | " : "") << std::left << std::setw(static_cast<int>(width[c])) << rows[i][c];
    }
    os << "\n";
    if (i == 0) {
      for (std::size_t c = 0; c < width.size(); ++c) os << (c ? "-+-" : "") << std::string(width[c], '-');
      os << "\n";
    }
  }
  return os.str();
}

ReportFiles emit_report(const ExperimentReport& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory '" + dir.string() + "': " + ec.message());
  ReportFiles files;
  files.report_json = dir / "report.json";
  files.rounds_csv = dir / "rounds.csv";
  files.summary_txt = dir / "summary.txt";
  files.timings_json = dir / "timings.json";
  write_file(files.report_json, to_json(r).dump(2) + "\n");
  write_file(files.rounds_csv, rounds_csv(r.compressed));
  if (r.baseline) {
    files.baseline_rounds_csv = dir / "rounds_baseline.csv";
    write_file(files.baseline_rounds_csv, rounds_csv(*r.baseline));
  }
  write_file(files.summary_txt, summary_table(r));
  write_file(files.timings_json, timings_to_json(r.timings).dump(2) + "\n");
  return files;
}

ExperimentReport load_report(const std::filesystem::path& dir) {
  const auto timings = std::filesystem::exists(dir / "timings.json") ? read_json(dir / "timings.json") : json();
  return report_from_json(read_json(dir / "report.json"), timings);
}

}  // namespace fedcomp
