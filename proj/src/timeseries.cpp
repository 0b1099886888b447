#include "fedcomp/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "fedcomp/error.hpp"

namespace fedcomp {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_line(std::string_view line, char delim) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      cells.push_back(trim(line.substr(start)));
      break;
    }
    cells.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return cells;
}

std::string describe_cell(std::size_t row, std::size_t col) {
  std::ostringstream os;
  os << "row " << row << ", column " << col;
  return os.str();
}

}  // namespace

TimeSeries TimeSeries::from_values(Matrix values, std::vector<std::string> names) {
  TimeSeries ts;
  const auto d = values.rows();
  const auto t = values.cols();
  if (names.empty()) {
    names.reserve(static_cast<std::size_t>(d));
    for (Eigen::Index i = 0; i < d; ++i) names.push_back("f" + std::to_string(i));
  }
  if (static_cast<Eigen::Index>(names.size()) != d) {
    throw DimensionError("feature name count does not match feature count");
  }
  ts.values = std::move(values);
  ts.feature_names = std::move(names);
  ts.obs_mask = BoolMatrix::Constant(d, t, true);
  ts.anomaly_labels = BoolMatrix::Constant(d, t, false);
  return ts;
}

void TimeSeries::validate() const {
  const auto d = values.rows();
  const auto t = values.cols();
  if (obs_mask.rows() != d || obs_mask.cols() != t) throw DimensionError("obs_mask shape differs from values");
  if (anomaly_labels.rows() != d || anomaly_labels.cols() != t) {
    throw DimensionError("anomaly_labels shape differs from values");
  }
  if (has_clean_values() && (clean_values.rows() != d || clean_values.cols() != t)) {
    throw DimensionError("clean_values shape differs from values");
  }
  if (static_cast<Eigen::Index>(feature_names.size()) != d) throw DimensionError("feature name count mismatch");
}

TimeSeries TimeSeries::slice(const std::vector<std::size_t>& feature_idx, Eigen::Index t_begin,
                             Eigen::Index t_end) const {
  if (t_begin < 0 || t_end > steps() || t_begin >= t_end) throw DimensionError("invalid time slice");
  const auto m = static_cast<Eigen::Index>(feature_idx.size());
  const auto len = t_end - t_begin;
  TimeSeries out;
  out.values.resize(m, len);
  out.obs_mask.resize(m, len);
  out.anomaly_labels.resize(m, len);
  if (has_clean_values()) out.clean_values.resize(m, len);
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto f = static_cast<Eigen::Index>(feature_idx[static_cast<std::size_t>(r)]);
    if (f < 0 || f >= features()) throw DimensionError("feature index out of range");
    out.values.row(r) = values.row(f).segment(t_begin, len);
    out.obs_mask.row(r) = obs_mask.row(f).segment(t_begin, len);
    out.anomaly_labels.row(r) = anomaly_labels.row(f).segment(t_begin, len);
    if (has_clean_values()) out.clean_values.row(r) = clean_values.row(f).segment(t_begin, len);
    out.feature_names.push_back(feature_names[static_cast<std::size_t>(f)]);
  }
  return out;
}

const char* to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

Eigen::Index ClientDataset::window_count() const {
  Eigen::Index n = 0;
  for (const auto& s : segments) n += s.windows.count();
  return n;
}

PartitionScheme PartitionScheme::parse(const std::string& name, int n_clients) {
  if (name == "centralized") return centralized();
  if (name == "multivariate") return multivariate(n_clients);
  if (name == "univariate") return univariate();
  throw Error("unknown partition scheme '" + name + "'");
}

std::string PartitionScheme::name() const {
  switch (kind) {
    case Kind::centralized: return "centralized";
    case Kind::multivariate: return "multivariate";
    case Kind::univariate: return "univariate";
  }
  return "?";
}

TimeSeries load_csv(const std::filesystem::path& path, const CsvOptions& opts) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");

  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t columns = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_line(line, opts.delimiter);
    if (opts.header && names.empty() && rows.empty()) {
      for (auto c : cells) names.emplace_back(c);
      columns = cells.size();
      continue;
    }
    if (columns == 0) columns = cells.size();
    if (cells.size() != columns) {
      throw ParseError("ragged row at line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                           " columns, found " + std::to_string(cells.size()),
                       line_no, 0);
    }
    std::vector<double> row(columns);
    for (std::size_t c = 0; c < columns; ++c) {
      const auto cell = cells[c];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric cell '" + std::string(cell) + "' at " + describe_cell(line_no, c + 1),
                         line_no, c + 1);
      }
      row[c] = v;
    }
    rows.push_back(std::move(row));
  }
  if (in.bad()) throw Error("I/O failure while reading '" + path.string() + "'");
  if (rows.empty()) throw ParseError("no data rows in '" + path.string() + "'", 0, 0);

  Matrix values(static_cast<Eigen::Index>(columns), static_cast<Eigen::Index>(rows.size()));
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (std::size_t d = 0; d < columns; ++d) {
      values(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(t)) = rows[t][d];
    }
  }
  return TimeSeries::from_values(std::move(values), std::move(names));
}

void write_csv(const TimeSeries& ts, const std::filesystem::path& path, const CsvOptions& opts) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  if (opts.header) {
    for (std::size_t i = 0; i < ts.feature_names.size(); ++i) {
      if (i) out << opts.delimiter;
      out << ts.feature_names[i];
    }
    out << '\n';
  }
  char buf[64];
  for (Eigen::Index t = 0; t < ts.steps(); ++t) {
    for (Eigen::Index d = 0; d < ts.features(); ++d) {
      if (d) out << opts.delimiter;
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, ts.values(d, t));
      out.write(buf, end - buf);
    }
    out << '\n';
  }
  if (!out) throw Error("I/O failure while writing '" + path.string() + "'");
}

std::pair<TimeSeries, NormalizationStats> standardize(const TimeSeries& ts, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw Error("train_fraction must lie in (0, 1]");
  ts.validate();
  const auto d = ts.features();
  const auto prefix = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::floor(train_fraction * static_cast<double>(ts.steps()) + 1e-9)));

  NormalizationStats stats;
  stats.mean.resize(static_cast<std::size_t>(d));
  stats.std.resize(static_cast<std::size_t>(d));
  for (Eigen::Index f = 0; f < d; ++f) {
    double sum = 0.0;
    std::size_t n = 0;
    for (Eigen::Index t = 0; t < prefix; ++t) {
      if (ts.obs_mask(f, t)) {
        sum += ts.values(f, t);
        ++n;
      }
    }
    if (n == 0) throw Error("feature '" + ts.feature_names[static_cast<std::size_t>(f)] + "' has no observed training values");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (Eigen::Index t = 0; t < prefix; ++t) {
      if (ts.obs_mask(f, t)) ss += (ts.values(f, t) - mean) * (ts.values(f, t) - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (!(sd > 0.0)) {
      throw Error("feature '" + ts.feature_names[static_cast<std::size_t>(f)] + "' has zero variance on the training prefix");
    }
    stats.mean[static_cast<std::size_t>(f)] = mean;
    stats.std[static_cast<std::size_t>(f)] = sd;
  }

  TimeSeries out = ts;
  for (Eigen::Index f = 0; f < d; ++f) {
    const double m = stats.mean[static_cast<std::size_t>(f)];
    const double s = stats.std[static_cast<std::size_t>(f)];
    out.values.row(f) = (out.values.row(f).array() - m) / s;
    if (out.has_clean_values()) out.clean_values.row(f) = (out.clean_values.row(f).array() - m) / s;
  }
  return {std::move(out), std::move(stats)};
}

WindowSet make_windows(const Matrix& local_series, const BoolMatrix& obs_mask, Eigen::Index w) {
  if (w < 1) throw Error("window length must be positive");
  if (obs_mask.rows() != local_series.rows() || obs_mask.cols() != local_series.cols()) {
    throw DimensionError("mask shape differs from series");
  }
  const auto m = local_series.rows();
  const auto t_local = local_series.cols();
  if (t_local < w) {
    throw Error("series of length " + std::to_string(t_local) + " is shorter than window " + std::to_string(w));
  }
  const auto q_count = t_local - w + 1;
  WindowSet ws;
  ws.windows.resize(m * w, q_count);
  ws.masks.resize(m * w, q_count);
  for (Eigen::Index q = 0; q < q_count; ++q) {
    for (Eigen::Index lag = 0; lag < w; ++lag) {
      ws.windows.col(q).segment(lag * m, m) = local_series.col(q + lag);
      ws.masks.col(q).segment(lag * m, m) = obs_mask.col(q + lag);
    }
  }
  return ws;
}

TimeSeries inject_mcar(const TimeSeries& ts, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("missing rate must lie in [0, 1]");
  ts.validate();
  TimeSeries out = ts;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index t = 0; t < out.steps(); ++t) {
    for (Eigen::Index f = 0; f < out.features(); ++f) {
      if (unif(gen) < p) out.obs_mask(f, t) = false;
    }
  }
  return out;
}

TimeSeries inject_anomalies(const TimeSeries& ts, double rate, double factor, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw Error("anomaly rate must lie in [0, 1]");
  if (!(factor > 1.0)) throw Error("anomaly factor must exceed 1");
  ts.validate();
  TimeSeries out = ts;
  if (!out.has_clean_values()) out.clean_values = ts.values;
  const auto t_count = out.steps();
  const auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(t_count) - 1e-9));
  std::mt19937_64 gen(seed);
  std::vector<Eigen::Index> all(static_cast<std::size_t>(t_count));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  for (Eigen::Index f = 0; f < out.features(); ++f) {
    const double spike = factor * out.clean_values.row(f).maxCoeff();
    std::vector<Eigen::Index> chosen;
    chosen.reserve(k);
    std::sample(all.begin(), all.end(), std::back_inserter(chosen), k, gen);
    for (auto t : chosen) {
      out.values(f, t) = spike;
      out.anomaly_labels(f, t) = true;
    }
  }
  return out;
}

std::array<std::pair<Eigen::Index, Eigen::Index>, 3> split_ranges(Eigen::Index length, const SplitRatios& ratios) {
  const double total = ratios.train + ratios.validation + ratios.test;
  if (!(ratios.train > 0 && ratios.validation >= 0 && ratios.test >= 0) || std::abs(total - 1.0) > 1e-9) {
    throw Error("split ratios must be nonnegative, with a positive training share, and sum to 1");
  }
  const auto n = static_cast<double>(length);
  const auto n_train = static_cast<Eigen::Index>(std::floor(n * ratios.train + 1e-9));
  const auto n_val = static_cast<Eigen::Index>(std::floor(n * ratios.validation + 1e-9));
  return {{{0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, length}}};
}

std::vector<ClientDataset> partition(const TimeSeries& ts, const PartitionScheme& scheme, Eigen::Index w,
                                     const SplitRatios& ratios) {
  ts.validate();
  const auto d = static_cast<std::size_t>(ts.features());
  const auto t = ts.steps();

  struct Ownership {
    std::vector<std::size_t> features;
    Eigen::Index t_begin, t_end;
  };
  std::vector<Ownership> owners;
  std::vector<std::size_t> all_features(d);
  std::iota(all_features.begin(), all_features.end(), std::size_t{0});

  switch (scheme.kind) {
    case PartitionScheme::Kind::centralized:
      owners.push_back({all_features, 0, t});
      break;
    case PartitionScheme::Kind::multivariate: {
      if (scheme.n_clients < 1) throw Error("multivariate scheme needs at least one client");
      const Eigen::Index n = scheme.n_clients;
      const Eigen::Index block = t / n;
      if (block < 1) throw Error("more clients than time steps");
      for (Eigen::Index i = 0; i < n; ++i) {
        owners.push_back({all_features, i * block, i + 1 == n ? t : (i + 1) * block});
      }
      break;
    }
    case PartitionScheme::Kind::univariate:
      for (std::size_t f = 0; f < d; ++f) owners.push_back({{f}, 0, t});
      break;
  }

  std::vector<ClientDataset> clients;
  clients.reserve(owners.size());
  for (std::size_t i = 0; i < owners.size(); ++i) {
    const auto& own = owners[i];
    auto local = ts.slice(own.features, own.t_begin, own.t_end);
    auto [z, stats] = standardize(local, ratios.train);

    ClientDataset cd;
    cd.client_id = static_cast<int>(i);
    cd.features = own.features;
    cd.t_begin = own.t_begin;
    cd.t_end = own.t_end;
    cd.window = w;
    cd.stats = std::move(stats);

    const auto ranges = split_ranges(local.steps(), ratios);
    for (std::size_t s = 0; s < 3; ++s) {
      const auto [b, e] = ranges[s];
      Segment& seg = cd.segments[s];
      seg.split = static_cast<Split>(s);
      seg.t_begin = own.t_begin + b;
      if (e - b < w) {
        throw Error("client " + std::to_string(i) + " " + to_string(seg.split) + " split has " +
                    std::to_string(e - b) + " steps, fewer than window " + std::to_string(w));
      }
      seg.obs_mask = z.obs_mask.middleCols(b, e - b);
      seg.values = z.values.middleCols(b, e - b);
      seg.values = (seg.obs_mask).select(seg.values, 0.0);
      seg.windows = make_windows(seg.values, seg.obs_mask, w);
    }
    clients.push_back(std::move(cd));
  }
  return clients;
}

}  // namespace fedcomp
