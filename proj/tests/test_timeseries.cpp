#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fedcomp/error.hpp"
#include "fedcomp/synthetic.hpp"
#include "fedcomp/timeseries.hpp"

using namespace fedcomp;

namespace {

std::filesystem::path temp_file(const std::string& name, const std::string& content) {
  auto p = std::filesystem::temp_directory_path() / ("fedcomp_test_" + name);
  std::ofstream(p) << content;
  return p;
}

TimeSeries ramp_series(Eigen::Index d, Eigen::Index t) {
  Matrix v(d, t);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < t; ++j) v(i, j) = 1.0 + i + 0.01 * j + std::sin(0.3 * j + i);
  }
  return TimeSeries::from_values(v);
}

}  // namespace

TEST_CASE("load_csv reads shape and values") {
  auto p = temp_file("ok.csv", "1,2,3\n4,5,6\n7,8,9\n10,11,12\n13,14,15\n");
  auto ts = load_csv(p);
  CHECK(ts.features() == 3);
  CHECK(ts.steps() == 5);
  CHECK(ts.values(1, 3) == 11.0);
  CHECK(ts.obs_mask.all());
  CHECK_FALSE(ts.anomaly_labels.any());
}

TEST_CASE("load_csv honours header and delimiter") {
  auto p = temp_file("hdr.csv", "temp;energy\n1.5;2\n3;-4e1\n");
  auto ts = load_csv(p, {';', true});
  CHECK(ts.features() == 2);
  CHECK(ts.steps() == 2);
  CHECK(ts.feature_names[1] == "energy");
  CHECK(ts.values(1, 1) == -40.0);
}

TEST_CASE("load_csv reports the offending cell") {
  auto p = temp_file("nan.csv", "1,2\n3,NaN\n");
  try {
    load_csv(p);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 2);
    CHECK(e.column() == 2);
    CHECK(std::string(e.what()).find("NaN") != std::string::npos);
  }
  CHECK_THROWS_AS(load_csv(temp_file("ragged.csv", "1,2\n3\n")), ParseError);
  CHECK_THROWS_AS(load_csv(temp_file("text.csv", "1,x\n")), ParseError);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), Error);
}

TEST_CASE("load_csv handles the full-size building dataset shape") {
  const Eigen::Index d = 24, t = 19000;
  std::string content;
  content.reserve(static_cast<std::size_t>(d * t * 4));
  for (Eigen::Index j = 0; j < t; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      if (i) content += ',';
      content += std::to_string((i + j) % 97);
    }
    content += '\n';
  }
  auto ts = load_csv(temp_file("big.csv", content));
  CHECK(ts.features() == 24);
  CHECK(ts.steps() == 19000);
}

TEST_CASE("write_csv and load_csv agree") {
  auto ts = ramp_series(3, 7);
  auto p = std::filesystem::temp_directory_path() / "fedcomp_test_rt.csv";
  write_csv(ts, p, {',', true});
  auto back = load_csv(p, {',', true});
  CHECK(back.values == ts.values);
  CHECK(back.feature_names == ts.feature_names);
}

TEST_CASE("standardize") {
  SUBCASE("zero-mean unit-variance input is unchanged") {
    Matrix v(1, 4);
    v << 1.0, -1.0, 1.0, -1.0;
    auto [z, stats] = standardize(TimeSeries::from_values(v), 1.0);
    CHECK((z.values - v).cwiseAbs().maxCoeff() < 1e-9);
  }
  SUBCASE("constant feature is rejected") {
    Matrix v = Matrix::Constant(2, 10, 3.0);
    v.row(0).setLinSpaced(10, 0.0, 1.0);
    CHECK_THROWS_AS(standardize(TimeSeries::from_values(v), 0.5), Error);
  }
  SUBCASE("training-prefix moments after transform") {
    // Prefix of 100 alternating values 8 and 12 has mean 10 and std 2.
    Matrix v(1, 120);
    for (int j = 0; j < 120; ++j) v(0, j) = j < 100 ? (j % 2 ? 12.0 : 8.0) : 50.0;
    auto [z, stats] = standardize(TimeSeries::from_values(v), 100.0 / 120.0);
    CHECK(stats.mean[0] == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(stats.std[0] == doctest::Approx(2.0).epsilon(1e-12));
    const auto prefix = z.values.row(0).head(100);
    const double mean = prefix.mean();
    const double sd = std::sqrt((prefix.array() - mean).square().mean());
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(sd - 1.0) < 1e-9);
    CHECK(stats.inverse(0, z.values(0, 110)) == doctest::Approx(50.0));
  }
  SUBCASE("missing cells do not enter the statistics") {
    Matrix v(1, 4);
    v << 1.0, 3.0, 1000.0, 3.0;
    auto ts = TimeSeries::from_values(v);
    ts.obs_mask(0, 2) = false;
    auto [z, stats] = standardize(ts, 1.0);
    CHECK(stats.mean[0] == doctest::Approx(7.0 / 3.0));
  }
}

TEST_CASE("make_windows") {
  SUBCASE("T_local = w gives one window") {
    Matrix s = Matrix::Random(2, 5);
    auto ws = make_windows(s, BoolMatrix::Constant(2, 5, true), 5);
    CHECK(ws.count() == 1);
    CHECK(ws.length() == 10);
  }
  SUBCASE("M=2, w=3, T=4 gives two windows of length 6 in column-major order") {
    Matrix s(2, 4);
    s << 1, 2, 3, 4, 10, 20, 30, 40;
    auto ws = make_windows(s, BoolMatrix::Constant(2, 4, true), 3);
    REQUIRE(ws.count() == 2);
    REQUIRE(ws.length() == 6);
    Vector expect0(6), expect1(6);
    expect0 << 1, 10, 2, 20, 3, 30;
    expect1 << 2, 20, 3, 30, 4, 40;
    CHECK(ws.windows.col(0) == expect0);
    CHECK(ws.windows.col(1) == expect1);
  }
  SUBCASE("24 x 19000 univariate series") {
    Matrix s = Matrix::Zero(1, 19000);
    auto ws = make_windows(s, BoolMatrix::Constant(1, 19000, true), 50);
    CHECK(ws.count() == 18951);
    CHECK(ws.length() == 50);
  }
  SUBCASE("too short") {
    CHECK_THROWS_AS(make_windows(Matrix::Zero(1, 4), BoolMatrix::Constant(1, 4, true), 5), Error);
  }
}

TEST_CASE("property: overlapping windows averaged back reproduce the series") {
  for (int seed = 0; seed < 5; ++seed) {
    std::srand(static_cast<unsigned>(seed));
    const Eigen::Index m = 1 + seed % 3, t = 20 + seed, w = 2 + seed;
    Matrix s = Matrix::Random(m, t);
    auto ws = make_windows(s, BoolMatrix::Constant(m, t, true), w);
    Matrix acc = Matrix::Zero(m, t);
    Vector cover = Vector::Zero(t);
    for (Eigen::Index q = 0; q < ws.count(); ++q) {
      for (Eigen::Index lag = 0; lag < w; ++lag) {
        acc.col(q + lag) += ws.windows.col(q).segment(lag * m, m);
        cover[q + lag] += 1;
      }
    }
    for (Eigen::Index j = 0; j < t; ++j) acc.col(j) /= cover[j];
    CHECK((acc - s).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("inject_mcar") {
  auto ts = ramp_series(24, 19000);
  CHECK(inject_mcar(ts, 0.0, 1).obs_mask.all());
  CHECK_FALSE(inject_mcar(ts, 1.0, 1).obs_mask.any());
  CHECK_THROWS_AS(inject_mcar(ts, 1.5, 1), Error);
  CHECK_THROWS_AS(inject_mcar(ts, -0.1, 1), Error);

  const auto a = inject_mcar(ts, 0.3, 42);
  const auto b = inject_mcar(ts, 0.3, 42);
  CHECK((a.obs_mask == b.obs_mask).all());
  CHECK(a.values == ts.values);  // ground truth retained

  for (double p : {0.1, 0.3, 0.5}) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto c = inject_mcar(ts, p, seed);
      const double frac = 1.0 - static_cast<double>(c.obs_mask.count()) / static_cast<double>(c.obs_mask.size());
      CHECK(std::abs(frac - p) <= 0.01);
    }
  }
}

TEST_CASE("inject_anomalies") {
  auto ts = ramp_series(3, 200);
  const auto same = inject_anomalies(ts, 0.0, 3.0, 1);
  CHECK(same.values == ts.values);
  CHECK_FALSE(same.anomaly_labels.any());

  SUBCASE("spike value and count") {
    Matrix v = Matrix::Zero(1, 95);
    for (int j = 0; j < 95; ++j) v(0, j) = (j % 6);  // max 5
    const auto out = inject_anomalies(TimeSeries::from_values(v), 0.1, 3.0, 9);
    CHECK(out.anomaly_labels.count() == 10);  // ceil(9.5)
    for (int j = 0; j < 95; ++j) {
      if (out.anomaly_labels(0, j)) {
        CHECK(out.values(0, j) == 15.0);
      } else {
        CHECK(out.values(0, j) == v(0, j));
      }
    }
    CHECK(out.clean_values == v);
  }
  SUBCASE("rate 1 marks every cell") {
    CHECK(inject_anomalies(ts, 1.0, 3.0, 1).anomaly_labels.all());
  }
  SUBCASE("determinism and errors") {
    CHECK((inject_anomalies(ts, 0.3, 3.0, 5).anomaly_labels == inject_anomalies(ts, 0.3, 3.0, 5).anomaly_labels).all());
    CHECK_THROWS_AS(inject_anomalies(ts, 1.2, 3.0, 1), Error);
    CHECK_THROWS_AS(inject_anomalies(ts, 0.1, 0.5, 1), Error);
  }
}

TEST_CASE("partition schemes") {
  auto ts = ramp_series(24, 19000);
  SUBCASE("centralized") {
    auto c = partition(ts, PartitionScheme::centralized(), 50);
    REQUIRE(c.size() == 1);
    CHECK(c[0].features.size() == 24);
    CHECK(c[0].t_end - c[0].t_begin == 19000);
  }
  SUBCASE("multivariate(5)") {
    auto c = partition(ts, PartitionScheme::multivariate(5), 50);
    REQUIRE(c.size() == 5);
    Eigen::Index next = 0;
    for (const auto& cl : c) {
      CHECK(cl.features.size() == 24);
      CHECK(cl.t_end - cl.t_begin == 3800);
      CHECK(cl.t_begin == next);
      next = cl.t_end;
    }
    CHECK(next == 19000);
  }
  SUBCASE("univariate") {
    auto c = partition(ts, PartitionScheme::univariate(), 50);
    REQUIRE(c.size() == 24);
    for (std::size_t i = 0; i < c.size(); ++i) {
      CHECK(c[i].features == std::vector<std::size_t>{i});
      CHECK(c[i].input_dim() == 50);
    }
  }
  SUBCASE("multivariate remainder goes to the last client") {
    auto c = partition(ramp_series(2, 1003), PartitionScheme::multivariate(4), 10);
    CHECK(c.back().t_end - c.back().t_begin == 250 + 3);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(PartitionScheme::parse("federated", 1), Error);
    CHECK_THROWS_AS(partition(ts, PartitionScheme::multivariate(0), 50), Error);
  }
}

TEST_CASE("property: partitions cover every cell exactly once") {
  const auto ts = ramp_series(5, 700);
  for (auto scheme : {PartitionScheme::centralized(), PartitionScheme::univariate(), PartitionScheme::multivariate(3),
                      PartitionScheme::multivariate(7)}) {
    CAPTURE(scheme.name());
    Eigen::ArrayXXi hits = Eigen::ArrayXXi::Zero(5, 700);
    for (const auto& c : partition(ts, scheme, 10)) {
      Eigen::Index covered = 0;
      for (const auto& seg : c.segments) {
        CHECK(seg.windows.count() == seg.length() - 10 + 1);
        CHECK(seg.windows.length() == static_cast<Eigen::Index>(c.features.size()) * 10);
        for (auto f : c.features) {
          for (Eigen::Index t = seg.t_begin; t < seg.t_begin + seg.length(); ++t) hits(static_cast<Eigen::Index>(f), t)++;
        }
        covered += seg.length();
      }
      CHECK(covered == c.t_end - c.t_begin);
    }
    CHECK((hits == 1).all());
  }
}

TEST_CASE("partition standardizes each client on its own training split and zeroes missing cells") {
  auto ts = inject_mcar(ramp_series(2, 400), 0.2, 3);
  auto clients = partition(ts, PartitionScheme::univariate(), 20);
  for (const auto& c : clients) {
    const auto& train = c.segment(Split::train);
    CHECK(train.length() == 280);
    double sum = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index t = 0; t < train.length(); ++t) {
      if (train.obs_mask(0, t)) {
        sum += train.values(0, t);
        ++n;
      } else {
        CHECK(train.values(0, t) == 0.0);
      }
    }
    CHECK(std::abs(sum / static_cast<double>(n)) < 1e-9);
    CHECK(c.segment(Split::validation).length() == 60);
    CHECK(c.segment(Split::test).length() == 60);
  }
}

TEST_CASE("synthetic generator") {
  SUBCASE("noise-free single sinusoid is exact") {
    SyntheticSpec spec;
    spec.features = 1;
    spec.steps = 100;
    spec.offset = 0.0;
    spec.noise_std = 0.0;
    spec.components = {{{0.05, 2.0, 0.25}}};
    const auto ts = generate_synthetic(spec);
    for (int t = 0; t < 100; ++t) {
      CHECK(ts.values(0, t) == doctest::Approx(2.0 * std::sin(2.0 * M_PI * 0.05 * t + 0.25)).epsilon(1e-14));
    }
  }
  SUBCASE("deterministic per seed") {
    SyntheticSpec spec;
    spec.steps = 300;
    CHECK(generate_synthetic(spec).values == generate_synthetic(spec).values);
    auto other = spec;
    other.seed = 2;
    CHECK(generate_synthetic(other).values != generate_synthetic(spec).values);
  }
  SUBCASE("shared frequencies give correlated features") {
    SyntheticSpec spec;
    spec.features = 8;
    spec.steps = 2000;
    spec.noise_std = 0.1;
    const auto ts = generate_synthetic(spec);
    Matrix centered = ts.values.colwise() - ts.values.rowwise().mean();
    const Matrix cov = centered * centered.transpose();
    for (int a = 0; a < 8; ++a) {
      for (int b = a + 1; b < 8; ++b) {
        const double corr = cov(a, b) / std::sqrt(cov(a, a) * cov(b, b));
        CHECK(corr > 0.5);
      }
    }
  }
}
