#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dpsvd/error.hpp"
#include "dpsvd/io.hpp"

using namespace dpsvd;

namespace {

CountMatrix sample() {
  Eigen::MatrixXd m(3, 2);
  m << 0, 7, 2, 0, 0, 1;
  return CountMatrix::from_dense(m);
}

int error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return static_cast<int>(e.kind());
  }
  return 0;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("dense CSV round trip") {
  std::ostringstream os;
  write_counts(os, sample(), CountFormat::dense_csv);
  CHECK(os.str() == "c1,c2\n0,7\n2,0\n0,1\n");
  std::istringstream is(os.str());
  CHECK(read_counts(is, CountFormat::dense_csv) == sample());
}

TEST_CASE("sparse coordinate round trip") {
  std::ostringstream os;
  write_counts(os, sample(), CountFormat::sparse_coordinate);
  std::istringstream is(os.str());
  const CountMatrix back = read_counts(is, CountFormat::sparse_coordinate);
  CHECK(back == sample());
  std::istringstream commented("% a comment\n2 2 1\n2 1 4\n");
  CHECK(read_counts(commented, CountFormat::sparse_coordinate)(1, 0) == 4.0);
}

TEST_CASE("parse errors name the source line") {
  std::istringstream bad("a,b\n1,2\n3,-1\n");
  try {
    read_counts(bad, CountFormat::dense_csv, "counts.csv");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::data);
    CHECK(std::string(e.what()).find("counts.csv:3") != std::string::npos);
  }
  std::istringstream ragged("a,b\n1\n");
  CHECK(error_kind([&] { read_counts(ragged, CountFormat::dense_csv); }) == 2);
  std::istringstream frac("a\n1.5\n");
  CHECK(error_kind([&] { read_counts(frac, CountFormat::dense_csv); }) == 2);
  std::istringstream range("2 2 1\n3 1 4\n");
  CHECK(error_kind([&] {
          read_counts(range, CountFormat::sparse_coordinate);
        }) == 2);
  std::istringstream short_nnz("2 2 2\n1 1 4\n");
  CHECK(error_kind([&] {
          read_counts(short_nnz, CountFormat::sparse_coordinate);
        }) == 2);
  CHECK(error_kind([] { parse_count_format("xlsx"); }) == 1);
}

TEST_CASE("model file round trip is exact") {
  ModelFile m;
  m.fit.mu = Eigen::Vector3d(0.1, -1.0 / 3.0, 2.0);
  m.fit.V = Eigen::MatrixXd(3, 2);
  m.fit.V << 1.0 / 7.0, 2, 3, 4, 5, 6e-300;
  m.fit.A = Eigen::MatrixXd(2, 2);
  m.fit.A << -1, 0.5, std::sqrt(2.0), 1e10;
  m.sigma2 = 0.0123456789;
  m.lineage = Lineage::ib_debiased;
  m.seed = 18446744073709551615ull;
  m.options = {{"k", "2"}};
  std::ostringstream os;
  write_model(os, m);
  std::istringstream is(os.str());
  const ModelFile back = read_model(is);
  CHECK(back.fit.mu == m.fit.mu);
  CHECK(back.fit.V == m.fit.V);
  CHECK(back.fit.A == m.fit.A);
  CHECK(*back.sigma2 == *m.sigma2);
  CHECK(back.lineage == Lineage::ib_debiased);
  CHECK(back.seed == m.seed);
  CHECK(back.options.at("k") == "2");
}

TEST_CASE("model version mismatch is rejected") {
  ModelFile m;
  m.fit.mu = Eigen::Vector2d(0, 0);
  m.fit.V = Eigen::MatrixXd::Identity(2, 1);
  m.fit.A = Eigen::MatrixXd::Zero(0, 1);
  m.has_scores = false;
  std::ostringstream os;
  write_model(os, m);
  std::string text = os.str();
  const auto pos = text.find("\"version\": 1");
  REQUIRE(pos != std::string::npos);
  text.replace(pos, 12, "\"version\": 2");
  std::istringstream is(text);
  CHECK(error_kind([&] { read_model(is); }) == 2);
}

TEST_CASE("results CSV layout") {
  ResultTable rows{{"cell/d=50", 255, 7, 3, "ib", "alignment", 0.5}};
  std::ostringstream os;
  write_results(os, rows);
  CHECK(os.str() ==
        "scenario,spec_hash,seed,replicate,stage,metric,value\n"
        "cell/d=50,00000000000000ff,7,3,ib,alignment,0.5\n");
  CHECK(format_double(0.1) == "0.10000000000000001");
}

}  // TEST_SUITE
