#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "dpsvd/io.hpp"
#include "dpsvd/sim.hpp"

using namespace dpsvd;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

// Runs the CLI through the shell; stderr is folded into the output.
Run run(const std::string& args) {
  const std::string cmd = std::string(DPSVD_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  std::array<char, 4096> buf;
  std::size_t got;
  while ((got = std::fread(buf.data(), 1, buf.size(), p)) > 0)
    out.append(buf.data(), got);
  const int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("dpsvd_cli_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const {
    return (path / name).string();
  }
};

void write_data(const std::string& path) {
  ScenarioSpec s;
  s.n = 60;
  s.d = 30;
  s.mu_center = 1.5;
  std::ofstream out(path);
  write_counts(out, generate_dataset(s, 0, RngStream(2)).counts,
               CountFormat::dense_csv);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("fit, debias, scores and recommend chain") {
  TempDir t;
  write_data(t / "x.csv");
  REQUIRE(run("fit --in " + (t / "x.csv") + " --out " + (t / "m.json") +
              " --k 1 --seed 3").code == 0);
  const ModelFile m = read_model(t / "m.json");
  CHECK(m.fit.rank() == 1);
  CHECK(m.lineage == Lineage::raw);

  REQUIRE(run("debias --in " + (t / "x.csv") + " --model " + (t / "m.json") +
              " --out " + (t / "d.json") + " --B 2 --C 2 --diagnostics " +
              (t / "diag.csv")).code == 0);
  const ModelFile d = read_model(t / "d.json");
  CHECK(d.lineage == Lineage::ib_debiased);
  CHECK(d.sigma2.has_value());
  CHECK(!slurp(t / "diag.csv").empty());

  const Run s = run("scores --in " + (t / "x.csv") + " --model " +
                    (t / "d.json") + " --score-method firth --out -");
  CHECK(s.code == 0);
  CHECK(s.out.rfind("row,a1,diverged,fallback\n", 0) == 0);

  const Run sx = run("scores --in " + (t / "x.csv") + " --model " +
                     (t / "d.json") + " --simex --simex-reps 3 --out -");
  CHECK(sx.code == 0);

  const Run r = run("recommend --in " + (t / "x.csv") + " --model " +
                    (t / "d.json") + " --top 3 --out -");
  CHECK(r.code == 0);
  CHECK(r.out.rfind("row,rank,column,lambda\n", 0) == 0);
}

TEST_CASE("simulate writes the tidy CSV reproducibly") {
  TempDir t;
  {
    std::ofstream cfg(t / "s.cfg");
    cfg << "[scenario]\nname = tiny\nn = 20\nd = 10\nc = 0\nreplicates = 2\n"
           "stages = psvd ib\nB = 2\nC = 2\n";
  }
  const Run a = run("simulate --in " + (t / "s.cfg") + " --out -");
  const Run b = run("simulate --in " + (t / "s.cfg") + " --out -");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.rfind("scenario,spec_hash,seed,replicate,stage,metric,value\n",
                    0) == 0);
  const Run one = run("simulate --in " + (t / "s.cfg") +
                      " --replicate 1 --stages psvd --out -");
  CHECK(one.code == 0);
  CHECK(one.out.find(",1,psvd,alignment,") != std::string::npos);
  CHECK(one.out.find(",0,psvd,") == std::string::npos);
}

TEST_CASE("eval and cohort") {
  TempDir t;
  write_data(t / "x.csv");
  const Run e = run("eval --in " + (t / "x.csv") +
                    " --k 1 --methods constant,intercept,psvd --test-rows 5"
                    " --forced 2 --out -");
  CHECK(e.code == 0);
  CHECK(e.out.find("constant,0,mean,0.5") != std::string::npos);
  const Run c = run("cohort --in " + (t / "x.csv") +
                    " --top-columns 20 --pick-columns 10 --top-rows 40"
                    " --test-rows 4 --out " + (t / "c.mtx") +
                    " --out-format sparse-coordinate --rows-out " +
                    (t / "ids.csv"));
  CHECK(c.code == 0);
  CHECK(read_counts(t / "c.mtx", CountFormat::sparse_coordinate).rows() == 40);
}

TEST_CASE("errors map to exit codes with one stderr record") {
  TempDir t;
  const Run usage = run("fit --k 0");
  CHECK(usage.code == 1);
  CHECK(usage.out.find("dpsvd: error=usage code=1") != std::string::npos);
  {
    std::ofstream bad(t / "bad.csv");
    bad << "a,b\n1,-2\n";
  }
  const Run data = run("fit --in " + (t / "bad.csv") + " --out -");
  CHECK(data.code == 2);
  CHECK(data.out.find("error=data code=2") != std::string::npos);
  CHECK(data.out.find("bad.csv:2") != std::string::npos);
  const Run missing = run("fit --in " + (t / "nope.csv"));
  CHECK(missing.code == 2);
  CHECK(run("--help").code == 0);
}

}  // TEST_SUITE
