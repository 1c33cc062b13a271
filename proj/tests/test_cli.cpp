#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#ifndef TDI_CLI
#error "TDI_CLI must point at the tdi executable"
#endif

namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("tdi_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(TDI_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::set<std::string> listing(const fs::path& dir) {
  std::set<std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) out.insert(e.path().filename().string());
  return out;
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

const char* kSmallSynth = R"(seed = 11
[synth]
n_patients = 30
n_timepoints = 10
n_variables = 3
missing_profile = [0.3, 0.4, 0.5]
[imputer.mean]
kind = "mean"
[imputer.median]
kind = "median"
[imputer.svt]
kind = "soft_impute"
[predict]
n_folds = 3
window_hours = 8
methods = ["tdi", "mean"]
)";

}  // namespace

TEST_CASE("every command is byte-identical across two runs") {
  TempDir dir("repeat");
  write(dir.path / "run.toml", kSmallSynth);
  for (const std::string cmd : {"impute", "mask-eval", "ffill-eval", "predict", "synth", "stats"}) {
    CAPTURE(cmd);
    const auto a = dir.path / (cmd + "_a"), b = dir.path / (cmd + "_b");
    REQUIRE(run(cmd + " --config " + (dir.path / "run.toml").string() + " --out " + a.string()) == 0);
    REQUIRE(run(cmd + " --config " + (dir.path / "run.toml").string() + " --out " + b.string()) == 0);
    const auto files = listing(a);
    CHECK_FALSE(files.empty());
    CHECK(files == listing(b));
    for (const auto& f : files) {
      CAPTURE(f);
      CHECK(slurp(a / f) == slurp(b / f));
    }
  }
}

TEST_CASE("seed flag changes the synthetic draw") {
  TempDir dir("seed");
  write(dir.path / "run.toml", kSmallSynth);
  const auto cfg = (dir.path / "run.toml").string();
  REQUIRE(run("synth --config " + cfg + " --out " + (dir.path / "a").string()) == 0);
  REQUIRE(run("synth --config " + cfg + " --seed 12 --out " + (dir.path / "b").string()) == 0);
  CHECK(slurp(dir.path / "a/observed.csv") != slurp(dir.path / "b/observed.csv"));
}

TEST_CASE("exit codes and no partial output") {
  TempDir dir("exit");
  write(dir.path / "missing_input.toml", "[data]\ninput = \"nope.csv\"\n");
  const auto out = dir.path / "out";
  CHECK(run("impute --config " + (dir.path / "missing_input.toml").string() + " --out " + out.string()) == 2);
  CHECK(listing(out).empty());

  write(dir.path / "bad.toml", "[data]\nunknown_key = 1\n");
  CHECK(run("impute --config " + (dir.path / "bad.toml").string() + " --out " + out.string()) == 1);
  CHECK(run("impute --config " + (dir.path / "absent.toml").string()) == 1);
  CHECK(run("impute") == 1);
  CHECK(run("frobnicate --config x") == 1);

  // All-missing variable: the iterative model cannot start.
  write(dir.path / "hole.csv", "patient_id,time,variable,value\na,0,x,1\na,1,x,2\n");
  write(dir.path / "hole.toml", "[data]\ninput = \"hole.csv\"\nvariables = [\"x\", \"y\"]\n");
  const int rc = run("impute --config " + (dir.path / "hole.toml").string() + " --out " + out.string());
  CHECK(rc != 0);
  CHECK(listing(out).empty());
}

TEST_CASE("mean impute of a single missing cell changes only that cell") {
  TempDir dir("one");
  write(dir.path / "in.csv",
        "patient_id,time,variable,value\n"
        "a,0,x,1\na,0,y,10\na,1,x,3\na,1,y,20\nb,0,x,5\n");
  write(dir.path / "run.toml",
        "[data]\ninput = \"in.csv\"\nvariables = [\"x\", \"y\"]\n"
        "[imputer.mean]\nkind = \"mean\"\n[impute]\nmethod = \"mean\"\n");
  const auto out = dir.path / "out";
  REQUIRE(run("impute --config " + (dir.path / "run.toml").string() + " --out " + out.string()) == 0);
  CHECK(slurp(out / "imputed.csv") ==
        "patient_id,time,variable,value\n"
        "a,0,x,1\na,0,y,10\na,1,x,3\na,1,y,20\nb,0,x,5\nb,0,y,15\n");
  const auto prov = lines(slurp(out / "provenance.csv"));
  REQUIRE(prov.size() == 7);
  CHECK(prov[0] == "patient_id,time,variable,source,weight");
  CHECK(prov[6] == "b,0,y,imputed,");
  CHECK(prov[5] == "b,0,x,observed,");
}

TEST_CASE("multiple imputation writes one file per run and a variance summary") {
  TempDir dir("mi");
  std::string cfg = kSmallSynth;
  cfg += "[tdi]\nm = 3\nseed = 100\n";
  write(dir.path / "run.toml", cfg);
  const auto out = dir.path / "out";
  REQUIRE(run("impute --config " + (dir.path / "run.toml").string() + " --out " + out.string()) == 0);
  const auto files = listing(out);
  for (const char* f : {"imputed_seed100.csv", "imputed_seed101.csv", "imputed_seed102.csv",
                        "provenance_seed100.csv", "provenance_seed101.csv", "provenance_seed102.csv",
                        "variance.csv"}) {
    CHECK(files.count(f) == 1);
  }
  CHECK(lines(slurp(out / "variance.csv"))[0] == "patient_id,time,variable,mean,variance");

  write(dir.path / "bad.toml", std::string(kSmallSynth) + "[impute]\nmethod = \"mean\"\n[tdi]\nm = 3\n");
  CHECK(run("impute --config " + (dir.path / "bad.toml").string() + " --out " + (dir.path / "o2").string()) == 1);
}

TEST_CASE("mask-eval emits one block per registered competitor") {
  TempDir dir("blocks");
  std::string cfg = kSmallSynth;
  cfg += "[masking]\ncompetitors = [\"mean\", \"median\", \"svt\"]\n";
  write(dir.path / "run.toml", cfg);
  const auto out = dir.path / "out";
  REQUIRE(run("mask-eval --config " + (dir.path / "run.toml").string() + " --out " + out.string()) == 0);
  const auto rows = lines(slurp(out / "mask_eval.csv"));
  CHECK(rows[0] == "imputer,variable,rmse,nrmse,smape");
  std::set<std::string> names;
  std::size_t overall = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    names.insert(rows[i].substr(0, rows[i].find(',')));
    overall += rows[i].find(",__overall__,") != std::string::npos;
  }
  CHECK(names == std::set<std::string>{"mean", "median", "svt"});
  CHECK(overall == 3);
  CHECK(rows.size() == 1 + 3 * 4);
  CHECK(fs::exists(out / "mask_eval.json"));
  CHECK(fs::exists(out / "mask_eval_nrmse_plot.csv"));
}

TEST_CASE("stats reports the missing rate") {
  TempDir dir("stats");
  // x observed at 1 of 5 grid rows; y observed at every row.
  write(dir.path / "in.csv",
        "patient_id,time,variable,value\n"
        "a,0,x,1\na,0,y,1\na,1,y,2\na,2,y,3\na,3,y,4\na,4,y,5\n");
  write(dir.path / "run.toml", "[data]\ninput = \"in.csv\"\nvariables = [\"x\", \"y\"]\n");
  const auto out = dir.path / "out";
  REQUIRE(run("stats --config " + (dir.path / "run.toml").string() + " --out " + out.string()) == 0);
  const auto rows = lines(slurp(out / "stats.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0] == "variable,n_observed,mean,sd,missing_rate,frequency,missing_rate_after_ffill");
  CHECK(rows[1].rfind("x,1,1,,0.8,0,0", 0) == 0);
  CHECK(rows[2].rfind("y,5,3,", 0) == 0);
}
