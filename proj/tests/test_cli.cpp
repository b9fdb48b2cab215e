#include "cli.hpp"
#include "support.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = hipal::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::vector<std::string> kSmallCohort{
    "--set", "participants=6", "--set", "months=2",       "--set", "vocab_size=30",
    "--set", "mean_shifts=3",  "--set", "mean_events=8", "--set", "unlabeled_fraction=0"};

const std::vector<std::string> kTinyModel{
    "--set", "action_dim=4",  "--set", "time_dim=2",  "--set", "tcn_layers=2", "--set", "tcn_filters=4",
    "--set", "tcn_kernel=2",  "--set", "h_dim=4",     "--set", "lstm_hidden=4", "--set", "mlp_hidden=4",
    "--set", "max_steps=32",  "--set", "epochs=1",    "--set", "sg_epochs=1",  "--set", "rounds=1",
    "--set", "folds=3"};

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

std::filesystem::path small_cohort(const std::string& name) {
  const auto dir = hipal::testing::temp_dir(name);
  const auto r = cli(concat({"synth", "--out", dir.string(), "--seed", "5"}, kSmallCohort));
  REQUIRE(r.code == 0);
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 2, help exits 0") {
  auto r = cli({});
  CHECK(r.code == 2);
  CHECK(r.err.find("error:") != std::string::npos);
  r = cli({"frobnicate"});
  CHECK(r.code == 2);
  r = cli({"synth"});
  CHECK(r.code == 2);
  CHECK(r.err.find("--out") != std::string::npos);
  r = cli({"synth", "--out", "x", "--bogus"});
  CHECK(r.code == 2);
  r = cli({"--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("offset-eval") != std::string::npos);
  r = cli({"cv", "--help"});
  CHECK(r.code == 0);
  CHECK(r.out.find("--recipe") != std::string::npos);
  r = cli({"cv", "--dataset", "/nonexistent/file.jsonl"});
  CHECK(r.code == 2);
}

TEST_CASE("synth twice with the same seed writes byte-identical files") {
  const auto a = hipal::testing::temp_dir("cli_synth_a"), b = hipal::testing::temp_dir("cli_synth_b");
  const auto ra = cli(concat({"synth", "--out", a.string(), "--seed", "7"}, kSmallCohort));
  const auto rb = cli(concat({"synth", "--out", b.string(), "--seed", "7"}, kSmallCohort));
  REQUIRE(ra.code == 0);
  REQUIRE(rb.code == 0);
  CHECK(ra.out == rb.out);
  CHECK(ra.out.find("oracle_auroc=") != std::string::npos);
  for (const char* f : {"events.csv", "surveys.csv", "vocab.csv", "dataset.jsonl", "latent_truth.csv"}) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto c = hipal::testing::temp_dir("cli_synth_c");
  REQUIRE(cli(concat({"synth", "--out", c.string(), "--seed", "8"}, kSmallCohort)).code == 0);
  CHECK(slurp(a / "events.csv") != slurp(c / "events.csv"));
}

TEST_CASE("config file plus overrides; unknown keys fail") {
  const auto dir = hipal::testing::temp_dir("cli_config");
  {
    std::ofstream cfg(dir / "gen.cfg");
    cfg << "# cohort\nparticipants = 5\nmonths = 2\nvocab_size = 20\nmean_shifts = 2\nmean_events = 5\n";
  }
  auto r = cli({"synth", "--config", (dir / "gen.cfg").string(), "--set", "months=3", "--out", (dir / "d").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("months=15") != std::string::npos);
  r = cli({"synth", "--set", "no_such_key=1", "--out", (dir / "e").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("no_such_key") != std::string::npos);
}

TEST_CASE("ingest reassembles the synthetic files and stats reads them") {
  const auto dir = small_cohort("cli_ingest");
  auto r = cli({"ingest", "--events", (dir / "events.csv").string(), "--surveys", (dir / "surveys.csv").string(),
                "--vocab", (dir / "vocab.csv").string(), "--out", (dir / "re.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(slurp(dir / "re.jsonl") == slurp(dir / "dataset.jsonl"));
  r = cli({"stats", "--dataset", (dir / "re.jsonl").string()});
  CHECK(r.code == 0);
  CHECK(r.out.find("months") != std::string::npos);
}

TEST_CASE("cv writes a metrics report and is reproducible") {
  const auto dir = small_cohort("cli_cv");
  const auto args = concat({"cv", "--dataset", (dir / "dataset.jsonl").string(), "--recipe", "hipal-c"}, kTinyModel);
  auto r1 = cli(concat(args, {"--out", (dir / "a.csv").string()}));
  auto r2 = cli(concat(args, {"--out", (dir / "b.csv").string()}));
  REQUIRE(r1.code == 0);
  REQUIRE(r2.code == 0);
  const std::string report = slurp(dir / "a.csv");
  CHECK(report.rfind("recipe,round,fold,auroc,auprc,accuracy,epoch_seconds\n", 0) == 0);
  CHECK(report.find("hipal-c,mean,,") != std::string::npos);
  CHECK(report == slurp(dir / "b.csv"));
  auto bad = cli(concat({"cv", "--dataset", (dir / "dataset.jsonl").string(), "--recipe", "hipal-z"}, kTinyModel));
  CHECK(bad.code == 2);
}

TEST_CASE("train without labels fails and names the missing labels") {
  const auto dir = hipal::testing::temp_dir("cli_nolabels");
  REQUIRE(cli(concat(concat({"synth", "--out", dir.string()}, kSmallCohort), {"--set", "unlabeled_fraction=1"})).code ==
          0);
  const auto r = cli(concat({"train", "--dataset", (dir / "dataset.jsonl").string(), "--out",
                             (dir / "m.ckpt").string()},
                            kTinyModel));
  CHECK(r.code != 0);
  CHECK(r.err.find("labels") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "m.ckpt"));
}

TEST_CASE("train, eval, predict, offset-eval and riskmap chain together") {
  const auto dir = small_cohort("cli_chain");
  const std::string ds = (dir / "dataset.jsonl").string(), model = (dir / "m.ckpt").string();
  auto r = cli(concat({"train", "--dataset", ds, "--out", model, "--history", (dir / "h.csv").string()}, kTinyModel));
  REQUIRE(r.code == 0);
  CHECK(std::filesystem::exists(dir / "h.csv"));

  r = cli({"eval", "--dataset", ds, "--model", model});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("months,auroc,auprc,accuracy\n", 0) == 0);

  r = cli({"predict", "--dataset", ds, "--model", model, "--out", (dir / "p.csv").string()});
  REQUIRE(r.code == 0);
  r = cli({"predict", "--dataset", ds, "--model", model, "--streaming", "--out", (dir / "ps.csv").string()});
  REQUIRE(r.code == 0);
  const std::string batch = slurp(dir / "p.csv");
  CHECK(batch.rfind("participant_id,month_index,label,gamma,daily_risks\n", 0) == 0);
  CHECK(batch == slurp(dir / "ps.csv"));

  r = cli({"offset-eval", "--dataset", ds, "--model", model, "--max-offset", "3"});
  REQUIRE(r.code == 0);
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 5);

  r = cli({"riskmap", "--dataset", ds, "--model", model, "--participant", "P000", "--out", (dir / "r.csv").string()});
  if (r.code != 0) MESSAGE(r.err);
  CHECK(r.code == 0);
  r = cli({"riskmap", "--dataset", ds, "--model", model, "--participant", "nobody", "--out",
           (dir / "n.csv").string()});
  CHECK(r.code == 1);
  CHECK(r.err.find("nobody") != std::string::npos);
}
