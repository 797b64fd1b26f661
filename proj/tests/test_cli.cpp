// End-to-end pipeline test for the command-line tool. Takes the binary path
// as argv[1]; exercises simulate -> fit -> coverage -> summarize on small
// budgets plus the exit-code and determinism contracts.

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int failures = 0;

#define CHECK_MSG(cond, msg)                                              \
  do {                                                                    \
    if (!(cond)) {                                                        \
      std::cerr << "[FAIL] " << __FILE__ << ":" << __LINE__ << " " << msg \
                << "\n";                                                  \
      ++failures;                                                         \
    }                                                                     \
  } while (0)

std::string g_binary;
fs::path g_root;

int run(const std::string& args) {
  const std::string cmd = g_binary + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  if (status < 0) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

void make_study_inputs(const fs::path& dir) {
  // 6-site ring with a chord.
  write_file(dir / "adj.csv",
             "site_a,site_b\n1,2\n2,3\n3,4\n4,5\n5,6\n6,1\n2,5\n");
  std::ostringstream pop;
  pop << "site_id,group,time,population\n";
  for (int i = 1; i <= 6; ++i)
    for (int k = 1; k <= 2; ++k)
      for (int t = 1; t <= 2; ++t)
        pop << i << ',' << k << ',' << t << ','
            << ((i == 4 && k == 2) ? 0 : 120000 + 1000 * i) << '\n';
  write_file(dir / "pop.csv", pop.str());
  write_file(dir / "design.json", R"({
    "n_groups": 2,
    "n_time": 2,
    "adjacency": "adj.csv",
    "population_mode": "table",
    "population_table": "pop.csv",
    "n_replicates": 2,
    "seed": 321,
    "truth_init": true,
    "variants": ["mstcar", "separable"],
    "sampler": {"n_iterations": 120, "burn_in": 60, "thin": 2}
  })");
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: mstcar_cli_test <mstcar-binary>\n";
    return 2;
  }
  g_binary = argv[1];
  g_root = fs::temp_directory_path() /
           ("mstcar_cli_test_" + std::to_string(::getpid()));
  fs::remove_all(g_root);
  fs::create_directories(g_root);
  const std::string data_dir = MSTCAR_DATA_DIR;

  // --- bad invocations exit with the config code --------------------------
  CHECK_MSG(run("fit") == 2, "missing required flags should exit 2");
  CHECK_MSG(run("simulate --design /nonexistent.json --out " +
                (g_root / "none").string()) == 2,
            "unreadable design should exit 2");

  // --- simulate ------------------------------------------------------------
  make_study_inputs(g_root);
  const fs::path study1 = g_root / "study1";
  const fs::path study2 = g_root / "study2";
  CHECK_MSG(run("simulate --design " + (g_root / "design.json").string() +
                " --out " + study1.string() + " --threads 2") == 0,
            "simulate should succeed");
  CHECK_MSG(fs::exists(study1 / "truth.json"), "truth file written");
  CHECK_MSG(fs::exists(study1 / "replicate_000.csv"), "replicate 0 written");
  CHECK_MSG(fs::exists(study1 / "replicate_001.csv"), "replicate 1 written");
  CHECK_MSG(fs::exists(study1 / "field_001.csv"), "field truth written");
  CHECK_MSG(!fs::exists(study1 / ".mstcar.lock"), "lock released");

  CHECK_MSG(run("simulate --design " + (g_root / "design.json").string() +
                " --out " + study2.string()) == 0,
            "second simulate should succeed");
  CHECK_MSG(slurp(study1 / "replicate_000.csv") ==
                slurp(study2 / "replicate_000.csv"),
            "same seed gives byte-identical replicates");
  CHECK_MSG(slurp(study1 / "truth.json") == slurp(study2 / "truth.json"),
            "same seed gives byte-identical truth");

  // The data CSV marks the zero-population cells as missing.
  CHECK_MSG(slurp(study1 / "replicate_000.csv").find("4,2,1,,0") !=
                std::string::npos,
            "zero-population cell encoded as missing");

  // --- fit the bundled 10-site dataset --------------------------------------
  const std::string smoke_args =
      " --data " + data_dir + "/smoke10_data.csv --adjacency " + data_dir +
      "/smoke10_adjacency.csv --iterations 200 --burn-in 100 --thin 5 "
      "--seed 99";
  const fs::path fit1 = g_root / "fit1";
  CHECK_MSG(run("fit --variant all --threads 3 --out " + fit1.string() +
                smoke_args) == 0,
            "fit --variant all should succeed");
  for (const char* v : {"mstcar", "separable", "stcar"}) {
    CHECK_MSG(fs::exists(fit1 / ("samples_" + std::string(v) + ".bin")),
              "samples store written");
    CHECK_MSG(fs::exists(fit1 / ("summary_" + std::string(v) + ".csv")),
              "summary written");
    CHECK_MSG(fs::exists(fit1 / ("sigma_eta_" + std::string(v) + ".csv")),
              "sigma summary written");
    CHECK_MSG(fs::exists(fit1 / ("trend_" + std::string(v) + ".csv")),
              "trend written");
  }
  const std::string dic_text = slurp(fit1 / "dic.json");
  CHECK_MSG(dic_text.find("mstcar") != std::string::npos &&
                dic_text.find("separable") != std::string::npos &&
                dic_text.find("stcar") != std::string::npos,
            "dic.json carries all three variants");

  // Determinism: a second identical fit produces identical stores.
  const fs::path fit2 = g_root / "fit2";
  CHECK_MSG(run("fit --variant all --out " + fit2.string() + smoke_args) == 0,
            "repeat fit should succeed");
  CHECK_MSG(slurp(fit1 / "samples_mstcar.bin") ==
                slurp(fit2 / "samples_mstcar.bin"),
            "same seed gives byte-identical samples");

  // Checkpoint resume: 200 iterations with a checkpoint at 150, resumed.
  const fs::path fit3 = g_root / "fit3";
  CHECK_MSG(run("fit --variant mstcar --checkpoint-every 150 --out " +
                fit3.string() + smoke_args) == 0,
            "checkpointed fit should succeed");
  CHECK_MSG(fs::exists(fit3 / "checkpoint_mstcar.json"), "checkpoint exists");
  const fs::path fit4 = g_root / "fit4";
  CHECK_MSG(run("fit --variant mstcar --resume " +
                (fit3 / "checkpoint_mstcar.json").string() + " --out " +
                fit4.string() + smoke_args) == 0,
            "resumed fit should succeed");
  CHECK_MSG(slurp(fit3 / "samples_mstcar.bin") ==
                slurp(fit4 / "samples_mstcar.bin"),
            "resume reproduces the uninterrupted samples");

  // --- summarize round trip --------------------------------------------------
  const fs::path resum = g_root / "resum";
  CHECK_MSG(run("summarize --samples " +
                (fit1 / "samples_mstcar.bin").string() + " --data " +
                data_dir + "/smoke10_data.csv --out " + resum.string()) == 0,
            "summarize should succeed");
  CHECK_MSG(slurp(fit1 / "summary_mstcar.csv") ==
                slurp(resum / "summary_mstcar.csv"),
            "re-summarizing the stored draws reproduces the summary");
  CHECK_MSG(slurp(fit1 / "trend_mstcar.csv") ==
                slurp(resum / "trend_mstcar.csv"),
            "re-summarizing reproduces the trend");

  // --- coverage over the small study ----------------------------------------
  const fs::path fits_root = g_root / "fits";
  fs::create_directories(fits_root);
  for (int ell = 0; ell < 2; ++ell) {
    char rep[16];
    std::snprintf(rep, sizeof(rep), "rep_%03d", ell);
    char data_name[32];
    std::snprintf(data_name, sizeof(data_name), "replicate_%03d.csv", ell);
    CHECK_MSG(run("fit --variant all --out " + (fits_root / rep).string() +
                  " --data " + (study1 / data_name).string() +
                  " --adjacency " + (g_root / "adj.csv").string() +
                  " --iterations 120 --burn-in 60 --thin 2 --seed 7") == 0,
              "replicate fit (all variants)");
  }
  const fs::path cov_out = g_root / "cov";
  CHECK_MSG(run("coverage --study " + study1.string() + " --fits " +
                fits_root.string() + " --out " + cov_out.string()) == 0,
            "coverage should succeed");
  CHECK_MSG(fs::exists(cov_out / "coverage.json"), "coverage json written");
  CHECK_MSG(fs::exists(cov_out / "records.csv"), "records csv written");
  CHECK_MSG(slurp(cov_out / "coverage.json").find("dic_comparisons") !=
                std::string::npos,
            "report carries dic comparisons");

  // A missing replicate fit is a config error naming the replicate.
  fs::remove_all(fits_root / "rep_001");
  const fs::path cov_bad = g_root / "cov_bad";
  CHECK_MSG(run("coverage --study " + study1.string() + " --fits " +
                fits_root.string() + " --out " + cov_bad.string()) == 2,
            "missing replicate fit should exit 2");

  // --- lockfile ---------------------------------------------------------------
  const fs::path locked = g_root / "locked";
  fs::create_directories(locked);
  write_file(locked / ".mstcar.lock", "held\n");
  CHECK_MSG(run("fit --variant mstcar --out " + locked.string() +
                smoke_args) == 2,
            "held lock should exit 2");

  if (failures == 0) {
    std::cout << "cli pipeline: all checks passed\n";
    fs::remove_all(g_root);
    return 0;
  }
  std::cerr << "cli pipeline: " << failures << " failure(s); outputs kept in "
            << g_root << "\n";
  return 1;
}
