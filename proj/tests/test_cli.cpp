#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "dspc/data_io.hpp"

namespace fs = std::filesystem;

namespace {

const std::string kBin = DSPC_CLI_PATH;
const std::string kRoot = "/tmp/dspc_cli";

int run_cli(const std::string& args) {
  std::string cmd = kBin + " " + args + " >" + kRoot + "/stdout.txt 2>" +
                    kRoot + "/stderr.txt";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_config(const std::string& path, const std::string& out_dir,
                  const std::string& extra = "") {
  std::ofstream f(path);
  f << "# tiny smoke pipeline\n"
       "dataset = blob_images\n"
       "n = 32\nk = 2\nimage_h = 8\nimage_w = 8\n"
       "arch = micro\nd = 4\nhead_widths = 12,8,6\n"
       "m = 8\nk_nn = 2\nepochs_pretrain = 1\nepochs_joint = 1\n"
       "head_warmup_steps = 20\neval_batch = 32\nseed = 3\n"
       "out = " << out_dir << "\n"
    << extra;
}

}  // namespace

TEST_CASE("the command line drives the full pipeline with documented exit codes") {
  fs::remove_all(kRoot);
  fs::create_directories(kRoot);
  std::string cfg = kRoot + "/run.cfg";
  std::string out = kRoot + "/out";
  write_config(cfg, out);

  SUBCASE("a subcommand is required") { CHECK(run_cli("") != 0); }

  SUBCASE("unknown flags fail") { CHECK(run_cli("pretrain --frobnicate") != 0); }

  SUBCASE("missing config file exits 2") {
    CHECK(run_cli("pretrain --config /tmp/absent_dspc.cfg") == 2);
  }

  SUBCASE("a bad config key exits 2 and is named on stderr") {
    std::string bad = kRoot + "/bad.cfg";
    std::ofstream(bad) << "warp_drive = on\n";
    CHECK(run_cli("pretrain --config " + bad) == 2);
    CHECK(slurp(kRoot + "/stderr.txt").find("warp_drive") != std::string::npos);
  }

  SUBCASE("train before pretrain exits 2; the full pipeline then runs clean") {
    CHECK(run_cli("train --config " + cfg) == 2);
    CHECK(run_cli("pretrain --config " + cfg) == 0);
    CHECK(fs::exists(out + "/pretrain.dspc"));
    CHECK(run_cli("train --config " + cfg) == 0);
    CHECK(run_cli("eval --config " + cfg) == 0);
    CHECK(fs::exists(out + "/eval.csv"));
    CHECK(run_cli("embed --config " + cfg) == 0);
    CHECK(fs::exists(out + "/embeddings.csv"));
  }

  SUBCASE("a missing checkpoint path exits 3") {
    CHECK(run_cli("eval --config " + cfg + " --checkpoint /tmp/no_such.dspc") == 3);
  }

  SUBCASE("evaluating an unlabeled dataset exits 3") {
    std::vector<uint8_t> pixels(static_cast<size_t>(16) * 8 * 8, 64);
    dspc::io::write_idx_images(kRoot + "/img.idx", 16, 8, 8, pixels);
    std::string cfg2 = kRoot + "/idx.cfg";
    std::ofstream(cfg2) << "dataset = idx\nimages_path = " << kRoot
                        << "/img.idx\nk = 2\narch = micro\nd = 4\nm = 8\n"
                           "epochs_pretrain = 1\nout = " << kRoot << "/out_idx\n";
    CHECK(run_cli("pretrain --config " + cfg2) == 0);
    CHECK(run_cli("eval --config " + cfg2) == 3);
  }

  SUBCASE("seed and out overrides are honored and runs are reproducible") {
    std::string o1 = kRoot + "/ov1", o2 = kRoot + "/ov2", o3 = kRoot + "/ov3";
    CHECK(run_cli("pretrain --config " + cfg + " --out " + o1) == 0);
    CHECK(run_cli("pretrain --config " + cfg + " --out " + o2) == 0);
    CHECK(run_cli("pretrain --config " + cfg + " --out " + o3 + " --seed 77") == 0);
    CHECK(slurp(o1 + "/pretrain.dspc") == slurp(o2 + "/pretrain.dspc"));
    CHECK(slurp(o1 + "/pretrain_log.csv") == slurp(o2 + "/pretrain_log.csv"));
    CHECK(slurp(o1 + "/pretrain.dspc") != slurp(o3 + "/pretrain.dspc"));
  }

  SUBCASE("results do not depend on the thread cap") {
    std::string t1 = kRoot + "/thr1", t2 = kRoot + "/thr2";
    std::string base = "pretrain --config " + cfg + " --out ";
    int rc1 = std::system(("DEEPSPEC_THREADS=1 " + kBin + " " + base + t1 +
                           " >/dev/null 2>&1").c_str());
    int rc2 = std::system(("DEEPSPEC_THREADS=4 " + kBin + " " + base + t2 +
                           " >/dev/null 2>&1").c_str());
    REQUIRE(WEXITSTATUS(rc1) == 0);
    REQUIRE(WEXITSTATUS(rc2) == 0);
    CHECK(slurp(t1 + "/pretrain.dspc") == slurp(t2 + "/pretrain.dspc"));
  }

  SUBCASE("numeric divergence surfaces as exit 4") {
    std::string bad = kRoot + "/div.cfg";
    write_config(bad, kRoot + "/out_div", "lr_pretrain = 1e150\n");
    CHECK(run_cli("pretrain --config " + bad) == 4);
  }
}
