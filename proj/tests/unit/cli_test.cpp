#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string g_binary;
const std::string kWorkDir = "/tmp/mtlink_cli_test";

int run(const std::string& args, std::string* stdout_text = nullptr) {
  const std::string out_file = kWorkDir + "/stdout.txt";
  const std::string cmd = g_binary + " " + args + " > " + out_file + " 2>" + kWorkDir +
                          "/stderr.txt";
  const int raw = std::system(cmd.c_str());
  if (stdout_text != nullptr) {
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    *stdout_text = ss.str();
  }
  return WEXITSTATUS(raw);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli pipeline end to end") {
  fs::remove_all(kWorkDir);
  fs::create_directories(kWorkDir);

  // Unknown flag: usage error, exit 1.
  CHECK(run("generate --no-such-flag") == 1);
  CHECK(run("") == 1);

  // generate
  CHECK(run("generate --out " + kWorkDir + " --users 12 --seq-len-min-a 10 --seq-len-max-a 14"
            " --seq-len-min-b 10 --seq-len-max-b 14 --cooccur 0.7 --noise 0.1 --seed 5") == 0);
  CHECK(fs::exists(kWorkDir + "/checkins_a.csv"));

  // Determinism: regenerate into a second directory, byte-equal.
  const std::string gen2 = kWorkDir + "/again";
  fs::create_directories(gen2);
  CHECK(run("generate --out " + gen2 + " --users 12 --seq-len-min-a 10 --seq-len-max-a 14"
            " --seq-len-min-b 10 --seq-len-max-b 14 --cooccur 0.7 --noise 0.1 --seed 5") == 0);
  CHECK(slurp(kWorkDir + "/checkins_a.csv") == slurp(gen2 + "/checkins_a.csv"));

  // preprocess
  const std::string dataset = kWorkDir + "/dataset.jsonl";
  CHECK(run("preprocess --checkins-a " + kWorkDir + "/checkins_a.csv --checkins-b " + kWorkDir +
            "/checkins_b.csv --identity-map " + kWorkDir + "/identity_map.csv --out " + dataset +
            " --cell 0.05 --min-len 3 --neg-ratio 2 --fractions 0.5 0.25 0.25 --seed 7") == 0);
  CHECK(fs::exists(dataset));

  // Bad input: missing file is a validation-style failure (exit 2: I/O).
  CHECK(run("preprocess --checkins-a /nope.csv --checkins-b /nope.csv --identity-map /nope.csv") ==
        2);

  // train with a config file; CLI flags override it.
  const std::string config = kWorkDir + "/train.cfg";
  {
    std::ofstream out(config);
    out << "# toy settings\n";
    out << "d=16\n";
    out << "heads=2\n";
    out << "ft_depth=1\n";
    out << "fm_depth=1\n";
    out << "max_epochs=3\n";
    out << "patience=10\n";
    out << "batch_size=8\n";
    out << "dropout=0.0\n";
    out << "seed=11\n";
    out << "num_threads=2\n";
  }
  const std::string ckpt = kWorkDir + "/model.mtlk";
  std::string train_out;
  CHECK(run("train --dataset " + dataset + " --out " + ckpt + " --config " + config +
            " --max-epochs 2", &train_out) == 0);
  CHECK(fs::exists(ckpt));
  {
    const json j = json::parse(train_out);
    CHECK(j["epochs_run"].get<int>() == 2);  // flag overrode the config file
  }

  // evaluate: stored validation metrics reprint bit-exactly.
  std::string eval_out;
  CHECK(run("evaluate --checkpoint " + ckpt + " --dataset " + dataset + " --split val",
            &eval_out) == 0);
  {
    const json j = json::parse(eval_out);
    CHECK(j["metrics"].dump() == j["stored_val_metrics"].dump());
  }

  // evaluate on test + mask plan dump.
  const std::string plans = kWorkDir + "/plans.jsonl";
  CHECK(run("evaluate --checkpoint " + ckpt + " --dataset " + dataset +
            " --split test --dump-mask-plans " + plans) == 0);
  {
    std::ifstream in(plans);
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
      const json j = json::parse(line);
      CHECK(j.contains("pair_id"));
      CHECK((j["platform"] == "A" || j["platform"] == "B"));
      CHECK(j["indices"].is_array());
      ++lines;
    }
    CHECK(lines > 0);
  }

  // export-attention writes 3 CSVs and one SVG.
  const std::string prefix = kWorkDir + "/viz_";
  CHECK(run("export-attention --checkpoint " + ckpt + " --dataset " + dataset +
            " --pair-id 0 --out " + prefix) == 0);
  CHECK(fs::exists(prefix + "map_ab.csv"));
  CHECK(fs::exists(prefix + "map_ba.csv"));
  CHECK(fs::exists(prefix + "cooccurrence.csv"));
  CHECK(fs::exists(prefix + "heatmaps.svg"));

  // Out-of-range pair id: validation error.
  CHECK(run("export-attention --checkpoint " + ckpt + " --dataset " + dataset +
            " --pair-id 99999 --out " + prefix) == 1);

  // gradcheck at the toy scale.
  std::string gc_out;
  CHECK(run("gradcheck --d 8 --k 6 --heads 2 --batch 2 --seed 3", &gc_out) == 0);
  CHECK(gc_out.find("max_rel_err") != std::string::npos);
  CHECK(gc_out.find("PASS") != std::string::npos);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: cli_test <path-to-mtlink-binary> [doctest args]\n");
    return 1;
  }
  g_binary = argv[1];
  doctest::Context ctx;
  ctx.applyCommandLine(argc - 1, argv + 1);
  return ctx.run();
}
