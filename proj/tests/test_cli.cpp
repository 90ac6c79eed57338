#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kCli = DLSA_CLI_PATH;

int run(const std::string& args) {
    const int status = std::system((kCli + " " + args + " > /dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_lines(const std::string& text) {
    std::size_t n = 0;
    for (char c : text)
        if (c == '\n') ++n;
    return n;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, sep)) out.push_back(tok);
    return out;
}

fs::path temp_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST(CliGenData, CountContractAndDeterminism) {
    fs::path dir = temp_dir("dlsa_cli_gen");
    const std::string args = "gen-data --classes 3 --per-class 200 --dim 8 --rotation 45 "
                             "--translate 3 --seed 7 --out " +
                             dir.string();
    ASSERT_EQ(run(args), 0);
    const std::string source = slurp(dir / "source.csv");
    const std::string target = slurp(dir / "target.csv");
    EXPECT_EQ(count_lines(source), 600u);
    EXPECT_EQ(count_lines(target), 600u);
    EXPECT_TRUE(fs::exists(dir / "manifest.txt"));

    ASSERT_EQ(run(args), 0);
    EXPECT_EQ(slurp(dir / "source.csv"), source);
    EXPECT_EQ(slurp(dir / "target.csv"), target);
    fs::remove_all(dir);
}

TEST(CliGenData, PerClassOneIsUsageError) {
    fs::path dir = temp_dir("dlsa_cli_gen_bad");
    EXPECT_EQ(run("gen-data --per-class 1 --out " + dir.string()), 2);
    fs::remove_all(dir);
}

TEST(CliTrain, SourceOnlyZeroesAlignmentColumns) {
    fs::path dir = temp_dir("dlsa_cli_sourceonly");
    ASSERT_EQ(run("train --synthetic --per-class 30 --dim 4 --hidden 8,4 --iters 20 "
                  "--warmup 5 --variant source_only --seed 1 --quiet --out " +
                  dir.string()),
              0);
    std::ifstream report(dir / "report.csv");
    std::string line;
    std::getline(report, line);  // header
    auto header = split(line, ',');
    ASSERT_GE(header.size(), 5u);
    EXPECT_EQ(header[2], "L_M");
    EXPECT_EQ(header[3], "L_C");
    while (std::getline(report, line)) {
        auto cells = split(line, ',');
        EXPECT_EQ(std::stod(cells[2]), 0.0);
        EXPECT_EQ(std::stod(cells[3]), 0.0);
    }
    fs::remove_all(dir);
}

TEST(CliTrain, AlphaOutOfRangeIsUsageError) {
    fs::path dir = temp_dir("dlsa_cli_alpha");
    EXPECT_EQ(run("train --synthetic --alpha 1.5 --iters 5 --warmup 0 --out " + dir.string()), 2);
    fs::remove_all(dir);
}

TEST(CliTrain, UnreadableInputIsInputError) {
    fs::path dir = temp_dir("dlsa_cli_missing");
    EXPECT_EQ(run("train --source /nonexistent/s.csv --target /nonexistent/t.csv --out " +
                  dir.string()),
              1);
    fs::remove_all(dir);
}

TEST(CliTrain, ReportIsByteIdenticalAcrossRuns) {
    fs::path d1 = temp_dir("dlsa_cli_det1");
    fs::path d2 = temp_dir("dlsa_cli_det2");
    const std::string base = "train --synthetic --per-class 30 --dim 4 --hidden 8,4 --iters 25 "
                             "--warmup 5 --seed 9 --quiet --out ";
    ASSERT_EQ(run(base + d1.string()), 0);
    ASSERT_EQ(run(base + d2.string()), 0);
    EXPECT_EQ(slurp(d1 / "report.csv"), slurp(d2 / "report.csv"));
    EXPECT_EQ(slurp(d1 / "diagnostics.csv"), slurp(d2 / "diagnostics.csv"));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST(CliTrain, ReportTotalRecombines) {
    fs::path dir = temp_dir("dlsa_cli_recombine");
    ASSERT_EQ(run("train --synthetic --per-class 30 --dim 4 --hidden 8,4 --iters 20 "
                  "--warmup 5 --alpha 0.2 --seed 2 --quiet --out " +
                  dir.string()),
              0);
    std::ifstream report(dir / "report.csv");
    std::string line;
    std::getline(report, line);
    while (std::getline(report, line)) {
        auto cells = split(line, ',');
        const double l_s = std::stod(cells[1]), l_m = std::stod(cells[2]),
                     l_c = std::stod(cells[3]), total = std::stod(cells[4]);
        EXPECT_DOUBLE_EQ(total, l_s + 0.8 * l_m + 0.2 * l_c);
    }
    fs::remove_all(dir);
}

TEST(CliEval, TrainedModelScoresOwnSource) {
    fs::path data = temp_dir("dlsa_cli_eval_data");
    fs::path rundir = temp_dir("dlsa_cli_eval_run");
    ASSERT_EQ(run("gen-data --classes 3 --per-class 60 --dim 4 --rotation 30 --translate 1 "
                  "--std 0.3 --seed 5 --out " +
                  data.string()),
              0);
    ASSERT_EQ(run("train --source " + (data / "source.csv").string() + " --target " +
                  (data / "target.csv").string() +
                  " --hidden 16,4 --iters 800 --warmup 800 --lr 0.1 --batch 180 "
                  "--variant source_only --seed 4 --quiet --out " +
                  rundir.string()),
              0);

    const std::string cmd = kCli + " eval --model " + (rundir / "model.ckpt").string() +
                            " --data " + (data / "source.csv").string() + " > " +
                            (rundir / "eval.out").string() + " 2>&1";
    ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
    const std::string out = slurp(rundir / "eval.out");
    ASSERT_EQ(out.rfind("accuracy=", 0), 0u);
    EXPECT_GE(std::stod(out.substr(9)), 0.99);

    fs::remove_all(data);
    fs::remove_all(rundir);
}

TEST(CliEval, DimensionMismatchIsInputError) {
    fs::path data = temp_dir("dlsa_cli_eval_mismatch");
    fs::path rundir = temp_dir("dlsa_cli_eval_mismatch_run");
    ASSERT_EQ(run("gen-data --classes 2 --per-class 20 --dim 4 --seed 1 --out " + data.string()),
              0);
    ASSERT_EQ(run("train --synthetic --classes 2 --per-class 20 --dim 6 --hidden 8,4 "
                  "--iters 5 --warmup 0 --seed 1 --quiet --out " +
                  rundir.string()),
              0);
    EXPECT_EQ(run("eval --model " + (rundir / "model.ckpt").string() + " --data " +
                  (data / "source.csv").string()),
              1);
    fs::remove_all(data);
    fs::remove_all(rundir);
}

TEST(CliAblate, RowCountAndDeterminism) {
    fs::path d1 = temp_dir("dlsa_cli_ablate1");
    fs::path d2 = temp_dir("dlsa_cli_ablate2");
    const std::string base = "ablate --synthetic --per-class 25 --dim 4 --hidden 8,4 "
                             "--iters 15 --warmup 5 --seeds 0 1 --quiet --out ";
    ASSERT_EQ(run(base + d1.string()), 0);
    const std::string csv = slurp(d1 / "ablation.csv");
    EXPECT_EQ(count_lines(csv), 1u + 4u * 2u + 4u);  // header + per-seed rows + means

    ASSERT_EQ(run(base + d2.string()), 0);
    EXPECT_EQ(slurp(d2 / "ablation.csv"), csv);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST(CliConfigFile, FlagsOverrideConfigFile) {
    fs::path dir = temp_dir("dlsa_cli_config");
    std::ofstream(dir / "run.cfg") << "[train]\niters=7\nwarmup=2\n";
    ASSERT_EQ(run("train --synthetic --per-class 20 --dim 4 --hidden 8,4 --seed 3 --quiet "
                  "--config " +
                  (dir / "run.cfg").string() + " --out " + dir.string()),
              0);
    // 7 iterations from the config file.
    EXPECT_EQ(count_lines(slurp(dir / "report.csv")), 8u);

    ASSERT_EQ(run("train --synthetic --per-class 20 --dim 4 --hidden 8,4 --seed 3 --iters 4 "
                  "--warmup 2 --quiet --config " +
                  (dir / "run.cfg").string() + " --out " + dir.string()),
              0);
    EXPECT_EQ(count_lines(slurp(dir / "report.csv")), 5u);
    fs::remove_all(dir);
}
