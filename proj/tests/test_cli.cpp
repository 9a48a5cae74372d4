#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "oracles.hpp"
#include "retina/code.hpp"
#include "retina/image.hpp"

namespace {

const std::string kBinary = RETINA_CODEC_BIN;
const std::filesystem::path kData = RETINA_TEST_DATA;

struct Run {
  int status = -1;
  std::string out;
};

Run run(const std::string& args) {
  Run r;
  const std::string cmd = kBinary + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double field(const std::string& out, const std::string& key) {
  const auto at = out.find(key + "=");
  if (at == std::string::npos) return std::nan("");
  const std::string v = out.substr(at + key.size() + 1, out.find_first_of(" \n", at) - at - key.size() - 1);
  return v == "inf" ? std::numeric_limits<double>::infinity() : std::stod(v);
}

class Cli : public ::testing::Test {
 protected:
  oracle::TempDir dir{"cli"};
  std::string cache() const { return " --cache " + (dir.path / "cache").string(); }
  std::string path(const char* name) const { return (dir.path / name).string(); }
};

}  // namespace

TEST_F(Cli, EncodeWritesStreamWithGridCellCount) {
  const auto r = run("encode " + (kData / "camera_33.pgm").string() + " -o " + path("c.roc"));
  ASSERT_EQ(r.status, 0) << r.out;
  const auto code = retina::deserialize(slurp(path("c.roc")));
  EXPECT_EQ(code.header.total_cells, retina::grid_spec(33, 6, {}).total_cells);
  EXPECT_EQ(code.retained(), code.header.total_cells);
}

TEST_F(Cli, EncodeIsDeterministicAcrossRunsAndThreads) {
  const auto in = (kData / "coins_33.pgm").string();
  ASSERT_EQ(run("--threads 1 encode " + in + " -o " + path("a.roc")).status, 0);
  ASSERT_EQ(run("--threads 4 encode " + in + " -o " + path("b.roc")).status, 0);
  ASSERT_EQ(run("encode " + in + " -o " + path("c.roc")).status, 0);
  EXPECT_EQ(slurp(path("a.roc")), slurp(path("b.roc")));
  EXPECT_EQ(slurp(path("a.roc")), slurp(path("c.roc")));
}

TEST_F(Cli, DualRoundTripAndDominance) {
  const auto in = (kData / "camera_33.pgm").string();
  ASSERT_EQ(run("encode " + in + " -o " + path("c.roc")).status, 0);

  const auto missing = run("decode " + path("c.roc") + " --mode dual" + cache());
  EXPECT_EQ(missing.status, 6);
  EXPECT_NE(missing.out.find("build-dual"), std::string::npos) << missing.out;

  const auto built = run("build-dual --size 33 --block-size 64" + cache());
  ASSERT_EQ(built.status, 0) << built.out;
  EXPECT_NE(built.out.find("built"), std::string::npos);
  EXPECT_NE(run("build-dual " + path("c.roc") + cache()).out.find("reused"), std::string::npos);

  const auto full = run("decode " + path("c.roc") + " --mode dual -o " + path("d.pgm") + " --reference " + in + cache());
  ASSERT_EQ(full.status, 0) << full.out;
  EXPECT_GE(field(full.out, "psnr_db"), 200.0) << full.out;
  EXPECT_EQ(field(full.out, "N_s"), static_cast<double>(retina::grid_spec(33, 6, {}).total_cells));

  const auto sd = run("decode " + path("c.roc") + " --fraction 0.05 --reference " + in);
  const auto dd = run("decode " + path("c.roc") + " --mode dual --fraction 0.05 --reference " + in + cache());
  ASSERT_EQ(sd.status, 0) << sd.out;
  ASSERT_EQ(dd.status, 0) << dd.out;
  EXPECT_GE(field(dd.out, "psnr_db"), field(sd.out, "psnr_db"));
  EXPECT_NEAR(field(sd.out, "fraction"), 0.05, 0.001);
}

TEST_F(Cli, DecodeBuildsDualOnRequest) {
  const auto in = (kData / "moon_33.pgm").string();
  ASSERT_EQ(run("encode " + in + " --layers 4 -o " + path("c.roc")).status, 0);
  const auto r = run("decode " + path("c.roc") + " --mode dual --build-dual --block-size 32 --reference " + in + cache());
  ASSERT_EQ(r.status, 0) << r.out;
  EXPECT_GE(field(r.out, "psnr_db"), 200.0);
}

TEST_F(Cli, AnalyzeWritesKeyValueReport) {
  const auto r = run("analyze --size 33 --trials 1 -o " + path("r.txt"));
  ASSERT_EQ(r.status, 0) << r.out;
  std::istringstream in(slurp(path("r.txt")));
  std::map<std::string, double> kv;
  std::string k;
  double v;
  while (in >> k >> v) kv[k] = v;
  EXPECT_EQ(kv["trials"], 1.0);
  EXPECT_GT(kv["alpha"], 0.0);
  EXPECT_LE(kv["alpha"], kv["empirical_min"]);
  EXPECT_LE(kv["empirical_max"], kv["beta"]);
  EXPECT_LT(kv["condition_estimate"], 100.0);
  EXPECT_EQ(kv["condition_reference_257"], 16.0);
}

TEST_F(Cli, PsnrCommand) {
  retina::write_pgm(path("black.pgm"), retina::Image(8, 0.0));
  retina::write_pgm(path("white.pgm"), retina::Image(8, 255.0));
  auto r = run("psnr " + path("black.pgm") + " " + path("white.pgm"));
  ASSERT_EQ(r.status, 0);
  EXPECT_NEAR(std::stod(r.out), 0.0, 1e-9);
  r = run("psnr " + path("black.pgm") + " " + path("black.pgm"));
  EXPECT_EQ(r.out, "inf\n");
  retina::write_pgm(path("small.pgm"), retina::Image(4, 0.0));
  EXPECT_EQ(run("psnr " + path("black.pgm") + " " + path("small.pgm")).status, 2);
}

TEST_F(Cli, ErrorsMapToDistinctExitCodes) {
  EXPECT_EQ(run("").status, 2);
  EXPECT_EQ(run("encode").status, 2);
  EXPECT_EQ(run("encode nothing.pgm -o x.roc").status, 2);
  EXPECT_EQ(run("encode " + (kData / "camera_33.pgm").string() + " --fraction 0 -o " + path("x.roc")).status, 2);
  EXPECT_EQ(run("encode " + (kData / "camera_33.pgm").string() + " --layers 9 -o " + path("x.roc")).status, 2);
  EXPECT_EQ(run("build-dual --size 33 --block-size 8" + cache()).status, 2);

  std::ofstream(path("rect.pgm"), std::ios::binary) << "P5\n3 2\n255\n" << std::string(6, 'a');
  EXPECT_EQ(run("encode " + path("rect.pgm") + " -o " + path("x.roc")).status, 3);
  std::ofstream(path("junk.roc"), std::ios::binary) << "ROC1 this is not a stream";
  EXPECT_EQ(run("decode " + path("junk.roc")).status, 3);
}
