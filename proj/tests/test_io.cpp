#include <catch2/catch.hpp>
#include <cstdio>
#include <filesystem>

#include "spinmem/io.hpp"

using namespace spinmem;

namespace {
struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() / "spinmem_io_test";
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};
}  // namespace

TEST_CASE("sweep CSV round trip") {
  TempDir tmp;
  const std::string p = tmp.file("sweep.csv");
  const std::vector<double> x{1.0, 2.5, 3.75};
  const std::vector<double> m{0.9, 0.5, 0.12345678901234567};
  const std::vector<double> s{0.01, 0.02, 0.03};
  io::write_sweep_csv(p, "tau_s", x, m, s);
  const auto cols = io::read_csv_columns(p, 3);
  REQUIRE(cols.size() == 3);
  CHECK(cols[0] == x);
  CHECK(cols[1] == m);
  CHECK(cols[2] == s);
}

TEST_CASE("matrix CSV layout") {
  TempDir tmp;
  const std::string p = tmp.file("map.csv");
  io::write_matrix_csv(p, "d\\e", {1.0, 2.0}, {10.0, 20.0, 30.0},
                       {1, 2, 3, 4, 5, 6});
  const auto cols = io::read_csv_columns(p, 4);
  REQUIRE(cols.size() == 4);
  CHECK(cols[0] == std::vector<double>{1.0, 2.0});
  CHECK(cols[2] == std::vector<double>{2.0, 5.0});
}

TEST_CASE("CSV reader rejects malformed input") {
  TempDir tmp;
  const std::string p = tmp.file("bad.csv");
  io::write_text(p, "a,b\n1,2\nx,y\n");
  CHECK_THROWS(io::read_csv_columns(p, 2));
  CHECK_THROWS(io::read_csv_columns(tmp.file("missing.csv"), 1));
  io::write_text(tmp.file("short.csv"), "a,b\n1\n");
  CHECK_THROWS(io::read_csv_columns(tmp.file("short.csv"), 2));
}

TEST_CASE("sidecar embeds seed and config echo") {
  TempDir tmp;
  const std::string artifact = tmp.file("result.csv");
  io::write_text(artifact, "x\n1\n");
  io::write_sidecar(artifact, json{{"seed", 42}, {"n_traj", 100}});
  std::ifstream in(artifact + ".meta.json");
  REQUIRE(in.good());
  json side;
  in >> side;
  CHECK(side.at("config").at("seed") == 42);
  CHECK(side.contains("commit"));
}
