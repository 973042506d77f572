#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>

#include "ga2c/checkpoint.hpp"
#include "ga2c/dataset.hpp"
#include "synthetic.hpp"

using namespace ga2c;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "ga2c_io_test";
  fs::create_directories(dir);
  return dir;
}

bool graphs_equal(const Graph& a, const Graph& b) {
  return a.num_features == b.num_features && a.num_classes == b.num_classes &&
         a.adj == b.adj && a.features == b.features && a.labels == b.labels &&
         a.train_idx == b.train_idx && a.val_idx == b.val_idx && a.test_idx == b.test_idx;
}

}  // namespace

TEST_CASE("checkpoint round trip is bit-exact") {
  Checkpoint ckpt;
  ckpt.kind = "policy";
  ckpt.meta = {{"tau", 1.0}, {"alpha_n", 0.5}, {"note", "x"}};
  Rng rng(3);
  std::vector<double> vals;
  for (int i = 0; i < 64; ++i) vals.push_back((rng.uniform() - 0.5) * std::pow(10.0, (i % 13) - 6));
  vals.push_back(0.1);
  vals.push_back(1.0 / 3.0);
  vals.push_back(-0.0);
  vals.push_back(1e-300);
  vals.push_back(12345678.91011121);
  Tensor t({69}, vals);
  ckpt.add("w", t);
  ckpt.add("b", Tensor({2, 2}, {1.5, -2.25, 3.125, 0.0078125}));

  auto path = (temp_dir() / "ckpt.json").string();
  save_checkpoint(ckpt, path);
  Checkpoint back = load_checkpoint(path);
  CHECK(back.kind == "policy");
  CHECK(back.meta["tau"] == 1.0);
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.get("w").shape() == Shape{69});
  CHECK(back.get("w").values() == vals);  // bitwise
  CHECK(back.get("b").values() == std::vector<double>{1.5, -2.25, 3.125, 0.0078125});

  // a second save of the loaded checkpoint is byte-identical
  auto path2 = (temp_dir() / "ckpt2.json").string();
  save_checkpoint(back, path2);
  CHECK(read_file(path) == read_file(path2));

  CHECK_THROWS_AS(load_checkpoint((temp_dir() / "missing.json").string()), ConfigError);
  CHECK_THROWS_AS(back.get("nope"), ValidationError);
}

TEST_CASE("canonical json round trip") {
  Graph g = synthetic::random_graph(17, 9, 3, 0.2, 3, 41);
  auto path = (temp_dir() / "toy.json").string();
  save_canonical_json(g, path);
  DatasetLoadInfo info;
  Graph back = load_canonical_json(path, &info);
  CHECK(graphs_equal(g, back));
  CHECK(info.raw_edge_rows == g.num_edges());
  CHECK(info.duplicate_pairs == 0);
}

TEST_CASE("canonical -> content/cites -> canonical preserves the graph") {
  Graph g = synthetic::random_graph(23, 7, 4, 0.15, 2, 43);
  auto stem = (temp_dir() / "rt").string();
  save_content_cites(g, stem);
  DatasetLoadInfo info;
  Graph back = load_content_cites(stem, &info);
  CHECK(graphs_equal(g, back));
  CHECK(info.skipped_unknown_ids == 0);
}

TEST_CASE("content loader errors carry line numbers") {
  auto dir = temp_dir();
  write_file_atomic((dir / "bad.content").string(), "n0\t1\t0\tA\nn1\t1\tB\n");
  write_file_atomic((dir / "bad.cites").string(), "");
  try {
    load_content_cites((dir / "bad").string());
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);  // offending line
  }

  write_file_atomic((dir / "badval.content").string(), "n0\t1\tzz\tA\n");
  write_file_atomic((dir / "badval.cites").string(), "");
  CHECK_THROWS_AS(load_content_cites((dir / "badval").string()), ParseError);
}

TEST_CASE("unknown cite ids are skipped and counted") {
  auto dir = temp_dir();
  write_file_atomic((dir / "u.content").string(), "a\t1\t0\tX\nb\t0\t1\tY\nc\t1\t1\tX\n");
  write_file_atomic((dir / "u.cites").string(), "a\tb\nb\tmissing\nc\ta\nghost\tc\n");
  DatasetLoadInfo info;
  Graph g = load_content_cites((dir / "u").string(), &info);
  CHECK(g.num_nodes() == 3);
  CHECK(info.raw_edge_rows == 4);
  CHECK(info.skipped_unknown_ids == 2);
  CHECK(g.num_edges() == 2);
  // labels map lexicographically: X -> 0, Y -> 1
  CHECK(g.labels == std::vector<int>{0, 1, 0});
}

TEST_CASE("split validation") {
  auto dir = temp_dir();
  nlohmann::json j = {{"num_nodes", 2},
                      {"num_features", 2},
                      {"num_classes", 2},
                      {"edges", {{0, 1}}},
                      {"features", {{0}, {1}}},
                      {"labels", {0, 1}},
                      {"splits", {{"train", {0}}, {"val", {1}}, {"test", {5}}}}};
  auto path = (dir / "split.json").string();
  write_file_atomic(path, j.dump());
  CHECK_THROWS_AS(load_canonical_json(path), ValidationError);
}

TEST_CASE("dataset resolution") {
  CHECK_THROWS_AS(load_dataset(temp_dir().string(), "no_such_dataset"), ConfigError);
}

// Table-level statistics of the public citation datasets; runs only when the
// real files are available (GA2C_DATA_DIR or ./data).
TEST_CASE("citation dataset statistics") {
  const char* env = std::getenv("GA2C_DATA_DIR");
  std::string dir = env ? env : "data";
  if (!fs::exists(fs::path(dir) / "cora.json") && !fs::exists(fs::path(dir) / "cora.content")) {
    WARN("cora not present under '" << dir << "'; skipping dataset statistics checks");
    return;
  }
  DatasetLoadInfo info;
  Graph cora = load_dataset(dir, "cora", &info);
  CHECK(cora.num_nodes() == 2708);
  CHECK(cora.num_features == 1433);
  CHECK(cora.num_classes == 7);
  CHECK(info.raw_edge_rows == 5429);
  if (fs::exists(fs::path(dir) / "citeseer.json")) {
    Graph citeseer = load_dataset(dir, "citeseer");
    CHECK(citeseer.num_nodes() == 3327);
    CHECK(citeseer.num_features == 3703);
    CHECK(citeseer.num_classes == 6);
  }
}
