#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>

#include "doctest.h"
#include "iepg/checkpoint.hpp"
#include "iepg/config.hpp"

using namespace iepg;
namespace fs = std::filesystem;

TEST_CASE("checkpoint round trip is bit-identical") {
  Rng rng(1);
  Checkpoint ck;
  ck.stage = "gec";
  ck.seed = 42;
  ck.config_json = "{\"frames\": 7}";
  ck.tensors.emplace_back("a.w", Tensor::randn(rng, Shape{3, 4}));
  ck.tensors.emplace_back("b.k", Tensor::randn(rng, Shape{2, 3, 3, 3}));
  ck.tensors.emplace_back("scalar", Tensor::scalar(-1.25e-300));

  const auto bytes = ck.serialize();
  Checkpoint back = Checkpoint::deserialize(bytes);
  CHECK(back.stage == "gec");
  CHECK(back.seed == 42);
  CHECK(back.config_json == ck.config_json);
  REQUIRE(back.tensors.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.tensors[i].first == ck.tensors[i].first);
    CHECK(back.tensors[i].second.shape() == ck.tensors[i].second.shape());
    for (std::int64_t j = 0; j < ck.tensors[i].second.size(); ++j)
      CHECK(back.tensors[i].second[j] == ck.tensors[i].second[j]);
  }
  CHECK(back.serialize() == bytes);

  const std::string path = (fs::temp_directory_path() / "iepg_ck_test.ckpt").string();
  ck.save(path);
  CHECK_FALSE(fs::exists(path + ".tmp"));
  Checkpoint loaded = Checkpoint::load(path);
  CHECK(loaded.serialize() == bytes);
  fs::remove(path);
}

TEST_CASE("restore matches by name and validates shapes") {
  Rng rng(2);
  Tensor w = Tensor::randn(rng, Shape{2, 2});
  ParamList params{{"layer.w", w}};
  Checkpoint ck;
  ck.put(params);
  for (auto& v : w.data()) v = 0.0;
  ck.restore(params);
  CHECK(w[0] != 0.0);

  ParamList missing{{"other.w", w}};
  CHECK_THROWS_AS(ck.restore(missing), std::runtime_error);
  ParamList wrong{{"layer.w", Tensor(Shape{3, 2}, 0.0)}};
  CHECK_THROWS_AS(ck.restore(wrong), std::runtime_error);
}

TEST_CASE("bad magic and truncation are rejected") {
  std::vector<std::uint8_t> junk{'N', 'O', 'P', 'E', 1, 0, 0, 0};
  CHECK_THROWS_AS(Checkpoint::deserialize(junk), std::runtime_error);
  Rng rng(3);
  Checkpoint ck;
  ck.stage = "pis";
  ck.tensors.emplace_back("x", Tensor::randn(rng, Shape{4}));
  auto bytes = ck.serialize();
  bytes.resize(bytes.size() - 5);
  CHECK_THROWS_AS(Checkpoint::deserialize(bytes), std::runtime_error);
}

TEST_CASE("run config parses, rejects unknown keys, echoes canonically") {
  RunConfig c = RunConfig::from_json(R"({"seed": 9, "variant": "B", "frames": 5, "lambda_style": 250.0})");
  CHECK(c.seed == 9);
  CHECK(c.depth() == 4);
  CHECK(c.frames == 5);
  CHECK(c.weights.style == 250.0);
  CHECK(c.weights.img == 5.0);  // untouched default

  CHECK_THROWS_AS(RunConfig::from_json(R"({"sead": 1})"), std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"variant": "X"})"), std::invalid_argument);
  CHECK_THROWS_AS(RunConfig::from_json(R"({"frames": 1})"), std::invalid_argument);

  RunConfig echo = RunConfig::from_json(c.to_json());
  CHECK(echo.to_json() == c.to_json());
}

TEST_CASE("IEPG_SEED environment override applies to file configs") {
  const std::string path = (fs::temp_directory_path() / "iepg_cfg_test.json").string();
  {
    std::ofstream f(path);
    f << R"({"seed": 5})";
  }
  setenv("IEPG_SEED", "1234", 1);
  RunConfig c = RunConfig::from_json_file(path);
  CHECK(c.seed == 1234);
  unsetenv("IEPG_SEED");
  RunConfig c2 = RunConfig::from_json_file(path);
  CHECK(c2.seed == 5);
  fs::remove(path);
}
