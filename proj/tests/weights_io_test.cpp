#include <doctest.h>

#include <fstream>

#include <nlohmann/json.hpp>

#include "promptseg/errors.hpp"
#include "promptseg/weights_io.hpp"
#include "test_support.hpp"

using namespace promptseg;
namespace fs = std::filesystem;

TEST_SUITE("weights_io") {
  TEST_CASE("round trip is exact") {
    testing::TempDir dir("w");
    const Network net = Network::initialized(NetworkSpec::fully_supervised({10, 10, 6}), 4);
    save_weights(net, dir.path() / "fsc.json");
    CHECK(fs::file_size(dir.path() / "fsc.f64") == net.parameter_count() * 8);
    CHECK(load_weights(dir.path() / "fsc.json") == net);
    CHECK(load_weights(dir.path() / "fsc.json", Head::Flatten) == net);
    CHECK(load_weights(dir.path() / "fsc.json", net.spec()) == net);
  }

  TEST_CASE("manifest lists names and shapes") {
    testing::TempDir dir("w");
    save_weights(Network(NetworkSpec::weakly_supervised()), dir.path() / "m.json");
    std::ifstream in(dir.path() / "m.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["dtype"] == "f64le");
    CHECK(j["data"] == "m.f64");
    CHECK(j["parameters"].size() == 10);
    CHECK(j["parameters"][0]["name"] == "conv1.weight");
    CHECK(j["spec"]["head"] == "global_average_pool");
  }

  TEST_CASE("corrupted blob fails the checksum") {
    testing::TempDir dir("w");
    save_weights(Network::initialized(NetworkSpec::weakly_supervised(), 2), dir.path() / "m.json");
    {
      std::fstream f(dir.path() / "m.f64", std::ios::binary | std::ios::in | std::ios::out);
      f.seekp(100);
      f.put('\x5a');
    }
    CHECK_THROWS_AS(load_weights(dir.path() / "m.json"), FormatError);
  }

  TEST_CASE("truncated blob is a format error") {
    testing::TempDir dir("w");
    save_weights(Network::initialized(NetworkSpec::weakly_supervised(), 2), dir.path() / "m.json");
    fs::resize_file(dir.path() / "m.f64", 64);
    CHECK_THROWS_AS(load_weights(dir.path() / "m.json"), FormatError);
  }

  TEST_CASE("loading into the wrong head is rejected") {
    testing::TempDir dir("w");
    save_weights(Network(NetworkSpec::weakly_supervised()), dir.path() / "wsc.json");
    CHECK_THROWS_AS(load_weights(dir.path() / "wsc.json", Head::Flatten), ValidationError);
    CHECK_THROWS_AS(load_weights(dir.path() / "wsc.json", NetworkSpec::weakly_supervised(1)), ValidationError);
  }
}
