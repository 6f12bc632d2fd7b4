#include <doctest.h>

#include "cellpk/config.hpp"
#include "cellpk/error.hpp"

using namespace cellpk;

TEST_CASE("key value parsing") {
  const auto e = parse_key_values("# comment\nlearning_rate = 0.01\n\n  epochs=5   # trailing\n");
  REQUIRE(e.size() == 2);
  CHECK(e[0].key == "learning_rate");
  CHECK(e[0].value == "0.01");
  CHECK(e[0].line == 2);
  CHECK(e[1].value == "5");
  CHECK_THROWS_AS(parse_key_values("no equals sign\n"), UsageError);
}

TEST_CASE("run config applies keys and rejects unknown ones") {
  RunConfig rc;
  rc.apply(parse_key_values(
      "learning_rate = 1e-4\nepochs = 7\nbatch_size = 3\nearly_stopping_patience = 2\noptimizer = adam\n"
      "split = 95/5\nloss = mse\nseed = 99\nresolution = 64\nworkers = 2\n"));
  CHECK(rc.train.learning_rate == 1e-4);
  CHECK(rc.train.max_epochs == 7);
  CHECK(rc.train.batch_size == 3);
  CHECK(rc.train.early_stop_patience == 2);
  CHECK(rc.train.train_fraction == 0.95);
  CHECK(rc.train.seed == 99);
  CHECK(rc.resolution == 64);
  CHECK(rc.workers == 2);
  CHECK_THROWS_WITH_AS(rc.apply(parse_key_values("momentum = 0.9\n")), doctest::Contains("momentum"), UsageError);
  CHECK_THROWS_AS(rc.set("epochs", "many"), UsageError);
  CHECK_THROWS_AS(rc.set("optimizer", "sgd"), UsageError);

  RunConfig again;
  again.apply(parse_key_values(rc.to_string()));
  CHECK(again.to_string() == rc.to_string());
  for (const auto& k : RunConfig::keys()) CHECK(rc.to_string().find(k + " = ") != std::string::npos);
}

TEST_CASE("split notation") {
  CHECK(parse_split("80/20") == 0.8);
  CHECK(parse_split("95/5") == 0.95);
  CHECK(parse_split("0.7") == 0.7);
  CHECK_THROWS_AS(parse_split("80/30"), UsageError);
  CHECK_THROWS_AS(parse_split("1.0"), UsageError);
  CHECK(format_split(0.8) == "80/20");
}
