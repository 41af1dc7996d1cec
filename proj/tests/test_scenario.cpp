#include "doctest.h"

#include <string>

#include "ciest/error.hpp"
#include "ciest/scenario.hpp"

using namespace ciest;
using nlohmann::json;

namespace {

json base_doc() {
  return json::parse(R"({
    "name": "small",
    "graph": {"topology": "ring", "nodes": 4},
    "links": {"kind": "erasure", "p": 0.1},
    "model": {"kind": "linear", "builtin": "partial-observation", "noise_std": 0.5},
    "quantizer": {"enabled": true, "step": 0.1},
    "theta": [1.0, -1.0],
    "alpha": {"a": 1.0, "tau": 1.0},
    "b": 1.0,
    "run": {"algorithm": "lu", "iterations": 100, "seeds": [0, 3], "stride": 10}
  })");
}

std::vector<std::string> error_codes(const json& doc, Algorithm algo) {
  auto check = validate_scenario(parse_scenario(doc.dump()), algo);
  std::vector<std::string> codes;
  for (const auto& e : check.errors) codes.push_back(e.code);
  return codes;
}

bool contains(const std::vector<std::string>& v, const std::string& s) {
  return std::find(v.begin(), v.end(), s) != v.end();
}

std::string parse_code(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const ValidationError& e) {
    return e.issues().front().code + ": " + e.issues().front().message;
  }
  return "";
}

}  // namespace

TEST_CASE("a valid scenario parses and validates") {
  auto cfg = parse_scenario(base_doc().dump());
  CHECK(cfg.graph.nodes == 4);
  CHECK(cfg.theta.size() == 2);
  CHECK(cfg.run.seed_last == 3);
  auto check = validate_scenario(cfg, Algorithm::lu);
  CHECK(check.ok());
  CHECK(check.gain_lambda_min.has_value());
  CHECK(check.lambda2 > 0.0);
  auto p = build_problem(cfg, Algorithm::lu);
  CHECK(p.n_sensors() == 4);
  CHECK(std::holds_alternative<LinearModel>(p.model));
}

TEST_CASE("syntax errors carry a position") {
  auto msg = parse_code("{\n  \"name\": \"x\",\n  oops\n}");
  CHECK(msg.rfind("parse:", 0) == 0);
  CHECK(msg.find("line 3") != std::string::npos);
}

TEST_CASE("unknown and missing fields are rejected") {
  auto doc = base_doc();
  doc["colour"] = "blue";
  CHECK(parse_code(doc.dump()).find("colour") != std::string::npos);
  doc = base_doc();
  doc["run"]["speed"] = 2;
  CHECK(parse_code(doc.dump()).find("speed") != std::string::npos);
  doc = base_doc();
  doc.erase("theta");
  CHECK(parse_code(doc.dump()).find("theta") != std::string::npos);
  doc = base_doc();
  doc["graph"]["nodes"] = -3;
  CHECK_FALSE(parse_code(doc.dump()).empty());
}

TEST_CASE("digest is canonical") {
  auto a = parse_scenario(base_doc().dump());
  // same content, different key order and spacing
  std::string reordered = R"({"theta":[1.0,-1.0],"b":1.0,"run":{"stride":10,"seeds":[0,3],"iterations":100,
    "algorithm":"lu"},"alpha":{"tau":1.0,"a":1.0},"quantizer":{"step":0.1,"enabled":true},
    "model":{"noise_std":0.5,"builtin":"partial-observation","kind":"linear"},
    "links":{"p":0.1,"kind":"erasure"},"graph":{"nodes":4,"topology":"ring"},"name":"small"})";
  auto b = parse_scenario(reordered);
  CHECK(scenario_digest(a) == scenario_digest(b));
  CHECK(scenario_digest(a).size() == 64);
  auto round = parse_scenario(serialize_scenario(a).dump());
  CHECK(scenario_digest(round) == scenario_digest(a));
  auto doc = base_doc();
  doc["b"] = 1.5;
  CHECK(scenario_digest(parse_scenario(doc.dump())) != scenario_digest(a));
}

TEST_CASE("sha256 known answer") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("structural problems are errors") {
  auto doc = base_doc();
  doc["graph"] = {{"edges", {{0, 1}, {2, 3}}}, {"nodes", 4}};
  CHECK(contains(error_codes(doc, Algorithm::lu), "mean-connectivity"));

  doc = base_doc();
  doc["alpha"]["tau"] = 0.5;
  CHECK(contains(error_codes(doc, Algorithm::lu), "persistence"));

  doc = base_doc();
  doc["quantizer"]["step"] = 0.0;
  CHECK(contains(error_codes(doc, Algorithm::lu), "quantizer"));

  doc = base_doc();
  doc["model"] = {{"kind", "linear"}, {"matrices", {{{1.0, 0.0}}, {{1.0, 0.0}}, {{2.0, 0.0}}, {{0.5, 0.0}}}},
                  {"noise_std", 1.0}};
  CHECK(contains(error_codes(doc, Algorithm::lu), "observability"));

  doc = base_doc();
  doc["model"] = {{"kind", "linear"}, {"matrices", {{{1.0, 0.0}}, {{0.0, 1.0}}}}, {"noise_std", 1.0}};
  CHECK(contains(error_codes(doc, Algorithm::lu), "sensor-count"));

  doc = base_doc();
  doc["b"] = 0.0;
  CHECK(contains(error_codes(doc, Algorithm::lu), "consensus-weight"));
}

TEST_CASE("sufficient-condition violations are warnings") {
  auto doc = base_doc();
  doc["quantizer"]["dithered"] = false;
  auto check = validate_scenario(parse_scenario(doc.dump()), Algorithm::lu);
  CHECK(check.ok());
  bool seen = false;
  for (const auto& w : check.warnings) seen |= w.code == "undithered";
  CHECK(seen);

  doc = base_doc();
  doc["alpha"]["tau"] = 0.8;
  check = validate_scenario(parse_scenario(doc.dump()), Algorithm::lu);
  CHECK(check.ok());
  seen = false;
  for (const auto& w : check.warnings) seen |= w.code.rfind("normality", 0) == 0;
  CHECK(seen);
}

TEST_CASE("separable scenarios") {
  json doc = json::parse(R"({
    "graph": {"topology": "ring", "nodes": 5},
    "model": {"kind": "separable-builtin:cubic", "noise_std": 0.2},
    "theta": [3.0],
    "alpha": {"a": 0.8, "tau": 1.0},
    "beta": {"a": 0.45, "tau": 0.505},
    "epsilon1": 0.04081632653061229,
    "run": {"algorithm": "nlu", "iterations": 10, "seeds": [0, 0]}
  })");
  CHECK(validate_scenario(parse_scenario(doc.dump()), Algorithm::nlu).ok());
  CHECK(contains(error_codes(doc, Algorithm::lu), "algorithm-model"));
  auto tight = doc;
  tight["epsilon1"] = 0.01;
  CHECK(contains(error_codes(tight, Algorithm::nlu), "nlu-schedule"));
  auto nobeta = doc;
  nobeta.erase("beta");
  CHECK(contains(error_codes(nobeta, Algorithm::nlu), "nlu-schedule"));
  auto bad = doc;
  bad["model"]["kind"] = "separable-builtin:quartic";
  CHECK_THROWS_AS(validate_scenario(parse_scenario(bad.dump()), Algorithm::nlu).require_ok(), ValidationError);
}

TEST_CASE("linear NU scenarios report the beta threshold") {
  auto doc = base_doc();
  doc["run"]["algorithm"] = "nu";
  auto check = validate_scenario(parse_scenario(doc.dump()), Algorithm::nu);
  CHECK(check.ok());
  REQUIRE(check.nu_beta_threshold.has_value());
  CHECK(*check.nu_beta_threshold > 0.0);
}

TEST_CASE("bundled scenarios are valid") {
  for (const char* f : {"scalar.json", "scalar_tuned.json", "partial_ring_erasure.json",
                        "partial_ring_undithered.json", "cubic_nlu.json"}) {
    CAPTURE(f);
    auto cfg = load_scenario(std::string(CIEST_SCENARIO_DIR) + "/" + f);
    CHECK(validate_scenario(cfg, cfg.run.algorithm).ok());
  }
  CHECK_THROWS_AS(load_scenario("/nonexistent/file.json"), IoError);
}
