// Copyright (c) 2026 the fedrg authors
// SPDX-License-Identifier: Apache-2.0
//
// The method map in docs/method_map.json is a coverage contract: every listed
// anchor must point at an existing file that actually contains the symbol.
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace {
std::filesystem::path repo_root() {
  // tests run from the build tree; walk up until docs/ appears
  auto p = std::filesystem::current_path();
  for (int depth = 0; depth < 6; ++depth) {
    if (std::filesystem::exists(p / "docs" / "method_map.json")) return p;
    p = p.parent_path();
  }
#ifdef FEDRG_SOURCE_DIR
  return std::filesystem::path(FEDRG_SOURCE_DIR);
#else
  return std::filesystem::current_path();
#endif
}
}  // namespace

TEST_CASE("every method-map anchor names an existing symbol in an existing file") {
  const auto root = repo_root();
  std::ifstream in(root / "docs" / "method_map.json");
  REQUIRE(in.good());
  nlohmann::json map = nlohmann::json::parse(in);
  REQUIRE(map.contains("mechanisms"));
  CHECK(map["mechanisms"].size() >= 10);
  for (const auto& mech : map["mechanisms"]) {
    CHECK(!mech["name"].get<std::string>().empty());
    CHECK(!mech["what"].get<std::string>().empty());
    REQUIRE(!mech["anchors"].empty());
    for (const auto& anchor : mech["anchors"]) {
      const auto file = root / anchor["file"].get<std::string>();
      INFO("anchor ", anchor.dump());
      REQUIRE(std::filesystem::exists(file));
      std::ifstream src(file);
      std::ostringstream os;
      os << src.rdbuf();
      CHECK(os.str().find(anchor["symbol"].get<std::string>()) != std::string::npos);
    }
  }
}
