#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "dcmg/network.hpp"

namespace testing {

inline std::string repo_path(const std::string& rel) { return std::string(DCMG_SOURCE_DIR) + "/" + rel; }

inline dcmg::GridModel fixture(const std::string& name) {
    return dcmg::load_config(repo_path("tests/fixtures/" + name + ".json"));
}

inline dcmg::GridModel table1() { return dcmg::load_config(repo_path("configs/table1_six_microgrids.json")); }

inline std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline std::string tmp_path(const std::string& name) { return std::string(DCMG_BINARY_DIR) + "/" + name; }

}  // namespace testing
