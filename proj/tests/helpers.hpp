#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "ilt/config.hpp"

namespace ilt::test {

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ilt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// A run small enough for unit tests.
inline RunConfig small_config() {
  RunConfig c;
  c.seed = 5;
  c.data.n_train = 120;
  c.data.n_test = 60;
  c.data.input_dim = 4;
  c.data.classes = 3;
  c.model.hidden = {6, 5};
  c.optimizer.kind = OptimizerKind::Momentum;
  c.optimizer.lr = 0.01;
  c.optimizer.decay_every = 2;
  c.train.epochs = 3;
  c.train.batch_size = 16;
  c.train.repeats = 1;
  return c;
}

}  // namespace ilt::test
