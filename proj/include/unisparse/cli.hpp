#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "unisparse/model.hpp"
#include "unisparse/netspec.hpp"
#include "unisparse/training.hpp"

namespace unisparse {

/// Invalid flags, config files or option combinations (exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A trained network on disk: the descriptor, the weights and the training
/// state, as one JSON document.
struct ModelFile {
  NetworkSpec net;
  FilterBank weights;
  TrainState state;
};

nlohmann::json model_to_json(const ModelFile& model);
ModelFile model_from_json(const nlohmann::json& j);
void save_model(const std::string& path, const ModelFile& model);
ModelFile load_model(const std::string& path);

/// Entry point of the command-line tool. argv[0] is the program name.
/// Returns 0 on success, 2 for usage and configuration errors and 1 for
/// runtime failures; diagnostics go to err.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace unisparse
