#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace gedf::cli {

/// Lowercase hex SHA-256 of a file's bytes. Throws std::runtime_error when the
/// file cannot be read.
std::string sha256_file(const std::string& path);
std::string sha256_bytes(const std::string& bytes);

class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_seed(std::uint64_t seed) { doc_["seed"] = seed; }
  void set_threads(int threads) { doc_["threads"] = threads; }
  void set_config(const nlohmann::json& config) { doc_["config"] = config; }
  void add_input(const std::string& role, const std::string& path);
  void add_output(const std::string& role, const std::string& path);
  void set_timing(const std::string& key, double seconds) { doc_["timing"][key] = seconds; }
  nlohmann::json& results() { return doc_["results"]; }
  nlohmann::json& parameters() { return doc_["parameters"]; }

  /// Writes pretty-printed JSON; outputs are hashed at this point.
  void write(const std::string& path) const;
  const nlohmann::json& document() const { return doc_; }

 private:
  nlohmann::json doc_;
  std::vector<std::pair<std::string, std::string>> outputs_;
};

}  // namespace gedf::cli
