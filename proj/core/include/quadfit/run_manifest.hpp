#pragma once

#include <string>
#include <vector>

namespace quadfit {

constexpr const char* kToolVersion = "0.1.0";

std::string sha256_file(const std::string& path);
std::string sha256_bytes(const void* data, size_t size);

// Per-run provenance: command, config echo, seed, input hashes, outputs,
// timing. Written next to the outputs as run_manifest.json (timing makes it
// intentionally non-reproducible; reproducible artifacts live elsewhere).
struct RunManifest {
  std::string command;
  std::string config_echo;  // serialized JSON of the effective config
  uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> input_hashes;  // (path, sha256)
  std::vector<std::string> outputs;
  double wall_seconds = 0;

  void add_input(const std::string& path);
  void add_output(const std::string& path);
  // Writes the manifest; throws if a listed output does not exist.
  void write(const std::string& path) const;
};

}  // namespace quadfit
