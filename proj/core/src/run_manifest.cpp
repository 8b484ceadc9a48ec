#include "quadfit/run_manifest.hpp"

#include <openssl/evp.h>

#include <filesystem>
#include <fstream>

#include "json_util.hpp"

namespace quadfit {

namespace {

std::string hex(const unsigned char* digest, unsigned len) {
  static const char* digits = "0123456789abcdef";
  std::string out(2 * len, '0');
  for (unsigned i = 0; i < len; ++i) {
    out[2 * i] = digits[digest[i] >> 4];
    out[2 * i + 1] = digits[digest[i] & 0xf];
  }
  return out;
}

}  // namespace

std::string sha256_bytes(const void* data, size_t size) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  EVP_DigestUpdate(ctx, data, size);
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  return hex(digest, len);
}

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("sha256: cannot open " + path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    EVP_DigestUpdate(ctx, buf, static_cast<size_t>(is.gcount()));
  }
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  return hex(digest, len);
}

void RunManifest::add_input(const std::string& path) {
  input_hashes.emplace_back(path, sha256_file(path));
}

void RunManifest::add_output(const std::string& path) { outputs.push_back(path); }

void RunManifest::write(const std::string& path) const {
  for (const auto& out : outputs)
    if (!std::filesystem::exists(out))
      throw std::runtime_error("run manifest: missing output " + out);
  json j;
  j["command"] = command;
  j["version"] = kToolVersion;
  j["seed"] = seed;
  if (!config_echo.empty()) j["config"] = json::parse(config_echo);
  json inputs = json::array();
  for (const auto& [p, h] : input_hashes) inputs.push_back(json{{"path", p}, {"sha256", h}});
  j["inputs"] = std::move(inputs);
  j["outputs"] = outputs;
  j["wall_seconds"] = wall_seconds;
  save_json_file(path, j);
}

}  // namespace quadfit
