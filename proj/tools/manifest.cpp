#include "manifest.hpp"

#include <array>
#include <cstdio>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <openssl/evp.h>

#include "version.hpp"

namespace gedf::cli {

namespace {

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      throw std::runtime_error("SHA-256 initialization failed");
    }
  }
  void update(const char* data, std::size_t n) {
    if (EVP_DigestUpdate(ctx_.get(), data, n) != 1) throw std::runtime_error("SHA-256 update failed");
  }
  std::string hex() {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(ctx_.get(), md.data(), &len) != 1) {
      throw std::runtime_error("SHA-256 finalization failed");
    }
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
      std::snprintf(buf, sizeof(buf), "%02x", md[i]);
      out += buf;
    }
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

}  // namespace

std::string sha256_bytes(const std::string& bytes) {
  Sha256 h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path + " for hashing");
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  return h.hex();
}

RunManifest::RunManifest(std::string command, std::vector<std::string> argv) {
  doc_["tool"] = "gedf";
  doc_["version"] = kToolVersion;
  doc_["command"] = std::move(command);
  doc_["argv"] = std::move(argv);
  doc_["inputs"] = nlohmann::json::array();
  doc_["outputs"] = nlohmann::json::array();
  doc_["timing"] = nlohmann::json::object();
  doc_["results"] = nlohmann::json::object();
  doc_["parameters"] = nlohmann::json::object();
}

void RunManifest::add_input(const std::string& role, const std::string& path) {
  doc_["inputs"].push_back({{"role", role}, {"path", path}, {"sha256", sha256_file(path)}});
}

void RunManifest::add_output(const std::string& role, const std::string& path) {
  outputs_.emplace_back(role, path);
}

void RunManifest::write(const std::string& path) const {
  nlohmann::json doc = doc_;
  for (const auto& [role, file] : outputs_) {
    doc["outputs"].push_back({{"role", role}, {"path", file}, {"sha256", sha256_file(file)}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  out << doc.dump(2) << '\n';
}

}  // namespace gedf::cli
