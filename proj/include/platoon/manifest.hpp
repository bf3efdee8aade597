#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "platoon/errors.hpp"
#include "platoon/version.hpp"

namespace platoon::io {

inline std::string sha1_hex(const void* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  if (EVP_Digest(data, len, digest, &dlen, EVP_sha1(), nullptr) != 1) {
    throw NumericError("sha1: digest failure");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * dlen);
  for (unsigned int i = 0; i < dlen; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string sha1_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("sha1: cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return sha1_hex(bytes.data(), bytes.size());
}

// Record of one CLI invocation: what ran, with which seed/config, the content
// hashes of everything it read and wrote, and how long it took. Two runs with
// identical inputs must produce identical outputs; the wall clock is
// informational and the only field allowed to differ between them.
struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_path;  // empty when defaults were used
  nlohmann::json config_echo;
  std::string out_dir;
  double wall_seconds = 0.0;
  std::vector<std::string> inputs;   // paths as given on the command line
  std::vector<std::string> outputs;  // file names inside out_dir

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tool"] = "platoon-smpc";
    j["tool_version"] = kVersionString;
    j["command"] = command;
    j["seed"] = seed;
    j["config_path"] = config_path;
    j["config"] = config_echo;
    j["out_dir"] = out_dir;
    j["wall_seconds"] = wall_seconds;
    nlohmann::json ins = nlohmann::json::array();
    for (const std::string& path : inputs) {
      ins.push_back({{"file", path}, {"sha1", sha1_file(path)}});
    }
    j["inputs"] = std::move(ins);
    nlohmann::json outs = nlohmann::json::array();
    for (const std::string& name : outputs) {
      outs.push_back({{"file", name}, {"sha1", sha1_file(out_dir + "/" + name)}});
    }
    j["outputs"] = std::move(outs);
    return j;
  }
};

inline void write_manifest(const RunManifest& manifest) {
  const nlohmann::json j = manifest.to_json();
  std::ofstream out(manifest.out_dir + "/manifest.json");
  if (!out) {
    throw FormatError("manifest: cannot write to '" + manifest.out_dir + "'");
  }
  out << j.dump(2) << '\n';
}

}  // namespace platoon::io
