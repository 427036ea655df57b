#pragma once

#include <openssl/evp.h>
#include <sys/utsname.h>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vipnet/tensor.hpp"

namespace vipnet {

inline std::string sha1_hex(const unsigned char* data, std::size_t n) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, data, n) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw FormatError("SHA-1 digest failed");
    }
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

/// Git blob hash: sha1("blob <size>\0" + content), so hashes can be checked
/// against `git hash-object`.
inline std::string git_blob_sha1(const std::vector<unsigned char>& content) {
    std::string framed = "blob " + std::to_string(content.size());
    framed.push_back('\0');
    framed.append(content.begin(), content.end());
    return sha1_hex(reinterpret_cast<const unsigned char*>(framed.data()), framed.size());
}

inline std::string git_blob_sha1_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path + " for hashing");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    return git_blob_sha1(bytes);
}

/// Combined content hash of a model directory: blob-hash each regular file,
/// then hash the sorted "name hash" listing.
inline std::string model_dir_hash(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw FormatError(dir + " is not a directory");
    std::vector<std::string> lines;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        lines.push_back(entry.path().filename().string() + " " +
                        git_blob_sha1_file(entry.path().string()) + "\n");
    }
    std::sort(lines.begin(), lines.end());
    std::string combined;
    for (const std::string& l : lines) combined += l;
    return sha1_hex(reinterpret_cast<const unsigned char*>(combined.data()), combined.size());
}

inline std::string iso8601_utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

inline std::string host_descriptor() {
    utsname u{};
    if (uname(&u) != 0) return "unknown";
    return std::string(u.sysname) + " " + u.release + " " + u.machine;
}

/// Provenance block embedded in every report: what ran, with which config,
/// on which model bytes. Reruns with equal manifests must reproduce every
/// accuracy/FLOP figure; latency fields are exempt.
struct ExperimentManifest {
    std::string command;
    nlohmann::json config = nlohmann::json::object();
    unsigned seed = 0;
    std::string model_hash;  // empty when no model is involved
    int threads = 1;
    std::string started_utc;
    std::string finished_utc;
    std::string host = host_descriptor();

    nlohmann::json to_json() const {
        return nlohmann::json{{"command", command},     {"config", config},
                              {"seed", seed},           {"model_hash", model_hash},
                              {"threads", threads},     {"started_utc", started_utc},
                              {"finished_utc", finished_utc}, {"host", host}};
    }
};

}  // namespace vipnet
