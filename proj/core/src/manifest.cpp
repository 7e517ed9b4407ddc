#include "claimcheck/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include <nlohmann/json.hpp>

#include "claimcheck/error.hpp"
#include "claimcheck/version.hpp"

namespace claimcheck {

using nlohmann::ordered_json;

namespace {

std::string digest_to_hex(const unsigned char* digest, unsigned int len) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

struct MdCtx {
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    ~MdCtx() { EVP_MD_CTX_free(ctx); }
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
    MdCtx md;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (md.ctx == nullptr || EVP_DigestInit_ex(md.ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(md.ctx, bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(md.ctx, digest, &len) != 1) {
        throw_internal("sha256 failed");
    }
    return digest_to_hex(digest, len);
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_validation("cannot digest missing file: " + path);
    MdCtx md;
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (md.ctx == nullptr || EVP_DigestInit_ex(md.ctx, EVP_sha256(), nullptr) != 1) {
        throw_internal("sha256 init failed");
    }
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        if (EVP_DigestUpdate(md.ctx, buf, static_cast<std::size_t>(in.gcount())) != 1) {
            throw_internal("sha256 update failed");
        }
    }
    if (EVP_DigestFinal_ex(md.ctx, digest, &len) != 1) throw_internal("sha256 final failed");
    return digest_to_hex(digest, len);
}

void RunManifest::add_input(const std::string& path) {
    input_digests[path] = sha256_file(path);
}

void RunManifest::write(const std::string& path) const {
    ordered_json j;
    j["command"] = command;
    j["version"] = version.empty() ? kVersion : version;
    j["created_at"] = created_at;
    j["config"] = config;
    j["inputs"] = input_digests;
    j["timings_ms"] = timings_ms;
    j["traces"] = traces;
    j["error"] = error;
    std::ofstream out(path);
    if (!out) throw_validation("cannot write manifest " + path);
    out << j.dump(2) << '\n';
}

}  // namespace claimcheck
