#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "inloop/errors.hpp"

// Run manifest emitted alongside every output file: the fully resolved
// configuration, its SHA-256, and the provenance needed to reproduce the
// outputs exactly.

namespace inloop {

namespace detail {

// FIPS 180-4 SHA-256, enough for config fingerprints.
class Sha256 {
public:
    void update(const void* data, std::size_t len) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        while (len > 0) {
            const std::size_t take = std::min<std::size_t>(64 - fill_, len);
            std::memcpy(buf_.data() + fill_, p, take);
            fill_ += take;
            p += take;
            len -= take;
            total_ += take;
            if (fill_ == 64) {
                process(buf_.data());
                fill_ = 0;
            }
        }
    }

    [[nodiscard]] std::string hex_digest() {
        const std::uint64_t bits = total_ * 8;
        const std::uint8_t one = 0x80;
        update(&one, 1);
        const std::uint8_t zero = 0x00;
        while (fill_ != 56) update(&zero, 1);
        std::array<std::uint8_t, 8> len{};
        for (int i = 0; i < 8; ++i)
            len[i] = static_cast<std::uint8_t>(bits >> (56 - 8 * i));
        // bypass total_ bookkeeping for the trailer
        std::memcpy(buf_.data() + fill_, len.data(), 8);
        process(buf_.data());
        static const char* digits = "0123456789abcdef";
        std::string out;
        for (std::uint32_t word : h_) {
            for (int i = 28; i >= 0; i -= 4)
                out.push_back(digits[(word >> i) & 0xF]);
        }
        return out;
    }

private:
    static std::uint32_t rotr(std::uint32_t x, int n) {
        return (x >> n) | (x << (32 - n));
    }

    void process(const std::uint8_t* chunk) {
        static constexpr std::uint32_t k[64] = {
            0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b,
            0x59f111f1, 0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01,
            0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7,
            0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc,
            0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152,
            0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
            0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
            0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
            0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819,
            0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116, 0x1e376c08,
            0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f,
            0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
            0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
        std::uint32_t w[64];
        for (int i = 0; i < 16; ++i)
            w[i] = (std::uint32_t(chunk[4 * i]) << 24) |
                   (std::uint32_t(chunk[4 * i + 1]) << 16) |
                   (std::uint32_t(chunk[4 * i + 2]) << 8) |
                   std::uint32_t(chunk[4 * i + 3]);
        for (int i = 16; i < 64; ++i) {
            const std::uint32_t s0 =
                rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
            const std::uint32_t s1 =
                rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
            w[i] = w[i - 16] + s0 + w[i - 7] + s1;
        }
        std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3];
        std::uint32_t e = h_[4], f = h_[5], g = h_[6], h = h_[7];
        for (int i = 0; i < 64; ++i) {
            const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
            const std::uint32_t ch = (e & f) ^ (~e & g);
            const std::uint32_t t1 = h + s1 + ch + k[i] + w[i];
            const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
            const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
            const std::uint32_t t2 = s0 + maj;
            h = g;
            g = f;
            f = e;
            e = d + t1;
            d = c;
            c = b;
            b = a;
            a = t1 + t2;
        }
        h_[0] += a;
        h_[1] += b;
        h_[2] += c;
        h_[3] += d;
        h_[4] += e;
        h_[5] += f;
        h_[6] += g;
        h_[7] += h;
    }

    std::array<std::uint32_t, 8> h_{0x6a09e667, 0xbb67ae85, 0x3c6ef372,
                                    0xa54ff53a, 0x510e527f, 0x9b05688c,
                                    0x1f83d9ab, 0x5be0cd19};
    std::array<std::uint8_t, 64> buf_{};
    std::size_t fill_ = 0;
    std::uint64_t total_ = 0;
};

}  // namespace detail

[[nodiscard]] inline std::string sha256_hex(const std::string& data) {
    detail::Sha256 h;
    h.update(data.data(), data.size());
    return h.hex_digest();
}

inline constexpr const char* tool_version = "0.1.0";

struct RunManifest {
    std::string config_path;  // file path or "preset:<name>"
    std::string config_sha256;
    nlohmann::json resolved;  // the fully resolved configuration
    std::string preset;
    std::string subcommand;
    std::vector<std::string> flags;
    std::string timestamp;  // UTC, ISO 8601
    std::vector<std::string> outputs;

    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j;
        j["tool"] = "inloop";
        j["version"] = tool_version;
        j["subcommand"] = subcommand;
        j["config_path"] = config_path;
        j["preset"] = preset;
        j["config_sha256"] = config_sha256;
        j["flags"] = flags;
        j["timestamp"] = timestamp;
        j["outputs"] = outputs;
        j["resolved_config"] = resolved;
        return j;
    }
};

[[nodiscard]] inline std::string utc_timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("manifest: cannot write '" + path + "'");
    out << m.to_json().dump(2) << "\n";
}

}  // namespace inloop
