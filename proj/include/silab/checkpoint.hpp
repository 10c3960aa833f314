#ifndef SILAB_CHECKPOINT_HPP
#define SILAB_CHECKPOINT_HPP

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "silab/error.hpp"
#include "silab/params.hpp"

namespace silab {

// Checkpoint layout, all integers unsigned 64-bit little-endian:
//   "SILAB1" | spec hash | group count | per group: name length, name bytes,
//   rank, dims..., payload as raw IEEE-754 doubles (little-endian)

inline constexpr std::array<char, 6> checkpoint_magic{'S', 'I', 'L', 'A', 'B', '1'};

struct Checkpoint {
    std::uint64_t spec_hash = 0;
    ParamVector params;
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class ByteReader {
public:
    ByteReader(const std::string& bytes, std::string origin)
        : bytes_(bytes), origin_(std::move(origin)) {}

    std::uint64_t u64() {
        need(8, "integer");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    std::string raw(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t position() const { return pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw IngestionError(origin_ + ": truncated " + what + " at offset " +
                                 std::to_string(pos_) + ": need " + std::to_string(n) +
                                 " bytes, " + std::to_string(bytes_.size() - pos_) +
                                 " available");
        }
    }

    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
    std::string out(checkpoint_magic.begin(), checkpoint_magic.end());
    detail::put_u64(out, ck.spec_hash);
    detail::put_u64(out, ck.params.group_count());
    for (const auto& g : ck.params.groups()) {
        detail::put_u64(out, g.name.size());
        out += g.name;
        detail::put_u64(out, g.value.rank());
        for (std::size_t d : g.value.shape) detail::put_u64(out, d);
        for (double v : g.value.data) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint") {
    detail::ByteReader in(bytes, origin);
    if (in.raw(checkpoint_magic.size(), "magic") !=
        std::string(checkpoint_magic.begin(), checkpoint_magic.end())) {
        throw IngestionError(origin + ": bad magic at offset 0");
    }
    Checkpoint ck;
    ck.spec_hash = in.u64();
    const std::uint64_t count = in.u64();
    std::vector<ParamGroup> groups;
    for (std::uint64_t gi = 0; gi < count; ++gi) {
        ParamGroup g;
        g.name = in.raw(in.u64(), "group name");
        const std::uint64_t rank = in.u64();
        if (rank > 8) {
            throw IngestionError(origin + ": implausible rank " + std::to_string(rank) +
                                 " at offset " + std::to_string(in.position() - 8));
        }
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = in.u64();
        const std::size_t n = Tensor::element_count(shape);
        std::vector<double> values(n);
        for (auto& v : values) v = std::bit_cast<double>(in.u64());
        g.value = Tensor(std::move(shape), std::move(values));
        groups.push_back(std::move(g));
    }
    if (!in.at_end()) {
        throw IngestionError(origin + ": trailing bytes at offset " + std::to_string(in.position()));
    }
    ck.params = ParamVector(std::move(groups));
    return ck;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open " + path.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw Error("write failed: " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IngestionError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path), path.string());
}

} // namespace silab

#endif
