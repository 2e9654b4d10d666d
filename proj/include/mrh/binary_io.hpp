#ifndef MRH_BINARY_IO_HPP
#define MRH_BINARY_IO_HPP

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mrh {

using Bytes = std::vector<std::uint8_t>;

/// Little-endian append-only buffer used by the model/signature writers.
class ByteWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void tag(std::string_view magic) {
        buf_.insert(buf_.end(), magic.begin(), magic.end());
    }
    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }

private:
    Bytes buf_;
};

/// Little-endian reader over an in-memory buffer. Throws on truncation.
class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> data, std::string name)
        : data_(data), name_(std::move(name)) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    void expect_tag(std::string_view magic) {
        need(magic.size());
        if (std::memcmp(data_.data() + pos_, magic.data(), magic.size()) != 0)
            throw std::runtime_error(name_ + ": bad magic, expected \"" + std::string(magic) + "\"");
        pos_ += magic.size();
    }
    bool at_end() const { return pos_ == data_.size(); }

private:
    void need(std::size_t n) {
        if (data_.size() - pos_ < n)
            throw std::runtime_error(name_ + ": truncated (needed " + std::to_string(n) +
                                     " more bytes at offset " + std::to_string(pos_) + ")");
    }
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::string name_;
};

inline std::uint64_t fnv1a(std::span<const std::uint8_t> data,
                           std::uint64_t h = 14695981039346656037ULL) {
    for (std::uint8_t b : data) {
        h ^= b;
        h *= 1099511628211ULL;
    }
    return h;
}

inline Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path.string());
    Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!in.good() && !in.eof()) throw std::runtime_error("read failed: " + path.string());
    return data;
}

inline std::string read_text_file(const std::filesystem::path& path) {
    Bytes b = read_file(path);
    return std::string(b.begin(), b.end());
}

/// Writes via a temp file and renames, so a failed write never leaves a
/// partial output behind.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open file for writing: " + tmp.string());
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size()));
        if (!out.good()) {
            out.close();
            std::filesystem::remove(tmp);
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span<const std::uint8_t>(
                                reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

} // namespace mrh

#endif
