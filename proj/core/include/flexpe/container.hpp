#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace flexpe {

// Line-oriented text header followed by a little-endian binary blob.
// Layout is documented in docs/formats.md.
struct BlobTensor {
    std::string name;
    std::string dtype;  // f32 | i32
    std::vector<int> shape;
    std::uint64_t offset = 0;
    std::uint64_t bytes = 0;

    std::size_t count() const;
};

struct Container {
    std::string kind;                              // model | dataset
    std::vector<std::vector<std::string>> records;  // every other header line, tokenized
    std::vector<BlobTensor> tensors;
    std::vector<std::uint8_t> blob;
    std::string digest;  // "sha256:<hex>" of the blob

    const BlobTensor& tensor(const std::string& name) const;
    bool has_tensor(const std::string& name) const;
    std::vector<float> f32(const std::string& name) const;
    std::vector<std::int32_t> i32(const std::string& name) const;

    void add_f32(const std::string& name, std::vector<int> shape, std::span<const float> data);
    void add_i32(const std::string& name, std::vector<int> shape, std::span<const std::int32_t> data);
};

std::string sha256_hex(std::span<const std::uint8_t> bytes);

// Verifies magic, offsets and the digest; ParseError on any mismatch.
Container parse_container(const std::string& bytes, const std::string& origin = "<memory>");
Container read_container(const std::string& path);
std::string serialize_container(Container c);  // recomputes the digest
void write_container(const std::string& path, const Container& c);

// "key=value" lookup inside a tokenized record.
std::string record_value(const std::vector<std::string>& rec, const std::string& key);
bool record_has(const std::vector<std::string>& rec, const std::string& key);
std::vector<int> parse_dims(const std::string& s);  // "32x64"
std::string format_dims(const std::vector<int>& d);

}  // namespace flexpe
