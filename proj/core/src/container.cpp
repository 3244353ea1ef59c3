#include "flexpe/container.hpp"

#include <openssl/evp.h>

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

#include "flexpe/error.hpp"

namespace flexpe {

namespace {

constexpr const char* kMagic = "FLEXPE-CONTAINER 1";

std::vector<std::string> tokenize(const std::string& line) {
    std::istringstream is(line);
    return {std::istream_iterator<std::string>(is), std::istream_iterator<std::string>()};
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

std::uint64_t to_u64(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const auto v = std::stoull(s, &used);
        if (used == s.size()) return v;
    } catch (const std::logic_error&) {
    }
    throw ParseError("bad " + what + ": '" + s + "'");
}

}  // namespace

std::size_t BlobTensor::count() const {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

std::vector<int> parse_dims(const std::string& s) {
    std::vector<int> d;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto x = s.find('x', pos);
        const std::string part = s.substr(pos, x == std::string::npos ? std::string::npos : x - pos);
        const auto v = to_u64(part, "dimension");
        if (v == 0 || v > (1u << 30)) throw ParseError("dimension out of range in '" + s + "'");
        d.push_back(static_cast<int>(v));
        if (x == std::string::npos) break;
        pos = x + 1;
    }
    return d;
}

std::string format_dims(const std::vector<int>& d) {
    std::string s;
    for (std::size_t i = 0; i < d.size(); ++i) s += (i ? "x" : "") + std::to_string(d[i]);
    return s;
}

std::string record_value(const std::vector<std::string>& rec, const std::string& key) {
    const std::string pre = key + "=";
    for (const auto& t : rec)
        if (t.rfind(pre, 0) == 0) return t.substr(pre.size());
    throw ParseError("missing field '" + key + "' in record '" + (rec.empty() ? "" : rec[0]) + "'");
}

bool record_has(const std::vector<std::string>& rec, const std::string& key) {
    const std::string pre = key + "=";
    for (const auto& t : rec)
        if (t.rfind(pre, 0) == 0) return true;
    return false;
}

const BlobTensor& Container::tensor(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t;
    throw ParseError("missing tensor '" + name + "'");
}

bool Container::has_tensor(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return true;
    return false;
}

std::vector<float> Container::f32(const std::string& name) const {
    const BlobTensor& t = tensor(name);
    if (t.dtype != "f32") throw ParseError("tensor '" + name + "' is " + t.dtype + ", expected f32");
    std::vector<float> out(t.count());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(get_u32(&blob[t.offset + 4 * i]));
    return out;
}

std::vector<std::int32_t> Container::i32(const std::string& name) const {
    const BlobTensor& t = tensor(name);
    if (t.dtype != "i32") throw ParseError("tensor '" + name + "' is " + t.dtype + ", expected i32");
    std::vector<std::int32_t> out(t.count());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::int32_t>(get_u32(&blob[t.offset + 4 * i]));
    return out;
}

void Container::add_f32(const std::string& name, std::vector<int> shape, std::span<const float> data) {
    BlobTensor t{name, "f32", std::move(shape), blob.size(), data.size() * 4};
    if (t.count() != data.size()) throw ShapeError("tensor '" + name + "' shape does not match data");
    for (float f : data) put_u32(blob, std::bit_cast<std::uint32_t>(f));
    tensors.push_back(std::move(t));
}

void Container::add_i32(const std::string& name, std::vector<int> shape, std::span<const std::int32_t> data) {
    BlobTensor t{name, "i32", std::move(shape), blob.size(), data.size() * 4};
    if (t.count() != data.size()) throw ShapeError("tensor '" + name + "' shape does not match data");
    for (auto v : data) put_u32(blob, static_cast<std::uint32_t>(v));
    tensors.push_back(std::move(t));
}

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw Error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string s;
    for (unsigned i = 0; i < len; ++i) {
        s += hex[md[i] >> 4];
        s += hex[md[i] & 15];
    }
    return s;
}

Container parse_container(const std::string& bytes, const std::string& origin) {
    Container c;
    std::size_t pos = 0;
    auto next_line = [&]() -> std::string {
        const auto nl = bytes.find('\n', pos);
        if (nl == std::string::npos) throw ParseError(origin + ": truncated header");
        std::string line = bytes.substr(pos, nl - pos);
        pos = nl + 1;
        return line;
    };
    if (next_line() != kMagic) throw ParseError(origin + ": not a flexpe container (bad magic line)");
    std::uint64_t blob_bytes = 0;
    bool have_blob = false;
    while (!have_blob) {
        const std::string line = next_line();
        if (line.empty() || line[0] == '#') continue;
        auto tok = tokenize(line);
        if (tok.empty()) continue;
        if (tok[0] == "kind" && tok.size() == 2) {
            c.kind = tok[1];
        } else if (tok[0] == "tensor") {
            if (tok.size() < 6) throw ParseError(origin + ": malformed tensor line: " + line);
            BlobTensor t;
            t.name = tok[1];
            t.dtype = tok[2];
            if (t.dtype != "f32" && t.dtype != "i32") throw ParseError(origin + ": unknown dtype " + t.dtype);
            t.shape = parse_dims(tok[3]);
            t.offset = to_u64(record_value(tok, "offset"), "offset");
            t.bytes = to_u64(record_value(tok, "bytes"), "byte count");
            if (t.bytes != t.count() * 4) throw ParseError(origin + ": tensor '" + t.name + "' byte count mismatch");
            c.tensors.push_back(std::move(t));
        } else if (tok[0] == "digest" && tok.size() == 2) {
            c.digest = tok[1];
        } else if (tok[0] == "blob" && tok.size() == 2) {
            blob_bytes = to_u64(tok[1], "blob size");
            have_blob = true;
        } else {
            c.records.push_back(std::move(tok));
        }
    }
    if (bytes.size() - pos != blob_bytes)
        throw ParseError(origin + ": blob is " + std::to_string(bytes.size() - pos) + " bytes, header says " +
                         std::to_string(blob_bytes));
    c.blob.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    for (const auto& t : c.tensors)
        if (t.offset + t.bytes > c.blob.size())
            throw ParseError(origin + ": tensor '" + t.name + "' extends past the blob");
    const std::string want = "sha256:" + sha256_hex(c.blob);
    if (c.digest != want) throw ParseError(origin + ": digest mismatch (header " + c.digest + ", blob " + want + ")");
    return c;
}

Container read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_container(bytes, path);
}

std::string serialize_container(Container c) {
    std::ostringstream os;
    os << kMagic << '\n' << "kind " << c.kind << '\n';
    for (const auto& rec : c.records) {
        for (std::size_t i = 0; i < rec.size(); ++i) os << (i ? " " : "") << rec[i];
        os << '\n';
    }
    for (const auto& t : c.tensors)
        os << "tensor " << t.name << ' ' << t.dtype << ' ' << format_dims(t.shape) << " offset=" << t.offset
           << " bytes=" << t.bytes << '\n';
    os << "digest sha256:" << sha256_hex(c.blob) << '\n';
    os << "blob " << c.blob.size() << '\n';
    std::string s = os.str();
    s.append(reinterpret_cast<const char*>(c.blob.data()), c.blob.size());
    return s;
}

void write_container(const std::string& path, const Container& c) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot write '" + path + "'");
    const std::string s = serialize_container(c);
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

}  // namespace flexpe
