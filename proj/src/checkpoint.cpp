#include "oat/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace oat::ckpt {

namespace {
constexpr char kMagic[4] = {'O', 'A', 'T', 'W'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void write_string(std::ostream& os, const std::string& s) {
    write_pod<uint32_t>(os, static_cast<uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
    uint32_t len = read_pod<uint32_t>(is);
    std::string s(len, '\0');
    is.read(s.data(), len);
    if (!is) throw std::runtime_error("checkpoint: truncated string");
    return s;
}
}  // namespace

const ad::Array* Container::find_array(const std::string& name) const {
    for (const auto& [n, a] : arrays)
        if (n == name) return &a;
    return nullptr;
}

const std::string* Container::find_blob(const std::string& name) const {
    auto it = blobs.find(name);
    return it == blobs.end() ? nullptr : &it->second;
}

void Container::put_store(const std::string& prefix, const nn::ParamStore& ps) {
    for (int i = 0; i < ps.size(); ++i) put_array(prefix + "/" + ps.name(i), ps.value(i));
}

void Container::load_store(const std::string& prefix, nn::ParamStore& ps) const {
    for (int i = 0; i < ps.size(); ++i) {
        const ad::Array* a = find_array(prefix + "/" + ps.name(i));
        if (a == nullptr)
            throw std::runtime_error("checkpoint: missing array " + prefix + "/" + ps.name(i));
        if (!ps.value(i).same_shape(*a))
            throw std::runtime_error("checkpoint: shape mismatch on " + prefix + "/" + ps.name(i));
        ps.value(i).data = a->data;
    }
}

void save(const Container& c, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    write_pod<uint32_t>(os, kVersion);
    write_pod<uint64_t>(os, c.arrays.size());
    for (const auto& [name, a] : c.arrays) {
        write_string(os, name);
        write_pod<uint32_t>(os, static_cast<uint32_t>(a.rows()));
        write_pod<uint32_t>(os, static_cast<uint32_t>(a.cols()));
        os.write(reinterpret_cast<const char*>(a.data.data()),
                 static_cast<std::streamsize>(a.data.size() * sizeof(double)));
    }
    write_pod<uint64_t>(os, c.blobs.size());
    for (const auto& [name, bytes] : c.blobs) {
        write_string(os, name);
        write_pod<uint64_t>(os, bytes.size());
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    if (!os) throw std::runtime_error("checkpoint: write failure on " + path);
}

Container load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + path);
    uint32_t version = read_pod<uint32_t>(is);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    Container c;
    uint64_t narr = read_pod<uint64_t>(is);
    for (uint64_t i = 0; i < narr; ++i) {
        std::string name = read_string(is);
        uint32_t rows = read_pod<uint32_t>(is);
        uint32_t cols = read_pod<uint32_t>(is);
        ad::Array a(static_cast<int>(rows), static_cast<int>(cols));
        is.read(reinterpret_cast<char*>(a.data.data()),
                static_cast<std::streamsize>(a.data.size() * sizeof(double)));
        if (!is) throw std::runtime_error("checkpoint: truncated array " + name);
        c.arrays.emplace_back(std::move(name), std::move(a));
    }
    uint64_t nblob = read_pod<uint64_t>(is);
    for (uint64_t i = 0; i < nblob; ++i) {
        std::string name = read_string(is);
        uint64_t len = read_pod<uint64_t>(is);
        std::string bytes(len, '\0');
        is.read(bytes.data(), static_cast<std::streamsize>(len));
        if (!is) throw std::runtime_error("checkpoint: truncated blob " + name);
        c.blobs[name] = std::move(bytes);
    }
    return c;
}

}  // namespace oat::ckpt
