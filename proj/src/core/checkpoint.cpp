#include "checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>

namespace dmir::checkpoint {

namespace {

constexpr char kMagic[8] = {'D', 'M', 'I', 'R', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u64(std::ostream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
std::uint64_t read_u64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}
void write_str(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    os.write(s.data(), std::streamsize(s.size()));
}
std::string read_str(std::istream& is) {
    std::uint64_t n = read_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), std::streamsize(n));
    return s;
}

struct Header {
    std::string meta;
    std::uint64_t count = 0;
};

Header read_header(std::istream& is, const std::string& path) {
    char magic[8];
    is.read(magic, 8);
    if (!is || std::string(magic, 8) != std::string(kMagic, 8))
        throw std::runtime_error("checkpoint: bad magic in " + path);
    std::uint32_t ver = 0;
    is.read(reinterpret_cast<char*>(&ver), sizeof(ver));
    if (ver != kVersion)
        throw std::runtime_error("checkpoint: unsupported version in " + path);
    Header h;
    h.meta = read_str(is);
    h.count = read_u64(is);
    return h;
}

}  // namespace

void save(const std::string& path, const std::string& meta,
          const std::vector<Parameter*>& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
    os.write(kMagic, 8);
    os.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    write_str(os, meta);
    write_u64(os, params.size());
    for (const Parameter* p : params) {
        write_str(os, p->id);
        write_u64(os, p->value.shape.size());
        for (auto d : p->value.shape) write_u64(os, d);
        os.write(reinterpret_cast<const char*>(p->value.data.data()),
                 std::streamsize(p->value.size() * sizeof(double)));
    }
    if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

std::string load(const std::string& path, const std::vector<Parameter*>& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    Header h = read_header(is, path);
    std::map<std::string, Tensor> stored;
    for (std::uint64_t i = 0; i < h.count; ++i) {
        std::string name = read_str(is);
        std::uint64_t ndim = read_u64(is);
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = read_u64(is);
        Tensor t = Tensor::zeros(shape);
        is.read(reinterpret_cast<char*>(t.data.data()),
                std::streamsize(t.size() * sizeof(double)));
        stored.emplace(std::move(name), std::move(t));
    }
    if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
    for (Parameter* p : params) {
        auto it = stored.find(p->id);
        if (it == stored.end())
            throw std::runtime_error("checkpoint: parameter " + p->id + " not in " + path);
        if (it->second.shape != p->value.shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + p->id);
        p->value = it->second;
        p->zero_grad();
    }
    return h.meta;
}

std::string read_meta(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    return read_header(is, path).meta;
}

}  // namespace dmir::checkpoint
