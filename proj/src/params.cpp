#include "grela/params.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace grela {

Tensor ParamStore::insert(const std::string& name, Tensor t) {
    if (params_.count(name))
        throw ContractError("duplicate parameter name: " + name);
    params_.emplace(name, t);
    return t;
}

Tensor ParamStore::create(const std::string& name, std::vector<int> shape,
                          int fan_in, int fan_out, Rng& rng) {
    Tensor t = Tensor::zeros(shape, /*requires_grad=*/true);
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& v : *t.data) v = rng.uniform(-a, a);
    return insert(name, t);
}

Tensor ParamStore::create_zeros(const std::string& name, std::vector<int> shape) {
    return insert(name, Tensor::zeros(shape, /*requires_grad=*/true));
}

Tensor& ParamStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("no such parameter: " + name);
    return it->second;
}

const Tensor& ParamStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("no such parameter: " + name);
    return it->second;
}

std::size_t ParamStore::scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, t] : params_) t.zero_grad();
}

namespace {
constexpr char kMagic[] = "GRELA1\n";
}  // namespace

void write_doubles_le(std::ostream& out, const std::vector<double>& values) {
    for (double v : values) {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
        unsigned char bytes[8];
        for (int i = 0; i < 8; ++i)
            bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
}

void read_doubles_le(std::istream& in, std::vector<double>& values) {
    for (double& v : values) {
        unsigned char bytes[8];
        if (!in.read(reinterpret_cast<char*>(bytes), 8))
            throw IoError("file truncated while reading 64-bit floats");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i)
            bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
        v = std::bit_cast<double>(bits);
    }
}

void save_checkpoint(const ParamStore& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(kMagic, sizeof(kMagic) - 1);
    for (const auto& [name, t] : params) {
        out << name << ' ' << t.ndim();
        for (int d : t.shape) out << ' ' << d;
        out << '\n';
        write_doubles_le(out, *t.data);
    }
    if (!out) throw IoError("write failed for checkpoint: " + path);
}

std::map<std::string, Tensor> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[sizeof(kMagic) - 1];
    if (!in.read(magic, sizeof(magic)) ||
        std::memcmp(magic, kMagic, sizeof(magic)) != 0)
        throw IoError("bad checkpoint magic in " + path);

    std::map<std::string, Tensor> loaded;
    std::string header;
    while (std::getline(in, header)) {
        if (header.empty()) continue;
        std::istringstream hs(header);
        std::string name;
        int ndim = 0;
        if (!(hs >> name >> ndim) || ndim < 1)
            throw IoError("malformed checkpoint header: " + header);
        std::vector<int> shape(ndim);
        for (int& d : shape)
            if (!(hs >> d) || d < 1)
                throw IoError("malformed checkpoint shape: " + header);
        Tensor t = Tensor::zeros(shape, /*requires_grad=*/false);
        read_doubles_le(in, *t.data);
        if (loaded.count(name))
            throw IoError("duplicate parameter in checkpoint: " + name);
        loaded.emplace(name, t);
    }
    return loaded;
}

void load_checkpoint(ParamStore& params, const std::string& path) {
    std::map<std::string, Tensor> loaded = read_checkpoint(path);
    if (loaded.size() != params.size())
        throw IoError("checkpoint has " + std::to_string(loaded.size()) +
                      " parameters, model expects " + std::to_string(params.size()));
    for (auto& [name, t] : params) {
        auto it = loaded.find(name);
        if (it == loaded.end())
            throw IoError("checkpoint missing parameter: " + name);
        if (it->second.shape != t.shape)
            throw IoError("shape mismatch for " + name + ": checkpoint " +
                          it->second.shape_str() + " vs model " + t.shape_str());
        *t.data = *it->second.data;
    }
}

}  // namespace grela
