#include "perch/nn/serialize.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace perch::nn {
namespace {

template <typename U>
void put_le(std::ostream& os, U v) {
    std::array<char, sizeof(U)> buf;
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    os.write(buf.data(), buf.size());
}

template <typename U>
U get_le(std::istream& is) {
    std::array<unsigned char, sizeof(U)> buf;
    if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
        throw std::runtime_error("weight archive: truncated input");
    }
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
}

constexpr std::uint32_t kMaxDims = 64;
constexpr std::uint64_t kMaxValues = std::uint64_t{1} << 32;

}  // namespace

void WeightArchive::put(const std::string& name, Block block) {
    if (!blocks_.contains(name)) order_.push_back(name);
    blocks_[name] = std::move(block);
}

void WeightArchive::put_network(const std::string& name, const Mlp& net) {
    Block b;
    b.kind = 0;
    for (std::size_t s : net.sizes()) b.dims.push_back(static_cast<std::uint32_t>(s));
    b.values.assign(net.params().begin(), net.params().end());
    put(name, std::move(b));
}

void WeightArchive::put_vector(const std::string& name, std::vector<double> values) {
    Block b;
    b.kind = 1;
    b.dims = {static_cast<std::uint32_t>(values.size())};
    b.values = std::move(values);
    put(name, std::move(b));
}

bool WeightArchive::has(const std::string& name) const { return blocks_.contains(name); }

Mlp WeightArchive::network(const std::string& name) const {
    auto it = blocks_.find(name);
    if (it == blocks_.end() || it->second.kind != 0) {
        throw std::runtime_error("weight archive: missing network block '" + name + "'");
    }
    std::vector<std::size_t> sizes(it->second.dims.begin(), it->second.dims.end());
    Mlp net(sizes);
    if (net.num_params() != it->second.values.size()) {
        throw std::runtime_error("weight archive: block '" + name + "' has wrong value count");
    }
    std::copy(it->second.values.begin(), it->second.values.end(), net.params().begin());
    return net;
}

const std::vector<double>& WeightArchive::vector(const std::string& name) const {
    auto it = blocks_.find(name);
    if (it == blocks_.end() || it->second.kind != 1) {
        throw std::runtime_error("weight archive: missing vector block '" + name + "'");
    }
    return it->second.values;
}

void WeightArchive::write(std::ostream& os) const {
    os.write(kMagic, sizeof(kMagic));
    put_le<std::uint32_t>(os, kFormatVersion);
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(order_.size()));
    for (const std::string& name : order_) {
        const Block& b = blocks_.at(name);
        put_le<std::uint8_t>(os, b.kind);
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_le<std::uint32_t>(os, static_cast<std::uint32_t>(b.dims.size()));
        for (std::uint32_t d : b.dims) put_le<std::uint32_t>(os, d);
        put_le<std::uint64_t>(os, b.values.size());
        for (double v : b.values) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    }
    if (!os) throw std::runtime_error("weight archive: write failed");
}

WeightArchive WeightArchive::read(std::istream& is) {
    char magic[sizeof(kMagic)];
    if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("weight archive: bad magic");
    }
    const auto version = get_le<std::uint32_t>(is);
    if (version != kFormatVersion) {
        throw std::runtime_error("weight archive: unsupported version " + std::to_string(version));
    }
    WeightArchive ar;
    const auto count = get_le<std::uint32_t>(is);
    for (std::uint32_t k = 0; k < count; ++k) {
        Block b;
        b.kind = get_le<std::uint8_t>(is);
        if (b.kind > 1) throw std::runtime_error("weight archive: unknown block kind");
        const auto name_len = get_le<std::uint32_t>(is);
        if (name_len > 4096) throw std::runtime_error("weight archive: block name too long");
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw std::runtime_error("weight archive: truncated input");
        const auto ndims = get_le<std::uint32_t>(is);
        if (ndims > kMaxDims) throw std::runtime_error("weight archive: too many dims");
        for (std::uint32_t d = 0; d < ndims; ++d) b.dims.push_back(get_le<std::uint32_t>(is));
        const auto n = get_le<std::uint64_t>(is);
        if (n > kMaxValues) throw std::runtime_error("weight archive: block too large");
        b.values.resize(n);
        for (auto& v : b.values) v = std::bit_cast<double>(get_le<std::uint64_t>(is));
        ar.put(name, std::move(b));
    }
    return ar;
}

void WeightArchive::save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
    write(os);
}

WeightArchive WeightArchive::load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path.string());
    return read(is);
}

}  // namespace perch::nn
