#pragma once

// Versioned binary container for network weights and learner state.
//
//   magic     8 bytes  "PERCHNN\0"
//   version   u32      (currently 1)
//   count     u32      number of blocks
//   block*    kind u8 (0 = network, 1 = vector)
//             name_len u32, name bytes
//             ndims u32, dims u32[ndims]   network: layer sizes; vector: {n}
//             nvalues u64, values f64[nvalues]
//
// Integers and IEEE-754 doubles are little-endian regardless of host order,
// so a reload reproduces every bit.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "perch/nn/mlp.hpp"

namespace perch::nn {

inline constexpr char kMagic[8] = {'P', 'E', 'R', 'C', 'H', 'N', 'N', '\0'};
inline constexpr std::uint32_t kFormatVersion = 1;

// Ordered set of named blocks.
class WeightArchive {
public:
    void put_network(const std::string& name, const Mlp& net);
    void put_vector(const std::string& name, std::vector<double> values);

    [[nodiscard]] bool has(const std::string& name) const;
    [[nodiscard]] Mlp network(const std::string& name) const;
    [[nodiscard]] const std::vector<double>& vector(const std::string& name) const;

    void write(std::ostream& os) const;
    static WeightArchive read(std::istream& is);

    void save(const std::filesystem::path& path) const;
    static WeightArchive load(const std::filesystem::path& path);

private:
    struct Block {
        std::uint8_t kind = 0;
        std::vector<std::uint32_t> dims;
        std::vector<double> values;
    };
    std::vector<std::string> order_;
    std::map<std::string, Block> blocks_;

    void put(const std::string& name, Block block);
};

}  // namespace perch::nn
