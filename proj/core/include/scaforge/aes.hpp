#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace scaforge::aes {

using Block16 = std::array<std::uint8_t, 16>;

/// Index of the attacked key/plaintext byte within the 16-byte AES state.
class ByteIndex {
public:
    constexpr ByteIndex() = default;
    explicit ByteIndex(int index);

    constexpr int value() const { return index_; }
    friend constexpr bool operator==(ByteIndex, ByteIndex) = default;

private:
    int index_ = 0;
};

const std::array<std::uint8_t, 256>& sbox_table();
const std::array<std::uint8_t, 256>& inv_sbox_table();

/// Checks the embedded tables against their checksum and that they are
/// mutually inverse permutations.
bool tables_verified();

inline std::uint8_t sbox(std::uint8_t x) { return sbox_table()[x]; }
inline std::uint8_t inv_sbox(std::uint8_t x) { return inv_sbox_table()[x]; }

/// First-round SubBytes output, used directly as the 256-class label.
inline std::uint8_t sbox_label(std::uint8_t plaintext, std::uint8_t key) {
    return sbox(static_cast<std::uint8_t>(plaintext ^ key));
}

int hamming_weight(std::uint8_t x);

/// Labels each plaintext byte would produce under the key guess.
std::vector<std::uint8_t> hypothesis_labels(std::span<const std::uint8_t> plaintexts,
                                            std::uint8_t key_guess);

}  // namespace scaforge::aes
