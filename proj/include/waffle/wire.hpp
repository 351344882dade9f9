#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "waffle/factor_model.hpp"

namespace waffle {

// Client -> server payload. Structurally restricted to global parameters:
// the codec schema whitelists exactly the dictionary field names, so no
// variational quantity can ride along under any name.
struct UpdateMessage {
    std::uint32_t sender = 0;
    std::uint32_t round = 0;
    FactorDictionary params;
};

// Field inventory (name + shape) for one model/algorithm combination.
struct WireSchema {
    struct Entry {
        std::string name;
        std::size_t rows = 0, cols = 0;
    };
    std::vector<Entry> fields;

    static WireSchema for_model(const ModelConfig& model, Algorithm algorithm);
};

struct WireField {
    std::string name;
    std::size_t rows = 0, cols = 0;
};

// Length-prefixed field table; 32-bit little-endian reals, row-major.
std::vector<std::uint8_t> serialize_update(const FactorDictionary& globals, std::uint32_t sender,
                                           std::uint32_t round);

// Rejects unknown, duplicate, missing or mis-shaped fields and trailing
// bytes. The decoded dictionary carries the 32-bit values.
UpdateMessage deserialize_update(const std::vector<std::uint8_t>& bytes, const ModelConfig& model,
                                 Algorithm algorithm);

// Structural scan: walks the encoded field table without interpreting
// payloads. Used to audit live traffic for schema violations.
std::vector<WireField> list_fields(const std::vector<std::uint8_t>& bytes);

}  // namespace waffle
