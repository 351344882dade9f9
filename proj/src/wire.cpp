#include "waffle/wire.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "waffle/error.hpp"

namespace waffle {

namespace {

constexpr std::uint32_t kMagic = 0x50554657u;  // "WFUP"
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

class Reader {
public:
    explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_]) |
                          static_cast<std::uint16_t>(bytes_[pos_ + 1]) << 8;
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return bytes_[pos_++];
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(&bytes_[pos_]), n);
        pos_ += n;
        return s;
    }
    bool exhausted() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw FormatError("update message truncated");
    }
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

std::string layer_field(std::size_t layer, const char* suffix) {
    return "layer" + std::to_string(layer) + "." + suffix;
}

void append_field(std::vector<std::uint8_t>& out, const std::string& name,
                  const DenseMatrix& m) {
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(kDtypeF32);
    out.push_back(2);  // ndim
    put_u32(out, static_cast<std::uint32_t>(m.rows));
    put_u32(out, static_cast<std::uint32_t>(m.cols));
    for (double v : m.data) put_f32(out, static_cast<float>(v));
}

}  // namespace

WireSchema WireSchema::for_model(const ModelConfig& model, Algorithm algorithm) {
    WireSchema schema;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& l = model.layers[i];
        const std::size_t j = l.out_dim, m = l.weight_cols();
        if (algorithm == Algorithm::waffle && l.factorized) {
            schema.fields.push_back({layer_field(i, "w_a"), j, l.num_factors});
            schema.fields.push_back({layer_field(i, "w_b"), l.num_factors, m});
            schema.fields.push_back({layer_field(i, "r"), 1, l.num_factors});
        } else {
            schema.fields.push_back({layer_field(i, "w"), j, m});
        }
    }
    return schema;
}

std::vector<std::uint8_t> serialize_update(const FactorDictionary& globals, std::uint32_t sender,
                                           std::uint32_t round) {
    std::vector<std::uint8_t> out;
    std::size_t count = 0;
    for (const LayerParams& p : globals.layers) count += p.factorized ? 3 : 1;

    put_u32(out, kMagic);
    put_u32(out, kVersion);
    put_u32(out, sender);
    put_u32(out, round);
    put_u32(out, static_cast<std::uint32_t>(count));
    for (std::size_t i = 0; i < globals.layers.size(); ++i) {
        const LayerParams& p = globals.layers[i];
        if (p.factorized) {
            ensure_finite(p.wa, "serialize_update");
            ensure_finite(p.wb, "serialize_update");
            ensure_finite(p.r, "serialize_update");
            append_field(out, layer_field(i, "w_a"), p.wa);
            append_field(out, layer_field(i, "w_b"), p.wb);
            append_field(out, layer_field(i, "r"), p.r);
        } else {
            ensure_finite(p.w, "serialize_update");
            append_field(out, layer_field(i, "w"), p.w);
        }
    }
    return out;
}

namespace {

struct RawField {
    std::size_t rows = 0, cols = 0;
    std::vector<double> values;
};

std::map<std::string, RawField> parse_fields(Reader& r, std::uint32_t count,
                                             bool read_payloads) {
    std::map<std::string, RawField> fields;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        std::string name = r.str(name_len);
        const std::uint8_t dtype = r.u8();
        if (dtype != kDtypeF32) throw FormatError("unsupported dtype in update message");
        const std::uint8_t ndim = r.u8();
        if (ndim != 2) throw FormatError("unsupported rank in update message");
        RawField f;
        f.rows = r.u32();
        f.cols = r.u32();
        if (fields.count(name)) throw SchemaError("duplicate field: " + name);
        if (read_payloads) {
            f.values.resize(f.rows * f.cols);
            for (auto& v : f.values) v = static_cast<double>(r.f32());
        } else {
            for (std::size_t k = 0; k < f.rows * f.cols; ++k) (void)r.f32();
        }
        fields.emplace(std::move(name), std::move(f));
    }
    if (!r.exhausted()) throw FormatError("trailing bytes in update message");
    return fields;
}

}  // namespace

UpdateMessage deserialize_update(const std::vector<std::uint8_t>& bytes, const ModelConfig& model,
                                 Algorithm algorithm) {
    Reader r(bytes);
    if (r.u32() != kMagic) throw FormatError("bad update magic");
    if (r.u32() != kVersion) throw FormatError("unsupported update version");
    UpdateMessage msg;
    msg.sender = r.u32();
    msg.round = r.u32();
    const std::uint32_t count = r.u32();

    const WireSchema schema = WireSchema::for_model(model, algorithm);
    if (count != schema.fields.size())
        throw SchemaError("update field count " + std::to_string(count) + " != schema " +
                          std::to_string(schema.fields.size()));

    auto fields = parse_fields(r, count, /*read_payloads=*/true);
    for (const auto& [name, f] : fields) {
        bool known = false;
        for (const auto& e : schema.fields) known = known || e.name == name;
        if (!known) throw SchemaError("unknown field in update: " + name);
    }

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerSpec& l = model.layers[i];
        LayerParams p;
        auto take = [&](const char* suffix, std::size_t rows, std::size_t cols) {
            const std::string name = layer_field(i, suffix);
            auto it = fields.find(name);
            if (it == fields.end()) throw SchemaError("missing field in update: " + name);
            if (it->second.rows != rows || it->second.cols != cols)
                throw ConsistencyError("field shape mismatch for " + name);
            return DenseMatrix(rows, cols, std::move(it->second.values));
        };
        const std::size_t j = l.out_dim, m = l.weight_cols();
        if (algorithm == Algorithm::waffle && l.factorized) {
            p.factorized = true;
            p.wa = take("w_a", j, l.num_factors);
            p.wb = take("w_b", l.num_factors, m);
            p.r = take("r", 1, l.num_factors);
        } else {
            p.w = take("w", j, m);
        }
        msg.params.layers.push_back(std::move(p));
    }
    return msg;
}

std::vector<WireField> list_fields(const std::vector<std::uint8_t>& bytes) {
    Reader r(bytes);
    if (r.u32() != kMagic) throw FormatError("bad update magic");
    if (r.u32() != kVersion) throw FormatError("unsupported update version");
    (void)r.u32();  // sender
    (void)r.u32();  // round
    const std::uint32_t count = r.u32();
    std::vector<WireField> out;
    auto fields = parse_fields(r, count, /*read_payloads=*/false);
    for (auto& [name, f] : fields) out.push_back(WireField{name, f.rows, f.cols});
    return out;
}

}  // namespace waffle
