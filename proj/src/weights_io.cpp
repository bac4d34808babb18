#include "ditn/weights_io.hpp"

#include "ditn/error.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace ditn {

static_assert(std::endian::native == std::endian::little, "weight I/O assumes a little-endian host");

void WeightStore::insert(std::string name, Tensor tensor) {
    if (index_.count(name)) throw FormatError("duplicate tensor name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.emplace_back(std::move(name), std::move(tensor));
}

const Tensor& WeightStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("missing tensor '" + name + "'");
    return entries_[it->second].second;
}

Tensor& WeightStore::get(const std::string& name) {
    return const_cast<Tensor&>(static_cast<const WeightStore&>(*this).get(name));
}

bool WeightStore::bitwise_equal(const WeightStore& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].first != other.entries_[i].first) return false;
        if (!entries_[i].second.bitwise_equal(other.entries_[i].second)) return false;
    }
    return true;
}

namespace {

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { raw(&v, sizeof v); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    std::vector<std::uint8_t>& bytes() { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
    void raw(void* dst, std::size_t n) {
        if (n > n_ - pos_) throw FormatError("weight file truncated");
        std::memcpy(dst, p_ + pos_, n);
        pos_ += n;
    }
    template <class T>
    T read() {
        T v;
        raw(&v, sizeof v);
        return v;
    }
    std::size_t remaining() const { return n_ - pos_; }

private:
    const std::uint8_t* p_;
    std::size_t n_;
    std::size_t pos_ = 0;
};

std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace

std::vector<std::uint8_t> serialize_weights(const WeightStore& store) {
    Writer w;
    w.raw(kWeightMagic, sizeof kWeightMagic);
    w.u32(static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, t] : store) {
        if (name.size() > 0xFFFF) throw FormatError("tensor name too long: " + name.substr(0, 64) + "...");
        if (t.rank() > 0xFF) throw FormatError("tensor rank too large for '" + name + "'");
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.raw(name.data(), name.size());
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        w.raw(t.data(), t.numel() * sizeof(float));
    }
    auto& bytes = w.bytes();
    const std::uint32_t crc = crc32_of(bytes.data() + sizeof kWeightMagic, bytes.size() - sizeof kWeightMagic);
    w.u32(crc);
    return std::move(bytes);
}

WeightStore deserialize_weights(const std::vector<std::uint8_t>& bytes) {
    constexpr std::size_t magic_len = sizeof kWeightMagic;
    if (bytes.size() < magic_len || std::memcmp(bytes.data(), kWeightMagic, magic_len) != 0) {
        throw FormatError("bad magic: not a DITNW1 weight file");
    }
    if (bytes.size() < magic_len + 8) throw FormatError("weight file truncated");
    const std::size_t body = bytes.size() - magic_len - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);

    Reader r(bytes.data() + magic_len, body);
    WeightStore store;
    const auto count = r.read<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto len = r.read<std::uint16_t>();
        std::string name(len, '\0');
        r.raw(name.data(), len);
        const auto rank = r.read<std::uint8_t>();
        Shape shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = r.read<std::uint32_t>();
            if (d == 0) throw FormatError("tensor '" + name + "' has a zero dimension");
            numel *= d;
        }
        if (rank == 0 || numel > r.remaining() / sizeof(float)) throw FormatError("weight file truncated");
        std::vector<float> values(numel);
        r.raw(values.data(), numel * sizeof(float));
        store.insert(std::move(name), Tensor(std::move(shape), std::move(values)));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after the last tensor");
    if (crc32_of(bytes.data() + magic_len, body) != stored) {
        throw IntegrityError("CRC mismatch: weight file is corrupt");
    }
    return store;
}

void save_weights(const WeightStore& store, const std::filesystem::path& path) {
    const auto bytes = serialize_weights(store);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write weight file " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

WeightStore load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open weight file " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_weights(bytes);
}

std::uint32_t weights_crc(const WeightStore& store) {
    const auto bytes = serialize_weights(store);
    std::uint32_t crc;
    std::memcpy(&crc, bytes.data() + bytes.size() - 4, 4);
    return crc;
}

std::uint64_t name_key(std::uint64_t seed, std::string_view name) {
    // FNV-1a over the name, mixed with the seed.
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char ch : name) {
        h ^= ch;
        h *= 0x100000001B3ull;
    }
    return splitmix64(seed ^ splitmix64(h));
}

float uniform01(std::uint64_t key, std::uint64_t counter) {
    const std::uint64_t bits = splitmix64(key ^ splitmix64(counter));
    return static_cast<float>(bits >> 40) * 0x1.0p-24f;
}

Tensor random_uniform(Shape shape, std::uint64_t key, float lo, float hi) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = lo + (hi - lo) * uniform01(key, i);
    return t;
}

WeightStore random_init(const ModelConfig& cfg, std::uint64_t seed) {
    WeightStore store;
    for (const auto& spec : weight_layout(cfg)) {
        Tensor t(spec.shape);
        const std::uint64_t key = name_key(seed, spec.name);
        switch (spec.init) {
        case InitKind::zero:
            break;
        case InitKind::one:
            for (auto& v : t.values()) v = 1.0f;
            break;
        case InitKind::fan_in_uniform: {
            const float a = std::sqrt(1.0f / static_cast<float>(spec.fan_in));
            for (std::size_t i = 0; i < t.numel(); ++i) t[i] = (2.0f * uniform01(key, i) - 1.0f) * a;
            break;
        }
        case InitKind::identity_noise: {
            const std::size_t n = spec.shape[0];
            for (std::size_t i = 0; i < t.numel(); ++i) {
                t[i] = (2.0f * uniform01(key, i) - 1.0f) * 0.01f + (i / n == i % n ? 1.0f : 0.0f);
            }
            break;
        }
        }
        store.insert(spec.name, std::move(t));
    }
    return store;
}

} // namespace ditn
