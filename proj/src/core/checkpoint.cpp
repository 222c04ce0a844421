#include "vecspace/nn/checkpoint.hpp"

#include "json_io.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

namespace vecspace::nn {

namespace {

constexpr char kMagic[4] = {'V', 'C', 'S', '1'};

class Writer {
public:
    void bytes(const void* data, std::size_t n) { out_.append(static_cast<const char*>(data), n); }
    template <class T>
    void le(T value) {
        static_assert(std::is_unsigned_v<T>);
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
    }
    void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& s) : s_(s) {}
    template <class T>
    T le() {
        need(sizeof(T));
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            v |= static_cast<T>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return v;
    }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    std::string str(std::size_t n) {
        need(n);
        std::string out = s_.substr(pos_, n);
        pos_ += n;
        return out;
    }
    bool done() const { return pos_ == s_.size(); }

private:
    void need(std::size_t n) const {
        if (pos_ + n > s_.size()) throw FormatError("checkpoint truncated");
    }
    const std::string& s_;
    std::size_t pos_ = 0;
};

template <class Model>
Checkpoint make(ModelKind kind, const Model& model, std::uint64_t vocab_hash) {
    Checkpoint c;
    c.kind = kind;
    c.vocab_hash = vocab_hash;
    model.for_each_param([&](const std::string& name, const Matrix& m) { c.tensors.push_back({name, m}); });
    return c;
}

template <class Model>
Model restore(const Checkpoint& c, ModelKind kind) {
    if (c.kind != kind)
        throw FormatError("checkpoint holds a " + std::string(to_string(c.kind)) + ", expected " +
                                 std::string(to_string(kind)));
    Model model;
    std::size_t i = 0;
    model.for_each_param([&](const std::string& name, Matrix& m) {
        if (i >= c.tensors.size() || c.tensors[i].name != name)
            throw FormatError("checkpoint tensor table does not match " + std::string(to_string(kind)) +
                                     " layout at '" + name + "'");
        m = c.tensors[i++].value;
    });
    if (i != c.tensors.size()) throw FormatError("checkpoint has unexpected extra tensors");
    return model;
}

void check_vocab(const Checkpoint& c, std::uint64_t expected) {
    if (c.vocab_hash != expected)
        throw FormatError("checkpoint vocabulary hash does not match the active vocabulary");
}

} // namespace

std::string_view to_string(ModelKind kind) {
    switch (kind) {
    case ModelKind::Autoencoder: return "autoencoder";
    case ModelKind::Captioner: return "captioner";
    case ModelKind::Paraphraser: return "paraphraser";
    }
    return "unknown";
}

std::string serialize(const Checkpoint& c) {
    Writer w;
    w.bytes(kMagic, 4);
    w.le<std::uint16_t>(c.version);
    w.le<std::uint8_t>(static_cast<std::uint8_t>(c.kind));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
    std::uint64_t total = 0;
    for (const auto& t : c.tensors) {
        w.le<std::uint16_t>(static_cast<std::uint16_t>(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.le<std::uint8_t>(2);
        w.le<std::uint64_t>(static_cast<std::uint64_t>(t.value.rows()));
        w.le<std::uint64_t>(static_cast<std::uint64_t>(t.value.cols()));
        total += static_cast<std::uint64_t>(t.value.size());
    }
    w.le<std::uint64_t>(total);
    for (const auto& t : c.tensors)
        for (Index r = 0; r < t.value.rows(); ++r)
            for (Index col = 0; col < t.value.cols(); ++col) w.f64(t.value(r, col));
    w.le<std::uint64_t>(c.vocab_hash);
    return w.take();
}

Checkpoint deserialize(const std::string& bytes) {
    Reader r(bytes);
    if (r.str(4) != std::string(kMagic, 4)) throw FormatError("not a checkpoint (bad magic)");
    Checkpoint c;
    c.version = r.le<std::uint16_t>();
    if (c.version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(c.version));
    const auto kind = r.le<std::uint8_t>();
    if (kind < 1 || kind > 3) throw FormatError("unknown model kind in checkpoint");
    c.kind = static_cast<ModelKind>(kind);
    const auto count = r.le<std::uint32_t>();
    std::uint64_t expected_total = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.str(r.le<std::uint16_t>());
        const auto rank = r.le<std::uint8_t>();
        if (rank != 2) throw FormatError("checkpoint tensors must have rank 2");
        const auto rows = r.le<std::uint64_t>();
        const auto cols = r.le<std::uint64_t>();
        if (rows > (1u << 24) || cols > (1u << 24)) throw FormatError("implausible tensor shape");
        t.value.resize(static_cast<Index>(rows), static_cast<Index>(cols));
        expected_total += rows * cols;
        c.tensors.push_back(std::move(t));
    }
    if (r.le<std::uint64_t>() != expected_total) throw FormatError("checkpoint parameter count mismatch");
    for (auto& t : c.tensors)
        for (Index row = 0; row < t.value.rows(); ++row)
            for (Index col = 0; col < t.value.cols(); ++col) t.value(row, col) = r.f64();
    c.vocab_hash = r.le<std::uint64_t>();
    if (!r.done()) throw FormatError("trailing bytes after checkpoint");
    return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
    detail::write_text_file(path, serialize(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return deserialize(detail::read_text_file(path)); }

Checkpoint to_checkpoint(const Autoencoder& m, std::uint64_t h) { return make(ModelKind::Autoencoder, m, h); }
Checkpoint to_checkpoint(const Captioner& m, std::uint64_t h) { return make(ModelKind::Captioner, m, h); }
Checkpoint to_checkpoint(const Paraphraser& m, std::uint64_t h) { return make(ModelKind::Paraphraser, m, h); }

Autoencoder autoencoder_from(const Checkpoint& c) {
    Autoencoder m = restore<Autoencoder>(c, ModelKind::Autoencoder);
    if (m.encoder.latent_dim() != m.generator.latent_dim() || m.encoder.pixels() != m.generator.pixel_count())
        throw FormatError("autoencoder checkpoint has inconsistent shapes");
    image_shape_for(m.generator.pixel_count());
    return m;
}

Captioner captioner_from(const Checkpoint& c, std::uint64_t expected_vocab_hash) {
    check_vocab(c, expected_vocab_hash);
    return restore<Captioner>(c, ModelKind::Captioner);
}

Paraphraser paraphraser_from(const Checkpoint& c, std::uint64_t expected_vocab_hash) {
    check_vocab(c, expected_vocab_hash);
    return restore<Paraphraser>(c, ModelKind::Paraphraser);
}

} // namespace vecspace::nn
