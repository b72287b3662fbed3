#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "relgraph/errors.hpp"
#include "relgraph/model.hpp"
#include "relgraph/rng.hpp"

namespace relgraph {

namespace detail {

inline constexpr char kCkptMagic[4] = {'R', 'G', 'C', 'P'};
inline constexpr std::uint32_t kCkptVersion = 1;

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (i * 8)) & 0xFF));
}

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (i * 8)) & 0xFF));
}

inline void put_f64(std::string& buf, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    put_u64(buf, bits);
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw ChecksumError("checkpoint truncated");
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos++])) << (i * 8);
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos++])) << (i * 8);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof(d));
        return d;
    }
};

inline void put_mat(std::string& buf, const Mat& m) {
    put_u64(buf, m.rows);
    put_u64(buf, m.cols);
    for (double d : m.v) put_f64(buf, d);
}

inline Mat read_mat(ByteReader& r) {
    std::size_t rows = r.u64();
    std::size_t cols = r.u64();
    Mat m(rows, cols);
    for (double& d : m.v) d = r.f64();
    return m;
}

}  // namespace detail

// Little-endian binary checkpoint: magic + version + hyperparameters + step +
// seed, then every parameter's value and Adam moments in canonical order,
// closed by an FNV-1a checksum of everything before it. Gradients are
// transient and not stored.
inline std::string serialize_checkpoint(ModelState& s) {
    using namespace detail;
    std::string buf(kCkptMagic, 4);
    put_u32(buf, kCkptVersion);
    put_u64(buf, s.enc.vocab_size);
    put_u64(buf, s.enc.d_model);
    put_u64(buf, s.enc.max_seq_len);
    put_u64(buf, s.enc.n_enc);
    put_u64(buf, s.enc.d_ff);
    buf.push_back(s.enc.frozen ? 1 : 0);
    buf.push_back(s.dec.frozen ? 1 : 0);
    put_u64(buf, s.gcn.num_layers);
    put_u64(buf, s.dec.max_decode_len);
    put_u64(buf, s.step);
    put_u64(buf, s.seed);
    s.for_each_param([&](Param& p, bool) {
        put_mat(buf, p.value);
        put_mat(buf, p.m);
        put_mat(buf, p.v);
    });
    put_u64(buf, fnv1a_bytes(fnv1a_init(), buf.data(), buf.size()));
    return buf;
}

inline ModelState deserialize_checkpoint(const std::string& buf) {
    using namespace detail;
    if (buf.size() < 8 + 4) throw ChecksumError("checkpoint too small");
    std::uint64_t stored;
    {
        ByteReader tail{buf, buf.size() - 8};
        stored = tail.u64();
    }
    if (stored != fnv1a_bytes(fnv1a_init(), buf.data(), buf.size() - 8))
        throw ChecksumError("checkpoint checksum mismatch");
    ByteReader r{buf};
    r.need(4);
    if (std::memcmp(buf.data(), kCkptMagic, 4) != 0)
        throw ChecksumError("not a checkpoint file");
    r.pos = 4;
    if (r.u32() != kCkptVersion) throw ChecksumError("unsupported checkpoint version");

    ModelConfig cfg;
    cfg.vocab_size = r.u64();
    cfg.d_model = r.u64();
    cfg.max_seq_len = r.u64();
    cfg.n_enc = r.u64();
    cfg.d_ff = r.u64();
    r.need(2);
    bool enc_frozen = buf[r.pos++] != 0;
    bool dec_frozen = buf[r.pos++] != 0;
    cfg.gcn_layers = r.u64();
    cfg.max_decode_len = r.u64();
    std::uint64_t step = r.u64();
    std::uint64_t seed = r.u64();

    ModelState s = init_model(cfg, 0);
    s.enc.frozen = enc_frozen;
    s.dec.frozen = dec_frozen;
    s.step = step;
    s.seed = seed;
    s.for_each_param([&](Param& p, bool) {
        Mat value = read_mat(r);
        Mat m = read_mat(r);
        Mat v = read_mat(r);
        if (!value.same_shape(p.value))
            throw ChecksumError("checkpoint parameter shape mismatch");
        p.value = std::move(value);
        p.m = std::move(m);
        p.v = std::move(v);
    });
    if (r.pos != buf.size() - 8) throw ChecksumError("checkpoint has trailing bytes");
    return s;
}

inline void save_checkpoint(ModelState& s, const std::string& path) {
    std::string buf = serialize_checkpoint(s);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing '" + path + "'");
}

inline ModelState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingCheckpoint("cannot open checkpoint '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(buf);
}

}  // namespace relgraph
