#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "relgraph/checkpoint.hpp"
#include "relgraph/model.hpp"

#include "support.hpp"

namespace {

using namespace relgraph;

ModelState make_state() {
    ModelConfig cfg;
    cfg.vocab_size = 23;
    cfg.d_model = 5;
    cfg.max_seq_len = 12;
    cfg.n_enc = 2;
    cfg.gcn_layers = 3;
    cfg.max_decode_len = 4;
    ModelState s = init_model(cfg, 99);
    // Give the non-value buffers content so round-trips cover them too.
    Rng rng(17);
    s.for_each_param([&](Param& p, bool) {
        p.m.fill_uniform(rng, -1.0, 1.0);
        p.v.fill_uniform(rng, 0.0, 1.0);
    });
    s.step = 41;
    s.enc.frozen = true;
    return s;
}

}  // namespace

TEST_CASE("serialize → deserialize → serialize is byte-identical") {
    ModelState s = make_state();
    std::string a = serialize_checkpoint(s);
    ModelState back = deserialize_checkpoint(a);
    std::string b = serialize_checkpoint(back);
    CHECK(a == b);

    CHECK(back.step == 41);
    CHECK(back.seed == 99);
    CHECK(back.enc.frozen);
    CHECK_FALSE(back.dec.frozen);
    CHECK(back.enc.n_enc == 2);
    CHECK(back.enc.d_ff == 10);
    CHECK(back.gcn.num_layers == 3);
    CHECK(support::state_fingerprint(back) == support::state_fingerprint(s));
}

TEST_CASE("checkpoint bytes start with the magic and are deterministic") {
    ModelState s = make_state();
    std::string blob = serialize_checkpoint(s);
    REQUIRE(blob.size() > 8);
    CHECK(blob.substr(0, 4) == "RGCP");
    CHECK(serialize_checkpoint(s) == blob);
}

TEST_CASE("corruption anywhere is caught by the checksum") {
    ModelState s = make_state();
    std::string blob = serialize_checkpoint(s);

    SUBCASE("flipped payload byte") {
        std::string bad = blob;
        bad[bad.size() / 2] = static_cast<char>(bad[bad.size() / 2] ^ 0x40);
        CHECK_THROWS_AS(deserialize_checkpoint(bad), ChecksumError);
    }
    SUBCASE("flipped magic byte") {
        std::string bad = blob;
        bad[0] = 'X';
        CHECK_THROWS_AS(deserialize_checkpoint(bad), ChecksumError);
    }
    SUBCASE("truncated") {
        CHECK_THROWS_AS(deserialize_checkpoint(blob.substr(0, blob.size() - 3)), ChecksumError);
        CHECK_THROWS_AS(deserialize_checkpoint(std::string()), ChecksumError);
    }
    SUBCASE("trailing garbage") {
        CHECK_THROWS_AS(deserialize_checkpoint(blob + "zz"), ChecksumError);
    }
}

TEST_CASE("save_checkpoint and load_checkpoint round-trip through disk") {
    support::TempDir dir("checkpoint");
    ModelState s = make_state();
    std::string path = dir.sub("model.ckpt");
    save_checkpoint(s, path);
    ModelState back = load_checkpoint(path);
    CHECK(support::state_fingerprint(back) == support::state_fingerprint(s));
    CHECK(serialize_checkpoint(back) == serialize_checkpoint(s));

    CHECK_THROWS_AS(load_checkpoint(dir.sub("absent.ckpt")), MissingCheckpoint);
    CHECK_THROWS_AS(save_checkpoint(s, dir.sub("no/such/dir/model.ckpt")), IoError);
}

TEST_CASE("distinct states produce distinct checkpoints") {
    ModelState a = make_state();
    ModelState b = make_state();
    b.dec.bout.value.v[2] += 1e-12;
    CHECK(serialize_checkpoint(a) != serialize_checkpoint(b));
}
