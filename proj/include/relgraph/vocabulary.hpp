#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "relgraph/csv.hpp"
#include "relgraph/errors.hpp"
#include "relgraph/relational.hpp"

namespace relgraph {

using TokenId = int;

// Reserved ids, fixed at positions 0..6.
enum ReservedToken : TokenId {
    kPad = 0,
    kMask = 1,
    kUnk = 2,
    kNull = 3,
    kTab = 4,
    kCol = 5,
    kVal = 6,
};
inline constexpr int kReservedCount = 7;

inline const char* reserved_token_string(TokenId id) {
    static const char* names[kReservedCount] = {"[PAD]", "[MASK]", "[UNK]", "[NULL]",
                                                "[TAB]", "[COL]", "[VAL]"};
    return names[id];
}

inline std::vector<std::string> split_whitespace(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// Closed word-level vocabulary. Ids are dense; unknown tokens map to [UNK].
class Vocabulary {
  public:
    Vocabulary() {
        for (TokenId i = 0; i < kReservedCount; ++i) add_token(reserved_token_string(i));
    }

    TokenId id_of(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    const std::string& token_of(TokenId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
            throw TokenOutOfRange("token id " + std::to_string(id) + " out of range");
        return tokens_[static_cast<std::size_t>(id)];
    }

    std::size_t size() const { return tokens_.size(); }

    std::vector<TokenId> encode_text(const std::string& text) const {
        std::vector<TokenId> ids;
        for (const auto& tok : split_whitespace(text)) ids.push_back(id_of(tok));
        return ids;
    }

    // One token per line; line number equals id.
    std::string serialize() const {
        std::string out;
        for (const auto& t : tokens_) {
            out += t;
            out += '\n';
        }
        return out;
    }

    static Vocabulary deserialize(const std::string& text) {
        Vocabulary v;
        std::size_t pos = 0, line_no = 0;
        while (pos < text.size()) {
            std::size_t nl = text.find('\n', pos);
            std::string line = text.substr(pos, nl == std::string::npos ? nl : nl - pos);
            pos = nl == std::string::npos ? text.size() : nl + 1;
            if (line.empty()) continue;
            if (line_no < kReservedCount) {
                if (line != reserved_token_string(static_cast<TokenId>(line_no)))
                    throw Error("vocabulary file: reserved token mismatch at line " +
                                std::to_string(line_no));
            } else {
                v.add_token(line);
            }
            ++line_no;
        }
        return v;
    }

    void save(const std::string& path) const { write_text_file(path, serialize()); }
    static Vocabulary load(const std::string& path) { return deserialize(read_text_file(path)); }

  private:
    friend Vocabulary build_vocabulary(const std::vector<RelationalDatabase>&, std::size_t);

    void add_token(std::string t) {
        TokenId id = static_cast<TokenId>(tokens_.size());
        token_to_id_.emplace(t, id);
        tokens_.push_back(std::move(t));
    }

    std::unordered_map<std::string, TokenId> token_to_id_;
    std::vector<std::string> tokens_;
};

// Vocabulary over table names, column names and non-NULL cell values.
// Tokens with corpus frequency >= min_freq are kept, ordered by frequency
// descending, ties lexicographic.
inline Vocabulary build_vocabulary(const std::vector<RelationalDatabase>& corpus,
                                   std::size_t min_freq = 1) {
    if (corpus.empty()) throw EmptyCorpus("cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::size_t> freq;
    auto count = [&](const std::string& text) {
        for (const auto& tok : split_whitespace(text)) ++freq[tok];
    };
    for (const auto& db : corpus) {
        for (const auto& t : db.tables) {
            count(t.name);
            for (const auto& c : t.columns) count(c.name);
        }
        for (const auto& tr : db.rows)
            for (const Row& r : tr)
                for (const Cell& c : r)
                    if (!c.null) count(c.value);
    }

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [tok, n] : freq) {
        if (n < min_freq) continue;
        bool reserved = false;
        for (TokenId i = 0; i < kReservedCount; ++i)
            if (tok == reserved_token_string(i)) reserved = true;
        if (!reserved) kept.emplace_back(tok, n);
    }
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    for (auto& [tok, n] : kept) v.add_token(tok);
    return v;
}

}  // namespace relgraph
