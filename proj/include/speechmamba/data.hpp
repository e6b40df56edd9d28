// Copyright 2026 Speech-Mamba C++ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dataset handling: JSONL manifests, text normalization, the character
// tokenizer, and the long-context subset builder that merges consecutive
// same-speaker utterances into a target duration window.

#ifndef SPEECHMAMBA_DATA_HPP
#define SPEECHMAMBA_DATA_HPP

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "speechmamba/audio.hpp"
#include "speechmamba/tensor.hpp"

namespace sm {

struct UtteranceRecord {
    std::string id;
    std::string audio_path;
    double duration_s = 0.0;
    std::string speaker;
    std::string order_key;
    std::string text;
};

// ---------------------------------------------------------------------------
// Manifest: newline-delimited JSON, one record per line.

inline std::vector<UtteranceRecord> read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    std::vector<UtteranceRecord> out;
    std::set<std::string> seen;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + ":" + std::to_string(lineno) + ": malformed JSON: " + e.what());
        }
        UtteranceRecord r;
        try {
            r.id = j.at("id").get<std::string>();
            r.audio_path = j.at("audio_path").get<std::string>();
            r.duration_s = j.at("duration_s").get<double>();
            r.speaker = j.at("speaker").get<std::string>();
            r.order_key = j.at("order_key").get<std::string>();
            r.text = j.at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw IoError(path + ":" + std::to_string(lineno) + ": bad record: " + e.what());
        }
        if (r.duration_s <= 0.0)
            throw IoError(path + ":" + std::to_string(lineno) + ": duration_s must be > 0");
        if (!seen.insert(r.id).second)
            throw IoError(path + ":" + std::to_string(lineno) + ": duplicate id " + r.id);
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_manifest(const std::string& path, const std::vector<UtteranceRecord>& recs) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot create " + path);
    for (const auto& r : recs) {
        nlohmann::json j{{"id", r.id},           {"audio_path", r.audio_path},
                         {"duration_s", r.duration_s}, {"speaker", r.speaker},
                         {"order_key", r.order_key},   {"text", r.text}};
        f << j.dump() << "\n";
    }
    if (!f) throw IoError("write failed on " + path);
}

// ---------------------------------------------------------------------------
// Text normalization: uppercase, keep letters, digits, apostrophes and
// single spaces.

inline std::string normalize_text(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        const unsigned char u = static_cast<unsigned char>(c);
        char k = 0;
        if (u >= 'a' && u <= 'z')
            k = static_cast<char>(u - 'a' + 'A');
        else if ((u >= 'A' && u <= 'Z') || (u >= '0' && u <= '9') || u == '\'')
            k = static_cast<char>(u);
        else if (u == ' ' || u == '\t' || u == '\n')
            pending_space = true;
        if (k != 0) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(k);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Character vocabulary. Ids 0..2 are reserved (blank, BOS, EOS); symbols
// start at 3 in sorted character order.

class Vocab {
  public:
    static Vocab build_char(const std::vector<std::string>& texts) {
        std::set<char> chars;
        for (const auto& t : texts)
            for (char c : normalize_text(t)) chars.insert(c);
        Vocab v;
        std::int64_t next = kFirstSymbolId;
        for (char c : chars) {
            v.tok_to_id_[std::string(1, c)] = next;
            v.id_to_tok_[next] = std::string(1, c);
            ++next;
        }
        return v;
    }

    // token ids, BOS/EOS excluded
    std::vector<std::int64_t> tokenize(const std::string& text) const {
        std::vector<std::int64_t> out;
        for (char c : normalize_text(text)) {
            auto it = tok_to_id_.find(std::string(1, c));
            if (it == tok_to_id_.end())
                throw ValueError("tokenize: symbol '" + std::string(1, c) +
                                 "' is not in the vocabulary");
            out.push_back(it->second);
        }
        return out;
    }

    std::string detokenize(const std::vector<std::int64_t>& ids) const {
        std::string out;
        for (auto id : ids) {
            auto it = id_to_tok_.find(id);
            if (it == id_to_tok_.end())
                throw ValueError("detokenize: unknown id " + std::to_string(id));
            out += it->second;
        }
        return out;
    }

    // symbol count; model vocab_size = size() + 2 (BOS and EOS)
    std::int64_t size() const { return static_cast<std::int64_t>(tok_to_id_.size()); }

    // highest assigned id; this is the model's vocab_size (ids 1..V)
    std::int64_t vocab_size() const {
        return tok_to_id_.empty() ? 2 : id_to_tok_.rbegin()->first;
    }

    void save(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw IoError("cannot create " + path);
        for (const auto& [id, tok] : id_to_tok_) f << id << "\t" << tok << "\n";
        if (!f) throw IoError("write failed on " + path);
    }

    // lines of "<id>\t<token>"; token may contain spaces
    static Vocab load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open " + path);
        Vocab v;
        std::string line;
        std::int64_t lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos)
                throw IoError(path + ":" + std::to_string(lineno) + ": expected <id>\\t<token>");
            const std::int64_t id = std::stoll(line.substr(0, tab));
            const std::string tok = line.substr(tab + 1);
            if (id < kFirstSymbolId)
                throw IoError(path + ":" + std::to_string(lineno) + ": ids below " +
                              std::to_string(kFirstSymbolId) + " are reserved");
            if (v.id_to_tok_.count(id) || v.tok_to_id_.count(tok))
                throw IoError(path + ":" + std::to_string(lineno) + ": duplicate entry");
            v.tok_to_id_[tok] = id;
            v.id_to_tok_[id] = tok;
        }
        return v;
    }

    static constexpr std::int64_t kFirstSymbolId = 3;

  private:
    std::map<std::string, std::int64_t> tok_to_id_;
    std::map<std::int64_t, std::string> id_to_tok_;
};

// ---------------------------------------------------------------------------
// Long-context subset builder.

struct LongContextSpec {
    double min_s = 45.0;
    double max_s = 60.0;

    void validate() const {
        if (!(0.0 < min_s && min_s < max_s))
            throw ValueError("LongContextSpec: need 0 < min_s < max_s");
    }
};

// Greedy sequential packing: within each speaker (records ordered by
// order_key), accumulate consecutive utterances; once the accumulated
// duration exceeds min_s the pack is emitted if it is still under max_s and
// discarded otherwise; trailing packs that never reach min_s are dropped.
inline std::vector<std::vector<UtteranceRecord>> pack_long_context(
    std::vector<UtteranceRecord> records, const LongContextSpec& spec) {
    spec.validate();
    std::stable_sort(records.begin(), records.end(),
                     [](const UtteranceRecord& a, const UtteranceRecord& b) {
                         if (a.speaker != b.speaker) return a.speaker < b.speaker;
                         return a.order_key < b.order_key;
                     });
    std::vector<std::vector<UtteranceRecord>> packs;
    std::vector<UtteranceRecord> cur;
    double acc = 0.0;
    std::string cur_speaker;
    auto flush_if_open = [&]() {
        cur.clear();
        acc = 0.0;
    };
    for (const auto& r : records) {
        if (r.speaker != cur_speaker) {
            flush_if_open();  // leftover below min_s is dropped
            cur_speaker = r.speaker;
        }
        cur.push_back(r);
        acc += r.duration_s;
        if (acc > spec.min_s) {
            if (acc < spec.max_s) packs.push_back(cur);
            flush_if_open();
        }
    }
    return packs;
}

struct MergedUtterance {
    UtteranceRecord record;                // merged manifest entry
    std::vector<std::string> source_ids;   // constituents, in order
};

// Packs records and materializes each pack: concatenated audio written to
// out_dir as WAV, space-joined transcript, recomputed duration.
inline std::vector<MergedUtterance> build_long_context(
    const std::vector<UtteranceRecord>& records, const LongContextSpec& spec,
    const std::string& out_dir) {
    const auto packs = pack_long_context(records, spec);
    std::vector<MergedUtterance> out;
    std::int64_t idx = 0;
    for (const auto& pack : packs) {
        std::vector<double> samples;
        std::int64_t rate = 0;
        std::string text;
        MergedUtterance m;
        for (const auto& r : pack) {
            AudioData a = read_audio(r.audio_path);  // missing file raises IoError
            if (rate == 0)
                rate = a.sample_rate;
            else if (rate != a.sample_rate)
                throw ValueError("build_long_context: sample rate mismatch inside pack at " +
                                 r.audio_path);
            samples.insert(samples.end(), a.samples.begin(), a.samples.end());
            if (!text.empty()) text += " ";
            text += r.text;
            m.source_ids.push_back(r.id);
        }
        UtteranceRecord& rec = m.record;
        rec.speaker = pack.front().speaker;
        rec.id = rec.speaker + "-long-" + std::to_string(idx);
        rec.order_key = pack.front().order_key;
        rec.text = text;
        rec.duration_s = static_cast<double>(samples.size()) / static_cast<double>(rate);
        rec.audio_path = out_dir + "/" + rec.id + ".wav";
        write_wav(rec.audio_path, samples, rate);
        out.push_back(std::move(m));
        ++idx;
    }
    return out;
}

}  // namespace sm

#endif  // SPEECHMAMBA_DATA_HPP
