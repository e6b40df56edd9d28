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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "speechmamba/data.hpp"

namespace {

sm::UtteranceRecord rec(const std::string& id, double dur, const std::string& speaker,
                        const std::string& order_key, const std::string& text = "HELLO") {
    sm::UtteranceRecord r;
    r.id = id;
    r.audio_path = "/audio/" + id + ".flac";
    r.duration_s = dur;
    r.speaker = speaker;
    r.order_key = order_key;
    r.text = text;
    return r;
}

std::string temp_path(const std::string& name) { return testing::TempDir() + name; }

TEST(Manifest, RoundTrip) {
    std::vector<sm::UtteranceRecord> recs = {
        rec("spk1-0001", 3.25, "spk1", "0001", "THE CAT SAT"),
        rec("spk1-0002", 1.5, "spk1", "0002", "ON THE MAT"),
        rec("spk2-0001", 7.125, "spk2", "0001", "IT'S FINE"),
    };
    const std::string path = temp_path("manifest.jsonl");
    sm::write_manifest(path, recs);
    const auto got = sm::read_manifest(path);
    ASSERT_EQ(got.size(), recs.size());
    for (std::size_t i = 0; i < recs.size(); ++i) {
        EXPECT_EQ(got[i].id, recs[i].id);
        EXPECT_EQ(got[i].audio_path, recs[i].audio_path);
        EXPECT_DOUBLE_EQ(got[i].duration_s, recs[i].duration_s);
        EXPECT_EQ(got[i].speaker, recs[i].speaker);
        EXPECT_EQ(got[i].order_key, recs[i].order_key);
        EXPECT_EQ(got[i].text, recs[i].text);
    }
}

TEST(Manifest, SkipsBlankLines) {
    const std::string path = temp_path("manifest_blank.jsonl");
    {
        std::ofstream f(path);
        f << "\n";
        f << R"({"id":"a","audio_path":"a.wav","duration_s":1.0,"speaker":"s","order_key":"0","text":"HI"})"
          << "\n\n";
    }
    const auto got = sm::read_manifest(path);
    ASSERT_EQ(got.size(), 1u);
    EXPECT_EQ(got[0].id, "a");
}

TEST(Manifest, EmptyFileGivesEmptyVector) {
    const std::string path = temp_path("manifest_empty.jsonl");
    std::ofstream(path).close();
    EXPECT_TRUE(sm::read_manifest(path).empty());
}

TEST(Manifest, MalformedJsonNamesTheLine) {
    const std::string path = temp_path("manifest_bad.jsonl");
    {
        std::ofstream f(path);
        f << R"({"id":"a","audio_path":"a.wav","duration_s":1.0,"speaker":"s","order_key":"0","text":"HI"})"
          << "\n";
        f << "{not json\n";
    }
    try {
        sm::read_manifest(path);
        FAIL() << "expected IoError";
    } catch (const sm::IoError& e) {
        EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
    }
}

TEST(Manifest, MissingFieldNamesTheLine) {
    const std::string path = temp_path("manifest_field.jsonl");
    {
        std::ofstream f(path);
        f << R"({"id":"a","duration_s":1.0})" << "\n";
    }
    try {
        sm::read_manifest(path);
        FAIL() << "expected IoError";
    } catch (const sm::IoError& e) {
        EXPECT_NE(std::string(e.what()).find(":1:"), std::string::npos) << e.what();
    }
}

TEST(Manifest, DuplicateIdNamesTheId) {
    std::vector<sm::UtteranceRecord> recs = {rec("dup", 1.0, "s", "0"), rec("dup", 2.0, "s", "1")};
    const std::string path = temp_path("manifest_dup.jsonl");
    sm::write_manifest(path, recs);
    try {
        sm::read_manifest(path);
        FAIL() << "expected IoError";
    } catch (const sm::IoError& e) {
        EXPECT_NE(std::string(e.what()).find("dup"), std::string::npos) << e.what();
    }
}

TEST(Manifest, NonPositiveDurationRejected) {
    std::vector<sm::UtteranceRecord> recs = {rec("z", 0.0, "s", "0")};
    const std::string path = temp_path("manifest_dur.jsonl");
    sm::write_manifest(path, recs);
    EXPECT_THROW(sm::read_manifest(path), sm::IoError);
    EXPECT_THROW(sm::read_manifest(temp_path("no_such_manifest.jsonl")), sm::IoError);
}

TEST(NormalizeText, Examples) {
    EXPECT_EQ(sm::normalize_text("Hello,  World!"), "HELLO WORLD");
    EXPECT_EQ(sm::normalize_text("  it's\tme \n"), "IT'S ME");
    EXPECT_EQ(sm::normalize_text("abc123"), "ABC123");
    EXPECT_EQ(sm::normalize_text("A-B"), "AB");
    EXPECT_EQ(sm::normalize_text("!!!"), "");
    EXPECT_EQ(sm::normalize_text(""), "");
    EXPECT_EQ(sm::normalize_text("   "), "");
}

TEST(NormalizeText, Idempotent) {
    const std::vector<std::string> cases = {"Mixed CASE text", "a  b   c", "it's, IT'S!", "42nd"};
    for (const auto& s : cases) {
        const auto once = sm::normalize_text(s);
        EXPECT_EQ(sm::normalize_text(once), once) << s;
    }
}

TEST(Vocab, CharIdsAreSortedFromThree) {
    const auto v = sm::Vocab::build_char({"AB A"});
    // sorted symbols: ' ' < 'A' < 'B' -> ids 3, 4, 5
    EXPECT_EQ(v.tokenize("AB A"), (std::vector<std::int64_t>{4, 5, 3, 4}));
    EXPECT_EQ(v.size(), 3);
    EXPECT_EQ(v.vocab_size(), 5);
    EXPECT_EQ(v.detokenize({4, 5, 3, 4}), "AB A");
}

TEST(Vocab, EmptyCorpusReservesSpecialsOnly) {
    const auto v = sm::Vocab::build_char({});
    EXPECT_EQ(v.size(), 0);
    EXPECT_EQ(v.vocab_size(), 2);
    EXPECT_TRUE(v.tokenize("").empty());
}

TEST(Vocab, TokenizeInvertsDetokenize) {
    std::mt19937_64 rng(71);
    // interior space so the space symbol survives normalization
    const std::string charset = "ABCDEFGHIJKLMNOPQRSTUVWXYZ 0123456789'";
    std::uniform_int_distribution<std::size_t> pick(0, charset.size() - 1);
    std::uniform_int_distribution<int> len(0, 40);
    const auto v = sm::Vocab::build_char({charset});
    for (int trial = 0; trial < 200; ++trial) {
        std::string s;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) s.push_back(charset[pick(rng)]);
        const std::string norm = sm::normalize_text(s);
        EXPECT_EQ(v.detokenize(v.tokenize(s)), norm) << "input: '" << s << "'";
    }
}

TEST(Vocab, OovNamesTheSymbol) {
    const auto v = sm::Vocab::build_char({"AB"});
    try {
        v.tokenize("ABC");
        FAIL() << "expected ValueError";
    } catch (const sm::ValueError& e) {
        EXPECT_NE(std::string(e.what()).find("'C'"), std::string::npos) << e.what();
    }
    EXPECT_THROW(v.detokenize({99}), sm::ValueError);
}

TEST(Vocab, SaveLoadPreservesMapping) {
    const auto v = sm::Vocab::build_char({"THE QUICK'S 9TH FOX"});
    const std::string path = temp_path("vocab.tsv");
    v.save(path);
    const auto w = sm::Vocab::load(path);
    EXPECT_EQ(w.size(), v.size());
    EXPECT_EQ(w.vocab_size(), v.vocab_size());
    EXPECT_EQ(w.tokenize("THE QUICK'S 9TH FOX"), v.tokenize("THE QUICK'S 9TH FOX"));
}

TEST(Vocab, LoadRejectsReservedAndDuplicateIds) {
    {
        std::ofstream f(temp_path("vocab_reserved.tsv"));
        f << "2\tA\n";
    }
    EXPECT_THROW(sm::Vocab::load(temp_path("vocab_reserved.tsv")), sm::IoError);
    {
        std::ofstream f(temp_path("vocab_dup.tsv"));
        f << "3\tA\n4\tA\n";
    }
    EXPECT_THROW(sm::Vocab::load(temp_path("vocab_dup.tsv")), sm::IoError);
    {
        std::ofstream f(temp_path("vocab_notab.tsv"));
        f << "3 A\n";
    }
    EXPECT_THROW(sm::Vocab::load(temp_path("vocab_notab.tsv")), sm::IoError);
}

TEST(Packing, LongSinglesEachBecomeAPack) {
    sm::LongContextSpec spec;  // (45, 60)
    std::vector<sm::UtteranceRecord> recs = {rec("a", 50.0, "s", "0"), rec("b", 50.0, "s", "1"),
                                             rec("c", 50.0, "s", "2")};
    const auto packs = sm::pack_long_context(recs, spec);
    ASSERT_EQ(packs.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        ASSERT_EQ(packs[i].size(), 1u);
        EXPECT_EQ(packs[i][0].id, recs[i].id);
    }
}

TEST(Packing, ShortTotalIsDropped) {
    sm::LongContextSpec spec;
    std::vector<sm::UtteranceRecord> recs = {rec("a", 10.0, "s", "0"), rec("b", 10.0, "s", "1"),
                                             rec("c", 10.0, "s", "2")};
    EXPECT_TRUE(sm::pack_long_context(recs, spec).empty());
}

TEST(Packing, OvershootIsDiscardedAndAccumulatorResets) {
    sm::LongContextSpec spec;
    // 40 + 25 = 65 >= 60: discarded. The following 50 s utterance then
    // forms its own pack from a clean accumulator.
    std::vector<sm::UtteranceRecord> recs = {rec("a", 40.0, "s", "0"), rec("b", 25.0, "s", "1"),
                                             rec("c", 50.0, "s", "2")};
    const auto packs = sm::pack_long_context(recs, spec);
    ASSERT_EQ(packs.size(), 1u);
    ASSERT_EQ(packs[0].size(), 1u);
    EXPECT_EQ(packs[0][0].id, "c");
}

TEST(Packing, InRangeComboIsEmitted) {
    sm::LongContextSpec spec;
    std::vector<sm::UtteranceRecord> recs = {rec("a", 40.0, "s", "0"), rec("b", 10.0, "s", "1")};
    const auto packs = sm::pack_long_context(recs, spec);
    ASSERT_EQ(packs.size(), 1u);
    ASSERT_EQ(packs[0].size(), 2u);
    EXPECT_EQ(packs[0][0].id, "a");
    EXPECT_EQ(packs[0][1].id, "b");
}

TEST(Packing, SpeakerChangeResetsTheAccumulator) {
    sm::LongContextSpec spec;
    // 40 s of speaker x is left over when speaker y starts; it must not
    // leak into y's pack.
    std::vector<sm::UtteranceRecord> recs = {rec("x0", 40.0, "x", "0"), rec("y0", 40.0, "y", "0"),
                                             rec("y1", 10.0, "y", "1")};
    const auto packs = sm::pack_long_context(recs, spec);
    ASSERT_EQ(packs.size(), 1u);
    ASSERT_EQ(packs[0].size(), 2u);
    EXPECT_EQ(packs[0][0].id, "y0");
    EXPECT_EQ(packs[0][1].id, "y1");
}

TEST(Packing, SortsBySpeakerThenOrderKey) {
    sm::LongContextSpec spec;
    std::vector<sm::UtteranceRecord> recs = {rec("s-2", 15.0, "s", "2"), rec("s-0", 20.0, "s", "0"),
                                             rec("s-1", 20.0, "s", "1")};
    const auto packs = sm::pack_long_context(recs, spec);
    ASSERT_EQ(packs.size(), 1u);
    ASSERT_EQ(packs[0].size(), 3u);
    EXPECT_EQ(packs[0][0].id, "s-0");
    EXPECT_EQ(packs[0][1].id, "s-1");
    EXPECT_EQ(packs[0][2].id, "s-2");
}

TEST(Packing, RandomizedInvariants) {
    std::mt19937_64 rng(72);
    std::uniform_real_distribution<double> dur(5.0, 20.0);
    std::uniform_int_distribution<int> spk(0, 3);
    sm::LongContextSpec spec;
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<sm::UtteranceRecord> recs;
        for (int i = 0; i < 60; ++i)
            recs.push_back(rec("u" + std::to_string(i), dur(rng),
                               "spk" + std::to_string(spk(rng)),
                               (i < 10 ? "0" : "") + std::to_string(i)));
        const auto packs = sm::pack_long_context(recs, spec);

        // Reference order the packer works over.
        auto sorted = recs;
        std::stable_sort(sorted.begin(), sorted.end(),
                         [](const sm::UtteranceRecord& a, const sm::UtteranceRecord& b) {
                             if (a.speaker != b.speaker) return a.speaker < b.speaker;
                             return a.order_key < b.order_key;
                         });
        std::map<std::string, std::size_t> pos;
        for (std::size_t i = 0; i < sorted.size(); ++i) pos[sorted[i].id] = i;

        std::set<std::string> used;
        for (const auto& pack : packs) {
            ASSERT_FALSE(pack.empty());
            double total = 0.0;
            for (const auto& r : pack) {
                total += r.duration_s;
                EXPECT_TRUE(used.insert(r.id).second) << "record reused: " << r.id;
                EXPECT_EQ(r.speaker, pack.front().speaker);
            }
            EXPECT_GT(total, spec.min_s);
            EXPECT_LT(total, spec.max_s);
            for (std::size_t i = 1; i < pack.size(); ++i)
                EXPECT_EQ(pos[pack[i].id], pos[pack[i - 1].id] + 1)
                    << "non-consecutive constituents";
        }
    }
}

TEST(Packing, SpecValidation) {
    sm::LongContextSpec spec;
    spec.min_s = 60.0;
    spec.max_s = 45.0;
    EXPECT_THROW(sm::pack_long_context({}, spec), sm::ValueError);
    spec.min_s = 0.0;
    spec.max_s = 10.0;
    EXPECT_THROW(sm::pack_long_context({}, spec), sm::ValueError);
}

TEST(BuildLongContext, MergesAudioAndTranscripts) {
    namespace fs = std::filesystem;
    const std::string dir = temp_path("longctx_src");
    const std::string out_dir = temp_path("longctx_out");
    fs::create_directories(dir);
    fs::create_directories(out_dir);

    const std::int64_t rate = 8000;
    const double pi = 3.14159265358979323846;
    std::vector<sm::UtteranceRecord> recs;
    std::vector<std::vector<double>> waves;
    for (int i = 0; i < 4; ++i) {
        std::vector<double> x(4800);  // 0.6 s
        for (std::size_t t = 0; t < x.size(); ++t) {
            const double raw = 0.3 * std::sin(2.0 * pi * (200.0 + 50.0 * i) * double(t) / rate);
            x[t] = std::round(raw * 32768.0) / 32768.0;  // land on the int16 grid
        }
        waves.push_back(x);
        auto r = rec("utt" + std::to_string(i), 0.6, "spk", std::to_string(i),
                     "WORD" + std::to_string(i));
        r.audio_path = dir + "/utt" + std::to_string(i) + ".wav";
        sm::write_wav(r.audio_path, x, rate);
        recs.push_back(r);
    }

    sm::LongContextSpec spec;
    spec.min_s = 1.0;
    spec.max_s = 2.0;
    const auto merged = sm::build_long_context(recs, spec, out_dir);
    ASSERT_EQ(merged.size(), 2u);

    EXPECT_EQ(merged[0].record.id, "spk-long-0");
    EXPECT_EQ(merged[0].record.speaker, "spk");
    EXPECT_EQ(merged[0].record.text, "WORD0 WORD1");
    EXPECT_EQ(merged[0].source_ids, (std::vector<std::string>{"utt0", "utt1"}));
    EXPECT_NEAR(merged[0].record.duration_s, 1.2, 1e-9);

    EXPECT_EQ(merged[1].record.id, "spk-long-1");
    EXPECT_EQ(merged[1].record.text, "WORD2 WORD3");
    EXPECT_EQ(merged[1].source_ids, (std::vector<std::string>{"utt2", "utt3"}));

    const sm::AudioData a = sm::read_audio(merged[0].record.audio_path);
    EXPECT_EQ(a.sample_rate, rate);
    ASSERT_EQ(a.samples.size(), waves[0].size() + waves[1].size());
    for (std::size_t i = 0; i < waves[0].size(); ++i) ASSERT_EQ(a.samples[i], waves[0][i]);
    for (std::size_t i = 0; i < waves[1].size(); ++i)
        ASSERT_EQ(a.samples[waves[0].size() + i], waves[1][i]);
}

TEST(BuildLongContext, MissingAudioRaisesIoError) {
    sm::LongContextSpec spec;
    spec.min_s = 1.0;
    spec.max_s = 2.0;
    std::vector<sm::UtteranceRecord> recs = {rec("ghost", 1.5, "s", "0")};
    recs[0].audio_path = temp_path("does_not_exist.wav");
    EXPECT_THROW(sm::build_long_context(recs, spec, testing::TempDir()), sm::IoError);
}

TEST(BuildLongContext, RateMismatchInsideAPackIsRejected) {
    namespace fs = std::filesystem;
    const std::string dir = temp_path("longctx_mix");
    fs::create_directories(dir);
    std::vector<double> x(4000, 0.0);
    sm::write_wav(dir + "/a.wav", x, 8000);
    sm::write_wav(dir + "/b.wav", x, 16000);
    auto ra = rec("a", 0.8, "s", "0");
    ra.audio_path = dir + "/a.wav";
    auto rb = rec("b", 0.8, "s", "1");
    rb.audio_path = dir + "/b.wav";
    sm::LongContextSpec spec;
    spec.min_s = 1.0;
    spec.max_s = 2.0;
    EXPECT_THROW(sm::build_long_context({ra, rb}, spec, dir), sm::ValueError);
}

}  // namespace
