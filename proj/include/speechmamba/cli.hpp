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

// Command-line surface: train / decode / score / build-longcontext /
// gradcheck / bench-scan. All subcommands share one config-file schema plus
// repeatable --set key=value overrides.

#ifndef SPEECHMAMBA_CLI_HPP
#define SPEECHMAMBA_CLI_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "speechmamba/bench.hpp"
#include "speechmamba/data.hpp"
#include "speechmamba/decoding.hpp"
#include "speechmamba/features.hpp"
#include "speechmamba/gradsuite.hpp"
#include "speechmamba/train.hpp"

namespace sm {

// Schema violations get their own category so the exit path can distinguish
// them from missing files and usage mistakes.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"d_model", c.d_model},
                          {"num_heads", c.num_heads},
                          {"encoder_blocks", c.encoder_blocks},
                          {"decoder_blocks", c.decoder_blocks},
                          {"conv_width", c.conv_width},
                          {"ssm_state", c.ssm_state},
                          {"expand", c.expand},
                          {"vocab_size", c.vocab_size},
                          {"dropout", c.dropout_p},
                          {"frontend_channels", c.frontend_channels},
                          {"feat_dim", c.feat_dim},
                          {"ffn_dim", c.ffn_dim},
                          {"mamba_encoder", c.mamba_encoder},
                          {"mamba_decoder", c.mamba_decoder},
                          {"use_s2s", c.use_s2s},
                          {"posenc_encoder", c.posenc_encoder}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<std::int64_t>();
    c.num_heads = j.at("num_heads").get<std::int64_t>();
    c.encoder_blocks = j.at("encoder_blocks").get<std::int64_t>();
    c.decoder_blocks = j.at("decoder_blocks").get<std::int64_t>();
    c.conv_width = j.at("conv_width").get<std::int64_t>();
    c.ssm_state = j.at("ssm_state").get<std::int64_t>();
    c.expand = j.at("expand").get<std::int64_t>();
    c.vocab_size = j.at("vocab_size").get<std::int64_t>();
    c.dropout_p = j.at("dropout").get<double>();
    c.frontend_channels = j.at("frontend_channels").get<std::int64_t>();
    c.feat_dim = j.at("feat_dim").get<std::int64_t>();
    c.ffn_dim = j.at("ffn_dim").get<std::int64_t>();
    c.mamba_encoder = j.at("mamba_encoder").get<bool>();
    c.mamba_decoder = j.at("mamba_decoder").get<bool>();
    c.use_s2s = j.at("use_s2s").get<bool>();
    c.posenc_encoder = j.at("posenc_encoder").get<bool>();
    return c;
}

namespace cli_detail {

// Config file first, then --set overrides, last writer wins.
inline void apply_config_sources(const std::string& config_path,
                                 const std::vector<std::string>& sets, TrainConfig& tc,
                                 ModelConfig& mc) {
    try {
        if (!config_path.empty()) apply_config(read_config_file(config_path), tc, mc);
        for (const auto& kv : sets) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0)
                throw ValueError("--set expects key=value, got '" + kv + "'");
            std::map<std::string, std::string> one;
            one[kv.substr(0, eq)] = kv.substr(eq + 1);
            apply_config(one, tc, mc);
        }
        tc.validate();
    } catch (const IoError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

inline Tensor utterance_features(const UtteranceRecord& rec, const FbankConfig& fb) {
    AudioData a = read_audio(rec.audio_path);
    std::vector<double> samples =
        a.sample_rate == fb.sample_rate ? std::move(a.samples)
                                        : resample(a.samples, a.sample_rate, fb.sample_rate);
    return fbank(samples, fb);
}

inline std::vector<TrainUtterance> load_corpus(const std::vector<UtteranceRecord>& recs,
                                               const Vocab& vocab, const FbankConfig& fb) {
    std::vector<TrainUtterance> items;
    items.reserve(recs.size());
    for (const auto& rec : recs) {
        TrainUtterance u;
        u.id = rec.id;
        u.feats = utterance_features(rec, fb);
        u.tokens = vocab.tokenize(normalize_text(rec.text));
        u.duration_s = rec.duration_s;
        items.push_back(std::move(u));
    }
    return items;
}

// `<utt_id>\t<text>` per line; blank lines skipped.
inline std::vector<std::pair<std::string, std::string>> read_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<std::pair<std::string, std::string>> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw ValueError(path + ":" + std::to_string(lineno) + ": expected <id>\\t<text>");
        rows.emplace_back(line.substr(0, tab), line.substr(tab + 1));
    }
    return rows;
}

inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream iss(text);
    std::string w;
    while (iss >> w) words.push_back(w);
    return words;
}

}  // namespace cli_detail

// ---------------------------------------------------------------------------
// Subcommands

struct TrainArgs {
    std::string config_path, train_manifest, dev_manifest, vocab_path, out_dir = "run";
    std::vector<std::string> sets;
    std::int64_t seed = -1;  // <0: keep config value
    std::int64_t max_steps = -1;
};

inline int cmd_train(const TrainArgs& a, std::ostream& out) {
    TrainConfig tc;
    ModelConfig mc;
    cli_detail::apply_config_sources(a.config_path, a.sets, tc, mc);
    if (a.seed >= 0) tc.seed = a.seed;
    tc.seed = resolve_seed(tc.seed);

    const auto train_recs = read_manifest(a.train_manifest);
    if (train_recs.empty()) throw ValueError("train manifest " + a.train_manifest + " is empty");
    Vocab vocab;
    if (!a.vocab_path.empty()) {
        vocab = Vocab::load(a.vocab_path);
    } else {
        std::vector<std::string> texts;
        texts.reserve(train_recs.size());
        for (const auto& r : train_recs) texts.push_back(r.text);
        vocab = Vocab::build_char(texts);
    }
    mc.vocab_size = vocab.vocab_size();

    FbankConfig fb;
    fb.n_mels = mc.feat_dim;
    const auto train_items = cli_detail::load_corpus(train_recs, vocab, fb);
    std::vector<TrainUtterance> dev_items;
    if (!a.dev_manifest.empty())
        dev_items = cli_detail::load_corpus(read_manifest(a.dev_manifest), vocab, fb);

    std::filesystem::create_directories(a.out_dir);
    vocab.save(a.out_dir + "/vocab.txt");
    std::ofstream metrics(a.out_dir + "/metrics.csv");
    if (!metrics) throw IoError("cannot open " + a.out_dir + "/metrics.csv for writing");

    // parameter init draws from the global stream, so reproducibility needs
    // the seed planted before construction, not only inside train_loop
    seed_all(static_cast<std::uint64_t>(tc.seed));
    SpeechMambaModel model = build_model(mc);
    out << "training: " << train_items.size() << " utterances, vocab " << mc.vocab_size
        << ", params " << param_count(model) << ", seed " << tc.seed << "\n";
    TrainResult res = train_loop(model, train_items, dev_items, tc, a.out_dir, &metrics,
                                 a.max_steps);

    std::ostringstream warn;
    Checkpoint avg = average_checkpoints(res.checkpoints, tc.avg_top_k, &warn);
    if (!warn.str().empty()) out << warn.str();
    nlohmann::json meta = nlohmann::json::parse(avg.metadata_json);
    meta["model_config"] = model_config_to_json(mc);
    const std::string avg_path = a.out_dir + "/averaged.smck";
    save_checkpoint(avg_path, avg.params, meta.dump());

    out << "steps " << res.steps << ", skipped batches " << res.skipped_batches << "\n";
    if (!res.dev_metrics.empty()) out << "final dev metric " << res.dev_metrics.back() << "\n";
    out << "averaged checkpoint: " << avg_path << "\n";
    return 0;
}

struct DecodeArgs {
    std::string model_path, manifest, vocab_path, out_path, config_path;
    std::vector<std::string> sets;
    bool greedy = false;
    std::int64_t beam = 66;
    double ctc_weight = 0.4;
};

inline int cmd_decode(const DecodeArgs& a, std::ostream& out) {
    Checkpoint ck = read_checkpoint(a.model_path);
    ModelConfig mc;
    const nlohmann::json meta =
        nlohmann::json::parse(ck.metadata_json, nullptr, /*allow_exceptions=*/false);
    if (meta.is_object() && meta.contains("model_config")) {
        mc = model_config_from_json(meta.at("model_config"));
    } else if (!a.config_path.empty() || !a.sets.empty()) {
        TrainConfig tc_unused;
        cli_detail::apply_config_sources(a.config_path, a.sets, tc_unused, mc);
    } else {
        throw ConfigError(
            "config: checkpoint carries no model config; pass --config or --set");
    }
    mc.dropout_p = 0.0;

    Vocab vocab = Vocab::load(a.vocab_path);
    if (mc.vocab_size != vocab.vocab_size())
        throw ValueError("vocab size " + std::to_string(vocab.vocab_size()) +
                         " does not match model vocab_size " + std::to_string(mc.vocab_size));
    SpeechMambaModel model = build_model(mc);
    load_checkpoint(a.model_path, model.reg);

    DecodeConfig dc;
    dc.beam_width = a.beam;
    dc.ctc_weight = a.ctc_weight;
    const bool use_beam = !a.greedy && mc.use_s2s;

    std::ofstream file_out;
    if (!a.out_path.empty()) {
        file_out.open(a.out_path);
        if (!file_out) throw IoError("cannot open " + a.out_path + " for writing");
    }
    std::ostream& dst = a.out_path.empty() ? out : file_out;

    FbankConfig fb;
    fb.n_mels = mc.feat_dim;
    NoGradGuard ng;
    for (const auto& rec : read_manifest(a.manifest)) {
        Tensor feats = cli_detail::utterance_features(rec, fb);
        const std::int64_t T = feats.dim(0);
        Tensor batched = reshape(feats, {1, T, mc.feat_dim});
        std::vector<std::int64_t> ids;
        if (use_beam) {
            ids = beam_search(model, batched, T, dc);
        } else {
            std::vector<std::int64_t> enc_lens;
            Tensor enc = encode(model, batched, {T}, enc_lens, false);
            Tensor lp = log_softmax_lastdim(model.ctc_head(enc));
            Tensor lp_t = reshape(slice(lp, 1, 0, enc_lens[0]),
                                  {enc_lens[0], mc.vocab_size + 1});
            ids = greedy_ctc_decode(lp_t);
        }
        // the CTC class set includes the reserved BOS/EOS ids, which carry no
        // text; a weakly trained head can still argmax them
        std::vector<std::int64_t> symbols;
        symbols.reserve(ids.size());
        for (const std::int64_t id : ids)
            if (id >= Vocab::kFirstSymbolId) symbols.push_back(id);
        dst << rec.id << "\t" << vocab.detokenize(symbols) << "\n";
    }
    return 0;
}

struct ScoreArgs {
    std::string ref_path, hyp_path;
};

inline int cmd_score(const ScoreArgs& a, std::ostream& out) {
    const auto ref_rows = cli_detail::read_tsv(a.ref_path);
    const auto hyp_rows = cli_detail::read_tsv(a.hyp_path);
    if (ref_rows.empty()) throw ValueError("reference file " + a.ref_path + " has no rows");
    std::map<std::string, std::string> hyp_by_id;
    for (const auto& [id, text] : hyp_rows) {
        if (!hyp_by_id.emplace(id, text).second)
            throw ValueError("duplicate hypothesis id '" + id + "' in " + a.hyp_path);
    }
    std::vector<std::vector<std::string>> refs, hyps;
    for (const auto& [id, text] : ref_rows) {
        const auto it = hyp_by_id.find(id);
        if (it == hyp_by_id.end())
            throw ValueError("no hypothesis for utterance '" + id + "' in " + a.hyp_path);
        refs.push_back(cli_detail::split_words(text));
        hyps.push_back(cli_detail::split_words(it->second));
    }
    const WerCounts c = word_error_rate(refs, hyps);
    std::ostringstream line;
    line.setf(std::ios::fixed);
    line.precision(2);
    line << "WER " << 100.0 * c.wer();
    out << line.str() << "\n";
    out << "sub " << c.substitutions << " del " << c.deletions << " ins " << c.insertions
        << " ref_words " << c.ref_words << " utts " << refs.size() << "\n";
    return 0;
}

struct BuildLongContextArgs {
    std::string manifest, out_manifest, audio_dir = "longcontext_audio";
    double min_s = 45.0, max_s = 60.0;
};

inline int cmd_build_longcontext(const BuildLongContextArgs& a, std::ostream& out) {
    const auto recs = read_manifest(a.manifest);
    LongContextSpec spec{a.min_s, a.max_s};
    std::filesystem::create_directories(a.audio_dir);
    const auto merged = build_long_context(recs, spec, a.audio_dir);
    std::vector<UtteranceRecord> out_recs;
    out_recs.reserve(merged.size());
    double total = 0.0;
    for (const auto& m : merged) {
        out_recs.push_back(m.record);
        total += m.record.duration_s;
    }
    write_manifest(a.out_manifest, out_recs);
    std::ostringstream line;
    line.setf(std::ios::fixed);
    line.precision(2);
    line << "merged " << out_recs.size() << " utterances, total " << total << " s, avg "
         << (out_recs.empty() ? 0.0 : total / static_cast<double>(out_recs.size())) << " s";
    out << line.str() << "\n";
    return 0;
}

inline int cmd_gradcheck(std::ostream& out) {
    const auto entries = run_grad_suite(&out);
    std::size_t failed = 0;
    for (const auto& e : entries)
        if (!e.result.ok) ++failed;
    if (failed > 0) {
        out << "gradcheck: " << failed << " of " << entries.size() << " cases failed\n";
        return 1;
    }
    out << "gradcheck: all " << entries.size() << " cases passed\n";
    return 0;
}

struct BenchScanArgs {
    std::vector<std::int64_t> lengths = {512, 1024, 2048, 4096};
    std::int64_t channels = 16, state = 16;
    int runs = 3;
};

inline int cmd_bench_scan(const BenchScanArgs& a, std::ostream& out) {
    out << "T\tparallel_s\tsequential_s\n";
    for (const std::int64_t T : a.lengths) {
        const ScanBenchReport r = bench_scan(T, a.channels, a.state, a.runs);
        std::ostringstream line;
        line.setf(std::ios::fixed);
        line.precision(6);
        line << T << "\t" << r.parallel_s << "\t" << r.sequential_s;
        out << line.str() << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Dispatch

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    CLI::App app{"Speech-Mamba ASR toolkit"};
    app.require_subcommand(1);

    TrainArgs ta;
    auto* tr = app.add_subcommand("train", "Train a model from manifests");
    tr->add_option("--config", ta.config_path, "config file (key = value lines)");
    tr->add_option("--set", ta.sets, "override, e.g. --set d_model=64")->take_all();
    tr->add_option("--train-manifest", ta.train_manifest, "training manifest (JSONL)")
        ->required();
    tr->add_option("--dev-manifest", ta.dev_manifest, "dev manifest (JSONL)");
    tr->add_option("--vocab", ta.vocab_path, "token table; built from training text if absent");
    tr->add_option("--out-dir", ta.out_dir, "output directory");
    tr->add_option("--seed", ta.seed, "RNG seed override");
    tr->add_option("--max-steps", ta.max_steps, "stop after this many optimizer steps");

    DecodeArgs da;
    auto* de = app.add_subcommand("decode", "Decode a manifest with a trained model");
    de->add_option("--model", da.model_path, "checkpoint path")->required();
    de->add_option("--manifest", da.manifest, "manifest to decode")->required();
    de->add_option("--vocab", da.vocab_path, "token table")->required();
    de->add_option("--out", da.out_path, "output TSV (default stdout)");
    de->add_option("--config", da.config_path, "model config when not in the checkpoint");
    de->add_option("--set", da.sets, "config override")->take_all();
    de->add_flag("--greedy", da.greedy, "greedy CTC instead of joint beam search");
    de->add_option("--beam", da.beam, "beam width");
    de->add_option("--ctc-weight", da.ctc_weight, "CTC weight in joint scoring");

    ScoreArgs sa;
    auto* sc = app.add_subcommand("score", "WER between reference and hypothesis TSVs");
    sc->add_option("--ref", sa.ref_path, "reference TSV")->required();
    sc->add_option("--hyp", sa.hyp_path, "hypothesis TSV")->required();

    BuildLongContextArgs ba;
    auto* bl = app.add_subcommand("build-longcontext", "Merge utterances into long ones");
    bl->add_option("--manifest", ba.manifest, "source manifest")->required();
    bl->add_option("--out-manifest", ba.out_manifest, "merged manifest path")->required();
    bl->add_option("--audio-dir", ba.audio_dir, "directory for merged WAV files");
    bl->add_option("--min-s", ba.min_s, "minimum merged duration, exclusive");
    bl->add_option("--max-s", ba.max_s, "maximum merged duration, exclusive");

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");

    BenchScanArgs bsa;
    auto* bs = app.add_subcommand("bench-scan", "Time parallel vs sequential selective scan");
    bs->add_option("--t", bsa.lengths, "sequence lengths")->take_all();
    bs->add_option("--channels", bsa.channels, "inner channels");
    bs->add_option("--state", bsa.state, "SSM state size");
    bs->add_option("--runs", bsa.runs, "runs per point (median)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (tr->parsed()) return cmd_train(ta, out);
        if (de->parsed()) return cmd_decode(da, out);
        if (sc->parsed()) return cmd_score(sa, out);
        if (bl->parsed()) return cmd_build_longcontext(ba, out);
        if (gc->parsed()) return cmd_gradcheck(out);
        if (bs->parsed()) return cmd_bench_scan(bsa, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 4;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << "usage error: no subcommand\n";
    return 2;
}

}  // namespace sm

#endif  // SPEECHMAMBA_CLI_HPP
