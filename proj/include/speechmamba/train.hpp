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

// Training loop: Adam with warmup schedule, gradient accumulation and
// clipping, dynamic duration-budget batching, per-epoch dev evaluation,
// checkpoint saving and top-k checkpoint averaging.

#ifndef SPEECHMAMBA_TRAIN_HPP
#define SPEECHMAMBA_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "speechmamba/decoding.hpp"
#include "speechmamba/model.hpp"
#include "speechmamba/objectives.hpp"

namespace sm {

enum class SelectionMetric { dev_loss, dev_wer };

struct TrainConfig {
    std::int64_t epochs = 100;
    std::int64_t batch_size = 32;
    double max_batch_length = 500.0;  // duration budget per batch, seconds
    std::int64_t grad_accum = 4;
    double alpha = 0.3;  // CTC weight in the joint objective
    double peak_lr = 1e-3;
    std::int64_t warmup_steps = 1000;
    std::int64_t seed = 0;
    std::int64_t avg_top_k = 10;
    SelectionMetric selection_metric = SelectionMetric::dev_loss;
    double label_smoothing = 0.1;
    double grad_clip = 5.0;

    void validate() const {
        if (epochs < 1) throw ValueError("TrainConfig: epochs must be >= 1");
        if (batch_size < 1) throw ValueError("TrainConfig: batch_size must be >= 1");
        if (max_batch_length <= 0.0)
            throw ValueError("TrainConfig: max_batch_length must be positive");
        if (grad_accum < 1) throw ValueError("TrainConfig: grad_accum must be >= 1");
        if (alpha < 0.0 || alpha > 1.0) throw ValueError("TrainConfig: alpha must lie in [0,1]");
        if (peak_lr <= 0.0) throw ValueError("TrainConfig: peak_lr must be positive");
        if (warmup_steps < 1) throw ValueError("TrainConfig: warmup_steps must be >= 1");
        if (avg_top_k < 1) throw ValueError("TrainConfig: avg_top_k must be >= 1");
        if (label_smoothing < 0.0 || label_smoothing >= 1.0)
            throw ValueError("TrainConfig: label_smoothing must lie in [0,1)");
        if (grad_clip <= 0.0) throw ValueError("TrainConfig: grad_clip must be positive");
    }
};

// SPEECH_MAMBA_SEED overrides the configured seed when set.
inline std::int64_t resolve_seed(std::int64_t config_seed) {
    const char* env = std::getenv("SPEECH_MAMBA_SEED");
    if (!env || !*env) return config_seed;
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(env, &pos);
        if (pos != std::string(env).size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw ValueError("SPEECH_MAMBA_SEED must be an integer, got '" + std::string(env) + "'");
    }
}

// ---------------------------------------------------------------------------
// Learning-rate schedule: linear warmup to peak_lr, then inverse-sqrt decay.
// Both pieces meet at step == warmup.

struct NoamSchedule {
    double peak_lr = 1e-3;
    std::int64_t warmup = 1000;

    double lr(std::int64_t step) const {
        if (step < 1) throw ValueError("NoamSchedule: steps are 1-indexed");
        const double s = static_cast<double>(step), w = static_cast<double>(warmup);
        return peak_lr * std::min(s / w, std::sqrt(w / s));
    }
};

// ---------------------------------------------------------------------------
// Adam over every parameter in a registry.

class Adam {
  public:
    explicit Adam(ParamRegistry& reg, double beta1 = 0.9, double beta2 = 0.98,
                  double eps = 1e-9)
        : reg_(reg), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& [name, t] : reg.items()) {
            m_.emplace_back(t.size(), 0.0);
            v_.emplace_back(t.size(), 0.0);
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        std::size_t pi = 0;
        for (const auto& [name, param] : reg_.items()) {
            Tensor p = param;  // shared handle
            auto& data = p.data();
            const auto& g = p.grad();
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (std::size_t i = 0; i < data.size(); ++i) {
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                data[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
            ++pi;
        }
    }

    std::int64_t steps_taken() const { return t_; }

  private:
    ParamRegistry& reg_;
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

inline double global_grad_norm(const ParamRegistry& reg) {
    double sq = 0.0;
    for (const auto& [name, t] : reg.items()) {
        Tensor p = t;
        for (double g : p.grad()) sq += g * g;
    }
    return std::sqrt(sq);
}

// Scales all gradients so the global norm is at most max_norm. Returns the
// pre-clip norm.
inline double clip_gradients(ParamRegistry& reg, double max_norm) {
    const double norm = global_grad_norm(reg);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (const auto& [name, t] : reg.items()) {
            Tensor p = t;
            for (double& g : p.grad()) g *= scale;
        }
    }
    return norm;
}

// ---------------------------------------------------------------------------
// Checkpoint averaging.

struct CheckpointMeta {
    std::int64_t step = 0;
    std::int64_t epoch = 0;
    double dev_metric = 0.0;
    std::string path;
};

// Elementwise mean of the best k checkpoints by dev_metric (lower is
// better). Fewer than k available uses all of them and warns.
inline Checkpoint average_checkpoints(std::vector<CheckpointMeta> metas, std::int64_t k,
                                      std::ostream* warn = nullptr) {
    if (metas.empty()) throw ValueError("average_checkpoints: no checkpoints");
    if (k < 1) throw ValueError("average_checkpoints: k must be >= 1");
    for (const auto& m : metas)
        if (!std::isfinite(m.dev_metric))
            throw ValueError("average_checkpoints: non-finite dev_metric for " + m.path);
    std::stable_sort(metas.begin(), metas.end(), [](const CheckpointMeta& a,
                                                    const CheckpointMeta& b) {
        if (a.dev_metric != b.dev_metric) return a.dev_metric < b.dev_metric;
        return a.step < b.step;
    });
    const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(k), metas.size());
    if (n < static_cast<std::size_t>(k) && warn)
        *warn << "average_checkpoints: only " << n << " of the requested " << k
              << " checkpoints available; averaging all of them\n";

    Checkpoint avg = read_checkpoint(metas[0].path);
    for (std::size_t c = 1; c < n; ++c) {
        const Checkpoint ck = read_checkpoint(metas[c].path);
        if (ck.params.size() != avg.params.size())
            throw ShapeError("average_checkpoints: parameter count mismatch in " +
                             metas[c].path);
        for (std::size_t i = 0; i < avg.params.size(); ++i) {
            const auto& [name0, t0] = avg.params[i];
            const auto& [name1, t1] = ck.params[i];
            if (name0 != name1 || t0.shape() != t1.shape())
                throw ShapeError("average_checkpoints: mismatch at parameter " + name0 +
                                 " in " + metas[c].path);
            auto& acc = avg.params[i].second.data();
            const auto& add = t1.data();
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += add[j];
        }
    }
    for (auto& [name, t] : avg.params)
        for (double& x : t.data()) x /= static_cast<double>(n);

    nlohmann::json meta;
    meta["averaged"] = n;
    meta["requested"] = k;
    std::vector<std::string> sources;
    for (std::size_t c = 0; c < n; ++c) sources.push_back(metas[c].path);
    meta["sources"] = sources;
    avg.metadata_json = meta.dump();
    return avg;
}

// ---------------------------------------------------------------------------
// Dynamic batching: consecutive utterances accumulate into a batch until the
// duration budget or the size cap would be exceeded. Utterances are never
// split; a single utterance over the budget forms a batch by itself.

inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<double>& durations,
                                                          std::int64_t batch_size,
                                                          double max_batch_length) {
    if (batch_size < 1) throw ValueError("make_batches: batch_size must be >= 1");
    if (max_batch_length <= 0.0)
        throw ValueError("make_batches: max_batch_length must be positive");
    std::vector<std::vector<std::size_t>> batches;
    std::vector<std::size_t> cur;
    double acc = 0.0;
    for (std::size_t i = 0; i < durations.size(); ++i) {
        const double d = durations[i];
        if (d <= 0.0) throw ValueError("make_batches: non-positive duration");
        const bool fits = cur.empty() || (acc + d <= max_batch_length &&
                                          static_cast<std::int64_t>(cur.size()) < batch_size);
        if (!fits) {
            batches.push_back(std::move(cur));
            cur.clear();
            acc = 0.0;
        }
        cur.push_back(i);
        acc += d;
    }
    if (!cur.empty()) batches.push_back(std::move(cur));
    return batches;
}

// ---------------------------------------------------------------------------
// In-memory training corpus: features already extracted, transcripts already
// tokenized (symbol ids >= 3, no BOS/EOS).

struct TrainUtterance {
    std::string id;
    Tensor feats;  // [T, feat_dim]
    std::vector<std::int64_t> tokens;
    double duration_s = 0.0;
};

namespace detail {

struct PackedBatch {
    Tensor feats;  // [B, Tmax, F] zero-padded
    std::vector<std::int64_t> feat_lens;
    IntTensor tokens_in;    // BOS-prefixed, EOS-padded
    IntTensor targets_out;  // EOS-terminated, 0-padded
    std::vector<std::int64_t> token_lens;
    std::vector<std::vector<std::int64_t>> ctc_targets;
    std::vector<std::string> ids;
};

inline PackedBatch pack_batch(const std::vector<TrainUtterance>& items,
                              const std::vector<std::size_t>& indices) {
    PackedBatch b;
    const std::int64_t B = static_cast<std::int64_t>(indices.size());
    std::int64_t Tmax = 0, Ymax = 0;
    const std::int64_t F = items[indices[0]].feats.dim(1);
    for (auto i : indices) {
        Tmax = std::max(Tmax, items[i].feats.dim(0));
        Ymax = std::max(Ymax, static_cast<std::int64_t>(items[i].tokens.size()));
    }
    const std::int64_t Ty = Ymax + 1;  // room for BOS (input) / EOS (target)
    b.feats = Tensor::zeros({B, Tmax, F});
    b.tokens_in = IntTensor({B, Ty}, std::vector<std::int64_t>(B * Ty, kEosId));
    b.targets_out = IntTensor({B, Ty}, std::vector<std::int64_t>(B * Ty, 0));
    auto& fd = b.feats.data();
    for (std::int64_t r = 0; r < B; ++r) {
        const TrainUtterance& u = items[indices[r]];
        const std::int64_t T = u.feats.dim(0);
        std::copy(u.feats.data().begin(), u.feats.data().end(),
                  fd.begin() + r * Tmax * F);
        b.feat_lens.push_back(T);
        const auto n = static_cast<std::int64_t>(u.tokens.size());
        b.tokens_in.data[r * Ty] = kBosId;
        for (std::int64_t j = 0; j < n; ++j) {
            b.tokens_in.data[r * Ty + 1 + j] = u.tokens[j];
            b.targets_out.data[r * Ty + j] = u.tokens[j];
        }
        b.targets_out.data[r * Ty + n] = kEosId;
        b.token_lens.push_back(n + 1);
        b.ctc_targets.push_back(u.tokens);
        b.ids.push_back(u.id);
    }
    return b;
}

// True when every utterance in the batch can fit its CTC alignment into the
// subsampled frame count.
inline bool batch_alignable(const std::vector<TrainUtterance>& items,
                            const std::vector<std::size_t>& indices) {
    for (auto i : indices)
        if (subsampled_length(items[i].feats.dim(0)) < ctc_min_frames(items[i].tokens))
            return false;
    return true;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Loss over one packed batch. Decoder work is skipped entirely when alpha is
// 1 or the model has no decoder, so those runs never touch decoder state.

inline LossBreakdown batch_loss(const SpeechMambaModel& model, const detail::PackedBatch& b,
                                const TrainConfig& cfg, bool training, Tensor* combined_out) {
    const bool want_s2s = model.cfg.use_s2s && cfg.alpha < 1.0;
    std::vector<std::int64_t> enc_lens;
    Tensor enc = encode(model, b.feats, b.feat_lens, enc_lens, training);
    Tensor ctc_lp = log_softmax_lastdim(model.ctc_head(enc));
    Tensor ctc = ctc_loss(ctc_lp, b.ctc_targets, enc_lens);
    Tensor combined;
    LossBreakdown lb;
    lb.alpha = cfg.alpha;
    lb.ctc = ctc.item();
    if (want_s2s) {
        Tensor logits = decode_s2s(model, b.tokens_in, enc, enc_lens, training, &b.token_lens);
        Tensor s2s = s2s_loss(logits, b.targets_out, cfg.label_smoothing);
        lb.s2s = s2s.item();
        combined = joint_loss(ctc, s2s, cfg.alpha);
    } else {
        combined = ctc;
    }
    lb.combined = combined.item();
    if (combined_out) *combined_out = combined;
    return lb;
}

// Mean combined loss over a corpus, weighted by utterance count.
// Unalignable utterances are excluded, mirroring the training loop.
inline double dev_loss(const SpeechMambaModel& model, const std::vector<TrainUtterance>& items,
                       const TrainConfig& cfg) {
    NoGradGuard ng;
    std::vector<double> durations;
    for (const auto& u : items) durations.push_back(u.duration_s);
    double total = 0.0;
    std::int64_t n = 0;
    for (const auto& batch : make_batches(durations, cfg.batch_size, cfg.max_batch_length)) {
        if (!detail::batch_alignable(items, batch)) continue;
        const auto packed = detail::pack_batch(items, batch);
        const LossBreakdown lb = batch_loss(model, packed, cfg, false, nullptr);
        total += lb.combined * static_cast<double>(batch.size());
        n += static_cast<std::int64_t>(batch.size());
    }
    if (n == 0) throw ValueError("dev_loss: no evaluable utterances");
    return total / static_cast<double>(n);
}

// Greedy-CTC token error rate, used as the dev_wer selection metric.
inline double dev_token_error_rate(const SpeechMambaModel& model,
                                   const std::vector<TrainUtterance>& items) {
    NoGradGuard ng;
    std::vector<std::vector<std::string>> refs, hyps;
    for (const auto& u : items) {
        std::vector<std::int64_t> enc_lens;
        Tensor enc = encode(model, reshape(u.feats, {1, u.feats.dim(0), u.feats.dim(1)}),
                            {u.feats.dim(0)}, enc_lens, false);
        Tensor lp = log_softmax_lastdim(model.ctc_head(enc));
        const std::int64_t Tp = enc_lens[0], K = lp.dim(2);
        const auto ids = greedy_ctc_decode(reshape(slice(lp, 1, 0, Tp), {Tp, K}));
        std::vector<std::string> ref, hyp;
        for (auto t : u.tokens) ref.push_back(std::to_string(t));
        for (auto t : ids) hyp.push_back(std::to_string(t));
        refs.push_back(std::move(ref));
        hyps.push_back(std::move(hyp));
    }
    return word_error_rate(refs, hyps).wer();
}

// ---------------------------------------------------------------------------
// Training loop.

struct StepLog {
    std::int64_t step = 0;
    std::int64_t epoch = 0;
    double ctc = 0.0;
    double s2s = 0.0;
    double combined = 0.0;
    double lr = 0.0;
    double grad_norm = 0.0;
};

struct TrainResult {
    std::vector<StepLog> logs;
    std::vector<CheckpointMeta> checkpoints;
    std::vector<double> dev_metrics;  // one per completed epoch
    std::int64_t steps = 0;
    std::int64_t skipped_batches = 0;
};

inline void write_metrics_header(std::ostream& os) {
    os << "step,epoch,ctc,s2s,combined,lr,grad_norm\n";
}

inline void write_metrics_row(std::ostream& os, const StepLog& l) {
    std::ostringstream row;
    row.precision(17);
    row << l.step << ',' << l.epoch << ',' << l.ctc << ',' << l.s2s << ',' << l.combined << ','
        << l.lr << ',' << l.grad_norm << '\n';
    os << row.str();
}

// Runs the optimization loop over pre-extracted features. Checkpoints are
// written per epoch when ckpt_dir is nonempty; max_steps > 0 caps the number
// of optimizer updates (smoke tests).
inline TrainResult train_loop(SpeechMambaModel& model, std::vector<TrainUtterance> train_items,
                              const std::vector<TrainUtterance>& dev_items,
                              const TrainConfig& cfg, const std::string& ckpt_dir = "",
                              std::ostream* metrics = nullptr, std::int64_t max_steps = -1) {
    cfg.validate();
    if (train_items.empty()) throw ValueError("train_loop: empty training corpus");
    for (const auto& u : train_items) {
        if (u.feats.rank() != 2 || u.feats.dim(1) != model.cfg.feat_dim)
            throw ShapeError("train_loop: utterance " + u.id + " features must be [T," +
                             std::to_string(model.cfg.feat_dim) + "]");
        if (u.duration_s <= 0.0)
            throw ValueError("train_loop: utterance " + u.id + " needs a positive duration");
        for (auto t : u.tokens)
            if (t <= kEosId || t > model.cfg.vocab_size)
                throw ValueError("train_loop: utterance " + u.id + " has token id " +
                                 std::to_string(t) + " outside [3," +
                                 std::to_string(model.cfg.vocab_size) + "]");
    }

    seed_all(static_cast<std::uint64_t>(cfg.seed));
    Adam opt(model.reg);
    NoamSchedule sched{cfg.peak_lr, cfg.warmup_steps};
    TrainResult res;
    if (metrics) write_metrics_header(*metrics);

    std::int64_t step = 0;
    for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(train_items.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), global_rng());
        std::vector<double> durations;
        for (auto i : order) durations.push_back(train_items[i].duration_s);
        std::vector<std::vector<std::size_t>> batches;
        for (auto& b : make_batches(durations, cfg.batch_size, cfg.max_batch_length)) {
            for (auto& i : b) i = order[i];  // back to corpus indices
            batches.push_back(std::move(b));
        }

        std::size_t bi = 0;
        while (bi < batches.size()) {
            // Collect up to grad_accum alignable micro-batches.
            std::vector<std::vector<std::size_t>> group;
            while (bi < batches.size() &&
                   group.size() < static_cast<std::size_t>(cfg.grad_accum)) {
                if (detail::batch_alignable(train_items, batches[bi]))
                    group.push_back(batches[bi]);
                else
                    ++res.skipped_batches;
                ++bi;
            }
            if (group.empty()) continue;

            model.reg.zero_grad();
            double ctc_sum = 0.0, s2s_sum = 0.0, comb_sum = 0.0;
            for (const auto& micro : group) {
                const auto packed = detail::pack_batch(train_items, micro);
                std::string ids;
                for (const auto& id : packed.ids) ids += (ids.empty() ? "" : ", ") + id;
                Tensor combined;
                LossBreakdown lb;
                try {
                    lb = batch_loss(model, packed, cfg, true, &combined);
                } catch (const Error& e) {
                    throw Error("train_loop: forward failed at step " +
                                std::to_string(step + 1) + " (batch ids: " + ids +
                                "): " + e.what());
                }
                if (!std::isfinite(lb.combined))
                    throw Error("train_loop: non-finite loss at step " +
                                std::to_string(step + 1) + " (batch ids: " + ids + ")");
                Tensor scaled = combined * (1.0 / static_cast<double>(group.size()));
                scaled.backward();
                ctc_sum += lb.ctc;
                s2s_sum += lb.s2s;
                comb_sum += lb.combined;
            }

            ++step;
            const double gn = clip_gradients(model.reg, cfg.grad_clip);
            const double lr = sched.lr(step);
            opt.step(lr);

            StepLog log;
            log.step = step;
            log.epoch = epoch;
            log.ctc = ctc_sum / static_cast<double>(group.size());
            log.s2s = s2s_sum / static_cast<double>(group.size());
            log.combined = comb_sum / static_cast<double>(group.size());
            log.lr = lr;
            log.grad_norm = gn;
            if (metrics) write_metrics_row(*metrics, log);
            res.logs.push_back(log);

            if (max_steps > 0 && step >= max_steps) {
                res.steps = step;
                return res;
            }
        }

        // Epoch bookkeeping: dev metric and checkpoint.
        double metric;
        if (dev_items.empty())
            metric = res.logs.empty() ? 0.0 : res.logs.back().combined;
        else if (cfg.selection_metric == SelectionMetric::dev_wer)
            metric = dev_token_error_rate(model, dev_items);
        else
            metric = dev_loss(model, dev_items, cfg);
        res.dev_metrics.push_back(metric);

        if (!ckpt_dir.empty()) {
            CheckpointMeta cm;
            cm.step = step;
            cm.epoch = epoch;
            cm.dev_metric = metric;
            cm.path = ckpt_dir + "/ckpt-epoch-" + std::to_string(epoch) + ".smck";
            nlohmann::json meta;
            meta["step"] = cm.step;
            meta["epoch"] = cm.epoch;
            meta["dev_metric"] = cm.dev_metric;
            save_checkpoint(cm.path, model.reg.items(), meta.dump());
            res.checkpoints.push_back(cm);
        }
    }
    res.steps = step;
    return res;
}

// ---------------------------------------------------------------------------
// Flat key=value config files shared by the CLI. '#' starts a comment.

inline std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        if (strip(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ValueError("config: " + path + ":" + std::to_string(lineno) +
                             ": expected key = value");
        const std::string key = strip(line.substr(0, eq));
        const std::string val = strip(line.substr(eq + 1));
        if (key.empty() || val.empty())
            throw ValueError("config: " + path + ":" + std::to_string(lineno) +
                             ": empty key or value");
        if (!kv.emplace(key, val).second)
            throw ValueError("config: " + path + ":" + std::to_string(lineno) +
                             ": duplicate key " + key);
    }
    return kv;
}

namespace detail {

inline std::int64_t config_int(const std::string& key, const std::string& val) {
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw ValueError("config: key " + key + " needs an integer, got '" + val + "'");
    }
}

inline double config_real(const std::string& key, const std::string& val) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(val, &pos);
        if (pos != val.size()) throw std::invalid_argument("trailing junk");
        return v;
    } catch (const std::exception&) {
        throw ValueError("config: key " + key + " needs a number, got '" + val + "'");
    }
}

inline bool config_bool(const std::string& key, const std::string& val) {
    if (val == "true" || val == "1") return true;
    if (val == "false" || val == "0") return false;
    throw ValueError("config: key " + key + " needs true/false, got '" + val + "'");
}

}  // namespace detail

// Applies a parsed config to the training and model configs. Unknown keys
// raise ValueError so typos cannot silently fall back to defaults.
inline void apply_config(const std::map<std::string, std::string>& kv, TrainConfig& tc,
                         ModelConfig& mc) {
    for (const auto& [key, val] : kv) {
        if (key == "epochs") tc.epochs = detail::config_int(key, val);
        else if (key == "batch_size") tc.batch_size = detail::config_int(key, val);
        else if (key == "max_batch_length") tc.max_batch_length = detail::config_real(key, val);
        else if (key == "grad_accum") tc.grad_accum = detail::config_int(key, val);
        else if (key == "alpha") tc.alpha = detail::config_real(key, val);
        else if (key == "peak_lr") tc.peak_lr = detail::config_real(key, val);
        else if (key == "warmup_steps") tc.warmup_steps = detail::config_int(key, val);
        else if (key == "seed") tc.seed = detail::config_int(key, val);
        else if (key == "avg_top_k") tc.avg_top_k = detail::config_int(key, val);
        else if (key == "label_smoothing") tc.label_smoothing = detail::config_real(key, val);
        else if (key == "grad_clip") tc.grad_clip = detail::config_real(key, val);
        else if (key == "selection_metric") {
            if (val == "dev_loss") tc.selection_metric = SelectionMetric::dev_loss;
            else if (val == "dev_wer") tc.selection_metric = SelectionMetric::dev_wer;
            else throw ValueError("config: selection_metric must be dev_loss or dev_wer");
        }
        else if (key == "d_model") mc.d_model = detail::config_int(key, val);
        else if (key == "num_heads") mc.num_heads = detail::config_int(key, val);
        else if (key == "encoder_blocks") mc.encoder_blocks = detail::config_int(key, val);
        else if (key == "decoder_blocks") mc.decoder_blocks = detail::config_int(key, val);
        else if (key == "conv_width") mc.conv_width = detail::config_int(key, val);
        else if (key == "ssm_state") mc.ssm_state = detail::config_int(key, val);
        else if (key == "expand") mc.expand = detail::config_int(key, val);
        else if (key == "vocab_size") mc.vocab_size = detail::config_int(key, val);
        else if (key == "dropout") mc.dropout_p = detail::config_real(key, val);
        else if (key == "frontend_channels") mc.frontend_channels = detail::config_int(key, val);
        else if (key == "feat_dim") mc.feat_dim = detail::config_int(key, val);
        else if (key == "ffn_dim") mc.ffn_dim = detail::config_int(key, val);
        else if (key == "mamba_encoder") mc.mamba_encoder = detail::config_bool(key, val);
        else if (key == "mamba_decoder") mc.mamba_decoder = detail::config_bool(key, val);
        else if (key == "use_s2s") mc.use_s2s = detail::config_bool(key, val);
        else throw ValueError("config: unknown key '" + key + "'");
    }
}

}  // namespace sm

#endif  // SPEECHMAMBA_TRAIN_HPP
