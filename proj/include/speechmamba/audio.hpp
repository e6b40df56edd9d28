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

// Audio ingestion: 16-bit PCM WAV read/write, a FLAC decoder for mono
// streams, and band-limited resampling.

#ifndef SPEECHMAMBA_AUDIO_HPP
#define SPEECHMAMBA_AUDIO_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "speechmamba/tensor.hpp"

namespace sm {

struct AudioData {
    std::vector<double> samples;  // in [-1, 1), mono
    std::int64_t sample_rate = 0;

    double duration_s() const {
        return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
    }
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    f.seekg(0, std::ios::end);
    const auto size = static_cast<std::size_t>(f.tellg());
    f.seekg(0, std::ios::beg);
    std::vector<std::uint8_t> buf(size);
    if (size > 0) f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size));
    if (!f) throw IoError("short read on " + path);
    return buf;
}

inline std::uint32_t read_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_u16le(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// WAV (RIFF, 16-bit PCM, mono).

inline AudioData read_wav(const std::string& path) {
    const auto buf = detail::read_file_bytes(path);
    if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
        std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
        throw IoError(path + ": not a RIFF/WAVE file");
    std::size_t pos = 12;
    bool have_fmt = false;
    std::uint16_t channels = 0, bits = 0;
    std::uint32_t rate = 0;
    AudioData out;
    while (pos + 8 <= buf.size()) {
        const char* tag = reinterpret_cast<const char*>(buf.data() + pos);
        const std::uint32_t len = detail::read_u32le(buf.data() + pos + 4);
        pos += 8;
        if (pos + len > buf.size()) throw IoError(path + ": truncated chunk");
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            if (len < 16) throw IoError(path + ": short fmt chunk");
            const std::uint16_t format = detail::read_u16le(buf.data() + pos);
            channels = detail::read_u16le(buf.data() + pos + 2);
            rate = detail::read_u32le(buf.data() + pos + 4);
            bits = detail::read_u16le(buf.data() + pos + 14);
            if (format != 1) throw IoError(path + ": only PCM WAV is supported");
            if (bits != 16) throw IoError(path + ": only 16-bit WAV is supported");
            if (channels != 1)
                throw IoError(path + ": mono required, got " + std::to_string(channels) +
                              " channels");
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt) throw IoError(path + ": data chunk before fmt");
            const std::size_t n = len / 2;
            out.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto v = static_cast<std::int16_t>(
                    detail::read_u16le(buf.data() + pos + 2 * i));
                out.samples[i] = static_cast<double>(v) / 32768.0;
            }
            out.sample_rate = rate;
            return out;
        }
        pos += len + (len & 1);  // chunks are word-aligned
    }
    throw IoError(path + ": no data chunk");
}

inline void write_wav(const std::string& path, const std::vector<double>& samples,
                      std::int64_t sample_rate) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot create " + path);
    const auto n = static_cast<std::uint32_t>(samples.size());
    const std::uint32_t data_len = n * 2;
    auto put_u32 = [&](std::uint32_t v) {
        const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8),
                           static_cast<char>(v >> 16), static_cast<char>(v >> 24)};
        f.write(b, 4);
    };
    auto put_u16 = [&](std::uint16_t v) {
        const char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
        f.write(b, 2);
    };
    f.write("RIFF", 4);
    put_u32(36 + data_len);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    put_u32(16);
    put_u16(1);  // PCM
    put_u16(1);  // mono
    put_u32(static_cast<std::uint32_t>(sample_rate));
    put_u32(static_cast<std::uint32_t>(sample_rate) * 2);
    put_u16(2);
    put_u16(16);
    f.write("data", 4);
    put_u32(data_len);
    for (double s : samples) {
        const double scaled = s * 32768.0;
        const auto v = static_cast<std::int16_t>(
            std::lround(std::max(-32768.0, std::min(32767.0, scaled))));
        put_u16(static_cast<std::uint16_t>(v));
    }
    if (!f) throw IoError("write failed on " + path);
}

// ---------------------------------------------------------------------------
// FLAC decoder (mono, 16-bit focus; arbitrary fixed/LPC subframes).

namespace detail {

class BitReader {
  public:
    BitReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::uint64_t bits(int n) {
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) {
            if (pos_ >= size_ * 8) throw IoError("flac: unexpected end of stream");
            const std::size_t byte = pos_ >> 3;
            const int off = 7 - static_cast<int>(pos_ & 7);
            v = (v << 1) | ((data_[byte] >> off) & 1u);
            ++pos_;
        }
        return v;
    }

    std::int64_t signed_bits(int n) {
        std::uint64_t v = bits(n);
        if (n > 0 && (v >> (n - 1)) & 1u) v |= ~((std::uint64_t(1) << n) - 1);
        return static_cast<std::int64_t>(v);
    }

    std::uint64_t unary() {
        std::uint64_t q = 0;
        while (bits(1) == 0) ++q;
        return q;
    }

    void align() { pos_ = (pos_ + 7) & ~std::size_t(7); }
    std::size_t byte_pos() const { return pos_ >> 3; }
    bool aligned() const { return (pos_ & 7) == 0; }
    bool at_end() const { return pos_ >= size_ * 8; }

  private:
    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline std::uint8_t flac_crc8(const std::uint8_t* p, std::size_t n) {
    std::uint8_t crc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        crc ^= p[i];
        for (int b = 0; b < 8; ++b)
            crc = (crc & 0x80u) ? static_cast<std::uint8_t>((crc << 1) ^ 0x07u)
                                : static_cast<std::uint8_t>(crc << 1);
    }
    return crc;
}

inline std::uint16_t flac_crc16(const std::uint8_t* p, std::size_t n) {
    std::uint16_t crc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        crc ^= static_cast<std::uint16_t>(p[i] << 8);
        for (int b = 0; b < 8; ++b)
            crc = (crc & 0x8000u) ? static_cast<std::uint16_t>((crc << 1) ^ 0x8005u)
                                  : static_cast<std::uint16_t>(crc << 1);
    }
    return crc;
}

// UTF-8 style variable-length frame/sample number.
inline std::uint64_t flac_coded_number(BitReader& br) {
    const auto b0 = static_cast<std::uint32_t>(br.bits(8));
    int extra = 0;
    std::uint64_t v = 0;
    if ((b0 & 0x80u) == 0) return b0;
    if ((b0 & 0xE0u) == 0xC0u) {
        extra = 1;
        v = b0 & 0x1Fu;
    } else if ((b0 & 0xF0u) == 0xE0u) {
        extra = 2;
        v = b0 & 0x0Fu;
    } else if ((b0 & 0xF8u) == 0xF0u) {
        extra = 3;
        v = b0 & 0x07u;
    } else if ((b0 & 0xFCu) == 0xF8u) {
        extra = 4;
        v = b0 & 0x03u;
    } else if ((b0 & 0xFEu) == 0xFCu) {
        extra = 5;
        v = b0 & 0x01u;
    } else if (b0 == 0xFEu) {
        extra = 6;
    } else {
        throw IoError("flac: invalid coded number");
    }
    for (int i = 0; i < extra; ++i) {
        const auto b = static_cast<std::uint32_t>(br.bits(8));
        if ((b & 0xC0u) != 0x80u) throw IoError("flac: invalid coded number continuation");
        v = (v << 6) | (b & 0x3Fu);
    }
    return v;
}

inline void flac_read_residual(BitReader& br, std::int64_t blocksize, std::int64_t order,
                               std::vector<std::int64_t>& out) {
    const auto method = static_cast<int>(br.bits(2));
    if (method > 1) throw IoError("flac: reserved residual coding method");
    const int pbits = (method == 0) ? 4 : 5;
    const auto escape = static_cast<std::uint64_t>((1 << pbits) - 1);
    const auto porder = static_cast<int>(br.bits(4));
    const std::int64_t nparts = std::int64_t(1) << porder;
    if (blocksize % nparts != 0) throw IoError("flac: bad partition order");
    out.clear();
    for (std::int64_t p = 0; p < nparts; ++p) {
        std::int64_t n = blocksize >> porder;
        if (p == 0) n -= order;
        if (n < 0) throw IoError("flac: predictor order exceeds first partition");
        const std::uint64_t param = br.bits(pbits);
        if (param == escape) {
            const auto raw = static_cast<int>(br.bits(5));
            for (std::int64_t i = 0; i < n; ++i)
                out.push_back(raw == 0 ? 0 : br.signed_bits(raw));
        } else {
            for (std::int64_t i = 0; i < n; ++i) {
                const std::uint64_t q = br.unary();
                const std::uint64_t m = (q << param) | br.bits(static_cast<int>(param));
                out.push_back((m & 1u) ? -static_cast<std::int64_t>(m >> 1) - 1
                                       : static_cast<std::int64_t>(m >> 1));
            }
        }
    }
}

inline void flac_decode_subframe(BitReader& br, std::int64_t blocksize, int bps,
                                 std::vector<std::int64_t>& s) {
    if (br.bits(1) != 0) throw IoError("flac: bad subframe padding bit");
    const auto type = static_cast<int>(br.bits(6));
    int wasted = 0;
    if (br.bits(1) == 1) wasted = static_cast<int>(br.unary()) + 1;
    const int ebps = bps - wasted;
    if (ebps <= 0) throw IoError("flac: wasted bits exceed sample size");

    s.assign(static_cast<std::size_t>(blocksize), 0);
    std::vector<std::int64_t> resid;
    if (type == 0) {
        const std::int64_t v = br.signed_bits(ebps);
        std::fill(s.begin(), s.end(), v);
    } else if (type == 1) {
        for (auto& v : s) v = br.signed_bits(ebps);
    } else if (type >= 8 && type <= 12) {
        const std::int64_t order = type - 8;
        for (std::int64_t i = 0; i < order; ++i) s[i] = br.signed_bits(ebps);
        flac_read_residual(br, blocksize, order, resid);
        static const std::int64_t kCoef[5][4] = {
            {}, {1}, {2, -1}, {3, -3, 1}, {4, -6, 4, -1}};
        for (std::int64_t i = order; i < blocksize; ++i) {
            std::int64_t pred = 0;
            for (std::int64_t j = 0; j < order; ++j) pred += kCoef[order][j] * s[i - 1 - j];
            s[i] = resid[i - order] + pred;
        }
    } else if (type >= 32) {
        const std::int64_t order = (type & 31) + 1;
        for (std::int64_t i = 0; i < order; ++i) s[i] = br.signed_bits(ebps);
        const auto precision = static_cast<int>(br.bits(4)) + 1;
        if (precision == 16) throw IoError("flac: invalid lpc precision");
        const auto shift = static_cast<int>(br.signed_bits(5));
        if (shift < 0) throw IoError("flac: negative lpc shift");
        std::vector<std::int64_t> coefs(static_cast<std::size_t>(order));
        for (auto& c : coefs) c = br.signed_bits(precision);
        flac_read_residual(br, blocksize, order, resid);
        for (std::int64_t i = order; i < blocksize; ++i) {
            std::int64_t pred = 0;
            for (std::int64_t j = 0; j < order; ++j) pred += coefs[j] * s[i - 1 - j];
            s[i] = resid[i - order] + (pred >> shift);
        }
    } else {
        throw IoError("flac: reserved subframe type " + std::to_string(type));
    }
    if (wasted)
        for (auto& v : s) v <<= wasted;
}

}  // namespace detail

inline AudioData read_flac(const std::string& path) {
    const auto buf = detail::read_file_bytes(path);
    if (buf.size() < 8 || std::memcmp(buf.data(), "fLaC", 4) != 0)
        throw IoError(path + ": not a FLAC file");
    std::size_t pos = 4;
    bool last = false, have_info = false;
    std::int64_t rate = 0, channels = 0, bps = 0, total = 0, min_block = 0;
    while (!last) {
        if (pos + 4 > buf.size()) throw IoError(path + ": truncated metadata");
        last = (buf[pos] & 0x80u) != 0;
        const int type = buf[pos] & 0x7F;
        const std::uint32_t len = (static_cast<std::uint32_t>(buf[pos + 1]) << 16) |
                                  (static_cast<std::uint32_t>(buf[pos + 2]) << 8) |
                                  buf[pos + 3];
        pos += 4;
        if (pos + len > buf.size()) throw IoError(path + ": truncated metadata block");
        if (type == 0) {
            if (len != 34) throw IoError(path + ": bad STREAMINFO length");
            detail::BitReader br(buf.data() + pos, len);
            min_block = static_cast<std::int64_t>(br.bits(16));
            br.bits(16);  // max block size
            br.bits(24);  // min frame size
            br.bits(24);  // max frame size
            rate = static_cast<std::int64_t>(br.bits(20));
            channels = static_cast<std::int64_t>(br.bits(3)) + 1;
            bps = static_cast<std::int64_t>(br.bits(5)) + 1;
            total = static_cast<std::int64_t>(br.bits(36));
            have_info = true;
        }
        pos += len;
    }
    if (!have_info) throw IoError(path + ": missing STREAMINFO");
    if (rate <= 0) throw IoError(path + ": invalid sample rate");
    if (channels != 1)
        throw IoError(path + ": mono required, got " + std::to_string(channels) + " channels");
    (void)min_block;

    AudioData out;
    out.sample_rate = rate;
    if (total > 0) out.samples.reserve(static_cast<std::size_t>(total));
    const double denom = static_cast<double>(std::int64_t(1) << (bps - 1));

    detail::BitReader br(buf.data() + pos, buf.size() - pos);
    std::vector<std::int64_t> chan;
    while (!br.at_end()) {
        const std::size_t frame_start = pos + br.byte_pos();
        if (br.bits(14) != 0x3FFE) throw IoError(path + ": bad frame sync");
        if (br.bits(1) != 0) throw IoError(path + ": reserved frame bit set");
        br.bits(1);  // blocking strategy
        const auto bs_code = static_cast<int>(br.bits(4));
        const auto sr_code = static_cast<int>(br.bits(4));
        const auto chan_code = static_cast<int>(br.bits(4));
        const auto size_code = static_cast<int>(br.bits(3));
        if (br.bits(1) != 0) throw IoError(path + ": reserved frame bit set");
        if (chan_code != 0)
            throw IoError(path + ": mono required, frame declares channel mode " +
                          std::to_string(chan_code));
        detail::flac_coded_number(br);

        std::int64_t blocksize;
        switch (bs_code) {
            case 0: throw IoError(path + ": reserved block size code");
            case 1: blocksize = 192; break;
            case 6: blocksize = static_cast<std::int64_t>(br.bits(8)) + 1; break;
            case 7: blocksize = static_cast<std::int64_t>(br.bits(16)) + 1; break;
            default:
                blocksize = (bs_code <= 5) ? (576 << (bs_code - 2)) : (256 << (bs_code - 8));
        }
        if (sr_code == 12) br.bits(8);
        else if (sr_code == 13 || sr_code == 14) br.bits(16);
        else if (sr_code == 15) throw IoError(path + ": invalid sample rate code");

        int frame_bps;
        switch (size_code) {
            case 0: frame_bps = static_cast<int>(bps); break;
            case 1: frame_bps = 8; break;
            case 2: frame_bps = 12; break;
            case 4: frame_bps = 16; break;
            case 5: frame_bps = 20; break;
            case 6: frame_bps = 24; break;
            case 7: frame_bps = 32; break;
            default: throw IoError(path + ": reserved sample size code");
        }

        const std::size_t header_len = pos + br.byte_pos() - frame_start;
        const std::uint8_t want_crc8 = detail::flac_crc8(buf.data() + frame_start, header_len);
        if (br.bits(8) != want_crc8) throw IoError(path + ": frame header CRC mismatch");

        detail::flac_decode_subframe(br, blocksize, frame_bps, chan);
        br.align();
        const std::size_t body_len = pos + br.byte_pos() - frame_start;
        const std::uint16_t want_crc16 = detail::flac_crc16(buf.data() + frame_start, body_len);
        if (br.bits(16) != want_crc16) throw IoError(path + ": frame CRC mismatch");

        for (auto v : chan) out.samples.push_back(static_cast<double>(v) / denom);
        if (total > 0 && static_cast<std::int64_t>(out.samples.size()) >= total) break;
    }
    if (total > 0 && static_cast<std::int64_t>(out.samples.size()) != total)
        throw IoError(path + ": decoded " + std::to_string(out.samples.size()) +
                      " samples, STREAMINFO declares " + std::to_string(total));
    if (total > 0) out.samples.resize(static_cast<std::size_t>(total));
    return out;
}

// Dispatch on file extension.
inline AudioData read_audio(const std::string& path) {
    auto ends_with = [&](const char* suf) {
        const std::size_t n = std::strlen(suf);
        return path.size() >= n &&
               std::equal(path.end() - static_cast<std::ptrdiff_t>(n), path.end(), suf,
                          [](char a, char b) { return std::tolower(a) == b; });
    };
    if (ends_with(".wav")) return read_wav(path);
    if (ends_with(".flac")) return read_flac(path);
    throw IoError(path + ": unsupported audio format (expected .wav or .flac)");
}

// ---------------------------------------------------------------------------
// Band-limited resampling with a windowed-sinc kernel evaluated at the exact
// rational phase of each output sample.

inline std::vector<double> resample(const std::vector<double>& x, std::int64_t src_rate,
                                    std::int64_t dst_rate = 16000) {
    if (src_rate <= 0 || dst_rate <= 0) throw ValueError("resample: rates must be positive");
    if (src_rate == dst_rate) return x;
    const std::int64_t g = std::gcd(src_rate, dst_rate);
    const std::int64_t up = dst_rate / g;    // L
    const std::int64_t down = src_rate / g;  // M
    const auto n_in = static_cast<std::int64_t>(x.size());
    const auto n_out = static_cast<std::int64_t>(
        std::llround(static_cast<double>(n_in) * static_cast<double>(dst_rate) /
                     static_cast<double>(src_rate)));
    // cutoff at the lower Nyquist, in input-sample units
    const double fc = std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
    const double half_width = 32.0 / fc;  // support in input samples
    std::vector<double> y(static_cast<std::size_t>(n_out), 0.0);
    const double pi = 3.14159265358979323846;
    for (std::int64_t j = 0; j < n_out; ++j) {
        // center position of output j in input-sample units: j * M / L
        const double center = static_cast<double>(j * down) / static_cast<double>(up);
        const auto lo = static_cast<std::int64_t>(std::ceil(center - half_width));
        const auto hi = static_cast<std::int64_t>(std::floor(center + half_width));
        double acc = 0.0;
        for (std::int64_t i = std::max<std::int64_t>(0, lo);
             i <= std::min(n_in - 1, hi); ++i) {
            const double t = center - static_cast<double>(i);
            const double a = fc * t;
            const double sinc = (std::abs(a) < 1e-12) ? 1.0 : std::sin(pi * a) / (pi * a);
            // Blackman window over the kernel support
            const double u = (t + half_width) / (2.0 * half_width);
            const double w = 0.42 - 0.5 * std::cos(2.0 * pi * u) + 0.08 * std::cos(4.0 * pi * u);
            acc += x[static_cast<std::size_t>(i)] * sinc * w;
        }
        y[static_cast<std::size_t>(j)] = acc * fc;
    }
    return y;
}

}  // namespace sm

#endif  // SPEECHMAMBA_AUDIO_HPP
