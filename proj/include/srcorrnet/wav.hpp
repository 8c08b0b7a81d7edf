// Copyright 2026 srcorrnet authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Minimal RIFF/WAVE reader and writer: PCM 16-bit and float32, little-endian,
// mono or multi-channel interleaved.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "srcorrnet/common.hpp"
#include "srcorrnet/signal.hpp"

namespace srcorrnet {

enum class WavFormat { kPcm16, kFloat32 };

namespace detail {

inline void put_u32(std::string& s, uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}

inline void put_u16(std::string& s, uint16_t v) {
  for (int i = 0; i < 2; ++i) s.push_back(char((v >> (8 * i)) & 0xff));
}

inline uint32_t get_u32(const char* p) {
  uint32_t v = 0;
  std::memcpy(&v, p, 4);
  return v;  // little-endian host assumed
}

inline uint16_t get_u16(const char* p) {
  uint16_t v = 0;
  std::memcpy(&v, p, 2);
  return v;
}

}  // namespace detail

inline void write_wav(const std::string& path, const Waveform& w,
                      WavFormat fmt = WavFormat::kFloat32) {
  w.validate();
  uint16_t channels = uint16_t(w.channels());
  uint32_t n = uint32_t(w.samples());
  uint16_t bytes_per = (fmt == WavFormat::kPcm16) ? 2 : 4;
  uint32_t data_bytes = n * channels * bytes_per;
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  detail::put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  detail::put_u32(out, 16);
  detail::put_u16(out, fmt == WavFormat::kPcm16 ? 1 : 3);
  detail::put_u16(out, channels);
  detail::put_u32(out, uint32_t(w.sample_rate));
  detail::put_u32(out, uint32_t(w.sample_rate) * channels * bytes_per);
  detail::put_u16(out, uint16_t(channels * bytes_per));
  detail::put_u16(out, uint16_t(bytes_per * 8));
  out += "data";
  detail::put_u32(out, data_bytes);
  for (uint32_t i = 0; i < n; ++i)
    for (uint16_t c = 0; c < channels; ++c) {
      double v = w.ch[c][i];
      if (fmt == WavFormat::kPcm16) {
        double scaled = std::max(-1.0, std::min(1.0, v)) * 32767.0;
        int16_t q = int16_t(std::lrint(scaled));
        out.push_back(char(q & 0xff));
        out.push_back(char((q >> 8) & 0xff));
      } else {
        float f = float(v);
        char buf[4];
        std::memcpy(buf, &f, 4);
        out.append(buf, 4);
      }
    }
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "write_wav: cannot open " + path);
  os.write(out.data(), std::streamsize(out.size()));
  check(os.good(), "write_wav: write failed for " + path);
}

inline Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "read_wav: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  check(buf.size() >= 44 && buf.compare(0, 4, "RIFF") == 0 && buf.compare(8, 4, "WAVE") == 0,
        "read_wav: not a RIFF/WAVE file: " + path);
  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  size_t data_off = 0, data_len = 0;
  size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    std::string id = buf.substr(pos, 4);
    uint32_t len = detail::get_u32(&buf[pos + 4]);
    size_t body = pos + 8;
    if (id == "fmt ") {
      check(len >= 16, "read_wav: short fmt chunk");
      format = detail::get_u16(&buf[body]);
      channels = detail::get_u16(&buf[body + 2]);
      sample_rate = detail::get_u32(&buf[body + 4]);
      bits = detail::get_u16(&buf[body + 14]);
    } else if (id == "data") {
      data_off = body;
      data_len = len;
    }
    pos = body + len + (len & 1);
  }
  check(channels > 0 && sample_rate > 0 && data_off > 0, "read_wav: missing chunks");
  bool pcm16 = (format == 1 && bits == 16);
  bool f32 = (format == 3 && bits == 32);
  check(pcm16 || f32, "read_wav: unsupported format (want PCM16 or float32)");
  size_t bytes_per = pcm16 ? 2 : 4;
  size_t n = data_len / (bytes_per * channels);
  Waveform w;
  w.sample_rate = int(sample_rate);
  w.ch.assign(channels, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t c = 0; c < channels; ++c) {
      const char* p = &buf[data_off + (i * channels + c) * bytes_per];
      if (pcm16) {
        int16_t q;
        std::memcpy(&q, p, 2);
        w.ch[c][i] = double(q) / 32768.0;
      } else {
        float f;
        std::memcpy(&f, p, 4);
        w.ch[c][i] = double(f);
      }
    }
  return w;
}

}  // namespace srcorrnet
