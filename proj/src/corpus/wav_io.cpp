// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "ncvc/corpus.hpp"

namespace ncvc::corpus {

namespace {

constexpr int kTargetRate = 16000;

uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) |
         (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0]) | (static_cast<uint16_t>(b[1]) << 8);
}

void write_u32(std::ostream& os, uint32_t v) {
  const unsigned char b[4] = {
      static_cast<unsigned char>(v & 0xff),
      static_cast<unsigned char>((v >> 8) & 0xff),
      static_cast<unsigned char>((v >> 16) & 0xff),
      static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& os, uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Waveform load_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open wav file " + path);

  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("malformed wav header (no RIFF): " + path);
  read_u32(is);  // riff size
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("malformed wav header (no WAVE): " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  std::vector<int16_t> pcm;
  bool have_data = false;

  while (is && !is.eof()) {
    is.read(tag, 4);
    if (!is) break;
    const uint32_t chunk_size = read_u32(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      format = read_u16(is);
      channels = read_u16(is);
      rate = read_u32(is);
      read_u32(is);  // byte rate
      read_u16(is);  // block align
      bits = read_u16(is);
      if (chunk_size > 16) is.ignore(chunk_size - 16);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav data before fmt: " + path);
      pcm.resize(chunk_size / 2);
      is.read(reinterpret_cast<char*>(pcm.data()), chunk_size & ~1u);
      if (!is) throw std::runtime_error("truncated wav data: " + path);
      have_data = true;
      break;
    } else {
      is.ignore(chunk_size + (chunk_size & 1));  // chunks are 2-byte aligned
    }
  }
  if (!have_fmt || !have_data)
    throw std::runtime_error("malformed wav file: " + path);
  if (format != 1 || bits != 16)
    throw std::runtime_error("want 16-bit PCM: " + path);
  if (channels != 1) throw std::runtime_error("mono required: " + path);
  if (rate == 0) throw std::runtime_error("bad sample rate: " + path);

  Waveform w;
  w.sample_rate_hz = static_cast<int>(rate);
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i)
    w.samples[i] = static_cast<float>(pcm[i]) / 32768.0f;
  if (w.sample_rate_hz != kTargetRate) w = resample(w, kTargetRate);
  return w;
}

void save_wav(const Waveform& w, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write wav file " + path);
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;

  os.write("RIFF", 4);
  write_u32(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_u32(os, 16);
  write_u16(os, 1);  // PCM
  write_u16(os, 1);  // mono
  write_u32(os, static_cast<uint32_t>(w.sample_rate_hz));
  write_u32(os, static_cast<uint32_t>(w.sample_rate_hz) * 2);
  write_u16(os, 2);
  write_u16(os, 16);
  os.write("data", 4);
  write_u32(os, data_bytes);

  std::vector<int16_t> pcm(n);
  for (uint32_t i = 0; i < n; ++i) {
    // Scale by 32768 so quantized integers round-trip exactly.
    long v = std::lround(static_cast<double>(w.samples[i]) * 32768.0);
    v = std::clamp(v, -32768L, 32767L);
    pcm[i] = static_cast<int16_t>(v);
  }
  os.write(reinterpret_cast<const char*>(pcm.data()), data_bytes);
  if (!os) throw std::runtime_error("short write to " + path);
}

Waveform resample(const Waveform& w, int target_rate_hz) {
  if (w.sample_rate_hz == target_rate_hz) return w;
  if (w.sample_rate_hz <= 0 || target_rate_hz <= 0)
    throw std::invalid_argument("bad sample rate");

  const int g = std::gcd(w.sample_rate_hz, target_rate_hz);
  const long up = target_rate_hz / g;    // L
  const long down = w.sample_rate_hz / g;  // M

  // Windowed-sinc lowpass at the tighter of the two Nyquist limits, applied
  // on the virtual up-rate grid (polyphase: only needed taps are touched).
  const int taps_per_phase = 24;
  const long half = static_cast<long>(taps_per_phase / 2) * std::max(up, down);
  const double cutoff = 0.45 / static_cast<double>(std::max(up, down));
  std::vector<double> h(2 * half + 1);
  for (long i = -half; i <= half; ++i) {
    const double x = 2.0 * std::numbers::pi * cutoff * i;
    const double sinc = i == 0 ? 2.0 * cutoff : std::sin(x) / (std::numbers::pi * i);
    const double win =
        0.5 + 0.5 * std::cos(std::numbers::pi * i / (half + 1.0));
    h[i + half] = sinc * win * static_cast<double>(up);
  }

  const long n_in = w.size();
  const long n_out = (n_in * up + down - 1) / down;
  Waveform out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(n_out);
  for (long j = 0; j < n_out; ++j) {
    const long t_up = j * down;  // position on the up-rate grid
    double acc = 0.0;
    // y[j] = sum_i x[i] * h[t_up - i*up]
    const long i_min = std::max(0L, (t_up - half + up - 1) / up);
    const long i_max = std::min(n_in - 1, (t_up + half) / up);
    for (long i = i_min; i <= i_max; ++i)
      acc += static_cast<double>(w.samples[i]) * h[t_up - i * up + half];
    out.samples[j] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace ncvc::corpus
