#include "av360/wav.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace av360::media {

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>((v >> 8) & 0xFF));
  s.push_back(static_cast<char>((v >> 16) & 0xFF));
  s.push_back(static_cast<char>((v >> 24) & 0xFF));
}
void put_u16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>((v >> 8) & 0xFF));
}

}  // namespace

AudioTrack read_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open WAV file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  if (n < 12 || std::memcmp(p, "RIFF", 4) != 0 || std::memcmp(p + 8, "WAVE", 4) != 0)
    throw std::runtime_error("not a RIFF/WAVE file: " + path);

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::uint32_t data_len = 0;

  std::size_t off = 12;
  while (off + 8 <= n) {
    const std::uint32_t chunk_len = read_u32(p + off + 4);
    if (off + 8 + chunk_len > n)
      throw std::runtime_error("truncated WAV chunk in " + path);
    if (std::memcmp(p + off, "fmt ", 4) == 0) {
      if (chunk_len < 16) throw std::runtime_error("short fmt chunk in " + path);
      format = read_u16(p + off + 8);
      channels = read_u16(p + off + 10);
      rate = read_u32(p + off + 12);
      bits = read_u16(p + off + 22);
    } else if (std::memcmp(p + off, "data", 4) == 0) {
      data = p + off + 8;
      data_len = chunk_len;
    }
    off += 8 + chunk_len + (chunk_len & 1);  // chunks are word-aligned
  }
  if (data == nullptr) throw std::runtime_error("WAV file has no data chunk: " + path);
  if (channels == 0 || channels > 2)
    throw std::runtime_error("unsupported WAV channel count in " + path);

  AudioTrack track;
  track.sample_rate = static_cast<double>(rate);
  track.channels.resize(channels);

  if (format == 1 && bits == 16) {
    const std::size_t total = data_len / 2;
    const std::size_t frames = total / channels;
    for (auto& ch : track.channels) ch.resize(frames);
    for (std::size_t i = 0; i < frames; ++i)
      for (std::uint16_t c = 0; c < channels; ++c) {
        const std::size_t k = (i * channels + c) * 2;
        const std::int16_t s =
            static_cast<std::int16_t>(data[k] | (data[k + 1] << 8));
        track.channels[c][i] = s / 32768.0;
      }
  } else if (format == 3 && bits == 32) {
    const std::size_t total = data_len / 4;
    const std::size_t frames = total / channels;
    for (auto& ch : track.channels) ch.resize(frames);
    for (std::size_t i = 0; i < frames; ++i)
      for (std::uint16_t c = 0; c < channels; ++c) {
        float v;
        std::memcpy(&v, data + (i * channels + c) * 4, 4);
        track.channels[c][i] = v;
      }
  } else {
    throw std::runtime_error("unsupported WAV sample format in " + path);
  }
  validate(track);
  return track;
}

void write_wav(const std::string& path, const AudioTrack& track, WavFormat format) {
  validate(track);
  const std::uint16_t channels = static_cast<std::uint16_t>(track.channels.size());
  const std::size_t frames = track.frames();
  const std::uint16_t bytes_per =
      format == WavFormat::Pcm16 ? 2 : 4;
  const std::uint32_t data_len =
      static_cast<std::uint32_t>(frames * channels * bytes_per);

  std::string out;
  out.reserve(44 + data_len);
  out += "RIFF";
  put_u32(out, 36 + data_len);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, format == WavFormat::Pcm16 ? 1 : 3);
  put_u16(out, channels);
  put_u32(out, static_cast<std::uint32_t>(track.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(track.sample_rate) * channels * bytes_per);
  put_u16(out, static_cast<std::uint16_t>(channels * bytes_per));
  put_u16(out, static_cast<std::uint16_t>(bytes_per * 8));
  out += "data";
  put_u32(out, data_len);

  for (std::size_t i = 0; i < frames; ++i)
    for (std::uint16_t c = 0; c < channels; ++c) {
      const double v = track.channels[c][i];
      if (format == WavFormat::Pcm16) {
        const double clamped = v < -1.0 ? -1.0 : (v > 32767.0 / 32768.0 ? 32767.0 / 32768.0 : v);
        const std::int16_t s = static_cast<std::int16_t>(std::lround(clamped * 32768.0));
        put_u16(out, static_cast<std::uint16_t>(s));
      } else {
        const float fv = static_cast<float>(v);
        std::uint32_t u;
        std::memcpy(&u, &fv, 4);
        put_u32(out, u);
      }
    }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write WAV file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace av360::media
