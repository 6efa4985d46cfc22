#pragma once

#include <string>

#include "av360/media.hpp"

namespace av360::media {

enum class WavFormat { Pcm16, Float32 };

// Reads a RIFF/WAVE file holding PCM 16-bit or IEEE float32 samples.
// PCM samples are scaled to [-1, 1). Throws std::runtime_error on malformed
// or unsupported input.
AudioTrack read_wav(const std::string& path);

void write_wav(const std::string& path, const AudioTrack& track,
               WavFormat format = WavFormat::Float32);

}  // namespace av360::media
