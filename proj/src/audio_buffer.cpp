#include "sepdiff/audio_buffer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sepdiff/error.hpp"

namespace sepdiff {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::NumericFailure: return "numeric-failure";
    case ErrorCode::UnsupportedFormat: return "unsupported-format";
    case ErrorCode::CorruptFile: return "corrupt-file";
    case ErrorCode::IoError: return "io-error";
    case ErrorCode::EmptyDataset: return "empty-dataset";
    case ErrorCode::ContractViolation: return "contract-violation";
    case ErrorCode::UndefinedReference: return "undefined-reference";
    case ErrorCode::VersionMismatch: return "version-mismatch";
  }
  return "unknown";
}

AudioBuffer::AudioBuffer(std::size_t channels, std::size_t length,
                         double sample_rate, float fill)
    : channels_(channels),
      length_(length),
      sample_rate_(sample_rate),
      data_(channels * length, fill) {
  require(channels >= 1, "AudioBuffer needs at least one channel");
  require(sample_rate > 0.0, "AudioBuffer sample rate must be positive");
}

bool AudioBuffer::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](float v) { return std::isfinite(v); });
}

AudioBuffer AudioBuffer::slice(std::size_t offset, std::size_t count) const {
  AudioBuffer out(channels_, count, sample_rate_);
  for (std::size_t c = 0; c < channels_; ++c) {
    if (offset >= length_) break;
    const std::size_t n = std::min(count, length_ - offset);
    std::copy_n(data_.begin() + c * length_ + offset, n,
                out.data_.begin() + c * count);
  }
  return out;
}

double AudioBuffer::rms() const {
  if (data_.empty()) return 0.0;
  double acc = 0.0;
  for (float v : data_) acc += double(v) * v;
  return std::sqrt(acc / double(data_.size()));
}

void require_compatible(const AudioBuffer& a, const AudioBuffer& b,
                        const char* what) {
  if (!a.same_shape(b) || a.sample_rate() != b.sample_rate()) {
    fail(ErrorCode::InvalidArgument,
         std::string(what) + ": shape or sample-rate mismatch (" +
             std::to_string(a.channels()) + "x" + std::to_string(a.length()) +
             " vs " + std::to_string(b.channels()) + "x" +
             std::to_string(b.length()) + ")");
  }
}

AudioBuffer match_channels(const AudioBuffer& buffer, std::size_t channels) {
  if (buffer.channels() == channels) return buffer;
  if (buffer.channels() != 1) {
    fail(ErrorCode::InvalidArgument,
         "cannot adapt " + std::to_string(buffer.channels()) +
             "-channel audio to " + std::to_string(channels) + " channels");
  }
  AudioBuffer out(channels, buffer.length(), buffer.sample_rate());
  for (std::size_t c = 0; c < channels; ++c) {
    std::copy(buffer.channel(0).begin(), buffer.channel(0).end(),
              out.channel(c).begin());
  }
  return out;
}

}  // namespace sepdiff
