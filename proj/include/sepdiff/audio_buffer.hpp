#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sepdiff {

/// Multichannel time-domain audio. Samples are stored channel-major: all of
/// channel 0, then all of channel 1, and so on.
class AudioBuffer {
 public:
  AudioBuffer() = default;
  AudioBuffer(std::size_t channels, std::size_t length, double sample_rate,
              float fill = 0.0f);

  std::size_t channels() const noexcept { return channels_; }
  std::size_t length() const noexcept { return length_; }
  std::size_t size() const noexcept { return data_.size(); }
  double sample_rate() const noexcept { return sample_rate_; }
  bool empty() const noexcept { return data_.empty(); }

  float& at(std::size_t channel, std::size_t index) {
    return data_[channel * length_ + index];
  }
  float at(std::size_t channel, std::size_t index) const {
    return data_[channel * length_ + index];
  }

  std::span<float> channel(std::size_t c) {
    return {data_.data() + c * length_, length_};
  }
  std::span<const float> channel(std::size_t c) const {
    return {data_.data() + c * length_, length_};
  }

  std::span<float> samples() { return data_; }
  std::span<const float> samples() const { return data_; }

  bool same_shape(const AudioBuffer& other) const noexcept {
    return channels_ == other.channels_ && length_ == other.length_;
  }

  bool all_finite() const;

  /// Copy of [offset, offset + count); reads past the end yield zeros.
  AudioBuffer slice(std::size_t offset, std::size_t count) const;

  /// Root mean square over every channel and sample.
  double rms() const;

  bool operator==(const AudioBuffer& other) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t length_ = 0;
  double sample_rate_ = 0.0;
  std::vector<float> data_;
};

/// Throws InvalidArgument unless both buffers share channels, length and rate.
void require_compatible(const AudioBuffer& a, const AudioBuffer& b,
                        const char* what);

/// Duplicates a mono buffer to `channels` channels; other inputs must already
/// have that channel count.
AudioBuffer match_channels(const AudioBuffer& buffer, std::size_t channels);

}  // namespace sepdiff
