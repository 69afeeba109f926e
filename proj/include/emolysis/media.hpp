#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emolysis/core.hpp"

namespace emolysis {

/// Interleaved 8-bit RGB, row-major, origin top-left.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::uint8_t* at(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* at(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// The pixel buffer is owned by the FrameRef and dies with it; it has no
// serialization.
struct FrameRef {
  std::int64_t frame_index = 0;
  double timestamp_s = 0.0;
  Image pixels;
};

struct AudioClip {
  TimeInterval interval;
  int sample_rate_hz;
  std::vector<float> samples;  // mono, [-1,1]
};

struct MediaInfo {
  double duration_s = 0.0;
  double fps = 0.0;
  bool has_audio = false;
  int width = 0;
  int height = 0;
  std::int64_t frame_count = 0;
  int audio_rate_hz = 0;
  int audio_channels = 0;
};

inline constexpr int kDefaultAudioRateHz = 16000;

class MediaReader;

/// Lazily decodes the frames of one interval. Buffers are produced one at a
/// time and handed to the caller.
class FrameStream {
 public:
  std::optional<FrameRef> next();

 private:
  friend class MediaReader;
  FrameStream(std::shared_ptr<const MediaReader> reader, std::int64_t first, std::int64_t last)
      : reader_(std::move(reader)), next_(first), last_(last) {}

  std::shared_ptr<const MediaReader> reader_;
  std::int64_t next_;
  std::int64_t last_;
  std::int64_t last_good_ = -1;
};

/// Reader for RIFF/AVI containers holding uncompressed (BI_RGB, 24 or 32 bit)
/// video and optionally 16-bit PCM audio. The container is indexed on open;
/// frame and sample payloads are read on demand.
class MediaReader : public std::enable_shared_from_this<MediaReader> {
 public:
  static std::shared_ptr<MediaReader> open(const std::filesystem::path& path);
  /// Reads from an in-memory upload; nothing touches the file system.
  static std::shared_ptr<MediaReader> open_memory(std::shared_ptr<const std::string> bytes);

  ~MediaReader();
  MediaReader(const MediaReader&) = delete;
  MediaReader& operator=(const MediaReader&) = delete;

  const MediaInfo& info() const noexcept { return info_; }

  /// Frames with timestamp in `interval`, in increasing order.
  FrameStream frames(const TimeInterval& interval) const;

  /// Decodes a single frame; throws PartialSegmentError on a damaged payload.
  FrameRef decode_frame(std::int64_t index) const;

  /// Mono audio for `interval` (end clamped to the media duration), resampled
  /// to `target_rate_hz`. Throws ModalityUnavailable when there is no audio.
  AudioClip audio(const TimeInterval& interval, int target_rate_hz = kDefaultAudioRateHz) const;

 private:
  struct Source;
  struct Chunk {
    std::uint64_t offset;
    std::uint32_t size;
  };

  explicit MediaReader(std::unique_ptr<Source> source);
  void index();
  std::vector<float> read_mono(std::int64_t first_sample, std::int64_t count) const;

  std::unique_ptr<Source> source_;
  MediaInfo info_;
  int bits_per_pixel_ = 24;
  bool bottom_up_ = true;
  int video_stream_ = -1;
  int audio_stream_ = -1;
  int audio_block_align_ = 0;
  std::vector<Chunk> video_chunks_;
  std::vector<Chunk> audio_chunks_;
  std::vector<std::int64_t> audio_chunk_first_sample_;
  std::int64_t audio_total_samples_ = 0;
};

MediaInfo probe(const std::filesystem::path& path);
FrameStream frames(const std::filesystem::path& path, const TimeInterval& interval);
AudioClip audio(const std::filesystem::path& path, const TimeInterval& interval,
                int target_rate_hz = kDefaultAudioRateHz);

struct VideoFormat {
  int width;
  int height;
  std::uint32_t fps_num;  // frames per second = fps_num / fps_den
  std::uint32_t fps_den = 1;
};

struct AudioFormat {
  int sample_rate_hz;
  int channels = 1;
};

/// Builds an uncompressed AVI in memory. Audio chunks are interleaved in the
/// order they are added.
class AviWriter {
 public:
  explicit AviWriter(VideoFormat video, std::optional<AudioFormat> audio = std::nullopt);

  void add_frame(const Image& frame);
  /// Interleaved PCM16, `channels` samples per sample frame.
  void add_audio(std::span<const std::int16_t> interleaved);

  /// Finished container bytes (headers, movi list and idx1 index).
  std::string finish() const;

 private:
  void append_chunk(const char fourcc[4], std::span<const std::uint8_t> payload, bool keyframe);

  VideoFormat video_;
  std::optional<AudioFormat> audio_;
  std::string movi_;
  struct IndexEntry {
    char fourcc[4];
    std::uint32_t flags;
    std::uint32_t offset;
    std::uint32_t size;
  };
  std::vector<IndexEntry> index_;
  std::int64_t frames_ = 0;
  std::int64_t audio_samples_ = 0;
};

void write_file(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace emolysis
