#include "emolysis/media.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>

namespace emolysis {

namespace {

std::uint16_t le16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
std::uint32_t le32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::int32_t le32s(const std::uint8_t* p) { return static_cast<std::int32_t>(le32(p)); }

bool fourcc_is(const std::uint8_t* p, const char* id) { return std::memcmp(p, id, 4) == 0; }

// "00db" -> 0; returns -1 if the first two characters are not digits.
int stream_number(const std::uint8_t* id) {
  if (id[0] < '0' || id[0] > '9' || id[1] < '0' || id[1] > '9') return -1;
  return (id[0] - '0') * 10 + (id[1] - '0');
}

constexpr std::uint16_t kWaveFormatPcm = 1;
constexpr std::uint16_t kWaveFormatExtensible = 0xFFFE;

}  // namespace

struct MediaReader::Source {
  std::shared_ptr<const std::string> memory;
  mutable std::ifstream file;
  mutable std::mutex mutex;
  std::uint64_t size = 0;

  void read(std::uint64_t offset, std::span<std::uint8_t> out) const {
    if (offset + out.size() > size) throw IngestError("read past end of container");
    if (memory) {
      std::memcpy(out.data(), memory->data() + offset, out.size());
      return;
    }
    std::lock_guard lock(mutex);
    file.clear();
    file.seekg(static_cast<std::streamoff>(offset));
    file.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (static_cast<std::size_t>(file.gcount()) != out.size()) {
      throw IngestError("short read from container");
    }
  }

  std::vector<std::uint8_t> read(std::uint64_t offset, std::size_t n) const {
    std::vector<std::uint8_t> buf(n);
    read(offset, buf);
    return buf;
  }
};

MediaReader::MediaReader(std::unique_ptr<Source> source) : source_(std::move(source)) {}
MediaReader::~MediaReader() = default;

std::shared_ptr<MediaReader> MediaReader::open(const std::filesystem::path& path) {
  auto src = std::make_unique<Source>();
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IngestError("cannot open '" + path.string() + "': " + ec.message());
  src->file.open(path, std::ios::binary);
  if (!src->file) throw IngestError("cannot open '" + path.string() + "'");
  src->size = size;
  std::shared_ptr<MediaReader> reader(new MediaReader(std::move(src)));
  reader->index();
  return reader;
}

std::shared_ptr<MediaReader> MediaReader::open_memory(std::shared_ptr<const std::string> bytes) {
  if (!bytes) throw IngestError("no media bytes");
  auto src = std::make_unique<Source>();
  src->size = bytes->size();
  src->memory = std::move(bytes);
  std::shared_ptr<MediaReader> reader(new MediaReader(std::move(src)));
  reader->index();
  return reader;
}

void MediaReader::index() {
  const auto& src = *source_;
  if (src.size < 12) throw IngestError("not a RIFF container (too short)");
  const auto header = src.read(0, 12);
  if (!fourcc_is(header.data(), "RIFF") || !fourcc_is(header.data() + 8, "AVI ")) {
    throw IngestError("not a RIFF/AVI container");
  }
  const std::uint64_t riff_end = 8ULL + le32(header.data() + 4);
  if (riff_end > src.size) throw IngestError("truncated container");

  struct StreamHeader {
    bool video = false;
    bool audio = false;
    std::uint32_t scale = 0;
    std::uint32_t rate = 0;
  };
  std::vector<StreamHeader> streams;
  std::uint16_t audio_format = 0;
  int audio_bits = 0;
  bool have_movi = false;

  // Walks the chunks in [begin, end); `in_movi` tracks nesting under LIST movi.
  auto walk = [&](auto&& self, std::uint64_t begin, std::uint64_t end, bool in_movi) -> void {
    std::uint64_t pos = begin;
    while (pos + 8 <= end) {
      const auto ck = src.read(pos, 8);
      const std::uint32_t size = le32(ck.data() + 4);
      const std::uint64_t body = pos + 8;
      if (body + size > end) throw IngestError("chunk extends past its parent");
      if (fourcc_is(ck.data(), "LIST")) {
        if (size < 4) throw IngestError("malformed LIST chunk");
        const auto type = src.read(body, 4);
        const bool movi = fourcc_is(type.data(), "movi");
        if (movi) have_movi = true;
        self(self, body + 4, body + size, in_movi || movi);
      } else if (in_movi) {
        const int stream = stream_number(ck.data());
        if (stream >= 0 && stream == video_stream_ &&
            (ck[2] == 'd' && (ck[3] == 'b' || ck[3] == 'c'))) {
          video_chunks_.push_back({body, size});
        } else if (stream >= 0 && stream == audio_stream_ && ck[2] == 'w' && ck[3] == 'b') {
          audio_chunks_.push_back({body, size});
        }
      } else if (fourcc_is(ck.data(), "strh")) {
        if (size < 56) throw IngestError("short strh chunk");
        const auto h = src.read(body, 56);
        StreamHeader sh;
        sh.video = fourcc_is(h.data(), "vids");
        sh.audio = fourcc_is(h.data(), "auds");
        sh.scale = le32(h.data() + 20);
        sh.rate = le32(h.data() + 24);
        streams.push_back(sh);
      } else if (fourcc_is(ck.data(), "strf") && !streams.empty()) {
        const int idx = static_cast<int>(streams.size()) - 1;
        const auto& sh = streams.back();
        if (sh.video && video_stream_ < 0) {
          if (size < 40) throw IngestError("short video format chunk");
          const auto f = src.read(body, 40);
          info_.width = le32s(f.data() + 4);
          const std::int32_t h = le32s(f.data() + 8);
          info_.height = std::abs(h);
          bottom_up_ = h > 0;
          bits_per_pixel_ = le16(f.data() + 14);
          const std::uint32_t compression = le32(f.data() + 16);
          if (compression != 0 || (bits_per_pixel_ != 24 && bits_per_pixel_ != 32)) {
            throw IngestError("unsupported video coding (only uncompressed 24/32-bit RGB)");
          }
          if (info_.width <= 0 || info_.height <= 0) throw IngestError("invalid frame size");
          if (sh.scale == 0 || sh.rate == 0) throw IngestError("invalid frame rate");
          info_.fps = static_cast<double>(sh.rate) / static_cast<double>(sh.scale);
          video_stream_ = idx;
        } else if (sh.audio && audio_stream_ < 0) {
          if (size < 16) throw IngestError("short audio format chunk");
          const auto f = src.read(body, 16);
          audio_format = le16(f.data());
          info_.audio_channels = le16(f.data() + 2);
          info_.audio_rate_hz = static_cast<int>(le32(f.data() + 4));
          audio_block_align_ = le16(f.data() + 12);
          audio_bits = le16(f.data() + 14);
          audio_stream_ = idx;
        }
      }
      pos = body + size + (size & 1U);
    }
  };
  walk(walk, 12, riff_end, false);

  if (video_stream_ < 0) throw IngestError("container has no video stream");
  if (!have_movi) throw IngestError("container has no movi list");

  // Only PCM16 audio is decoded; anything else degrades to a video-only session.
  const bool pcm = audio_format == kWaveFormatPcm || audio_format == kWaveFormatExtensible;
  if (audio_stream_ >= 0 && pcm && audio_bits == 16 && info_.audio_channels > 0 &&
      info_.audio_rate_hz > 0 && audio_block_align_ == 2 * info_.audio_channels) {
    for (const auto& c : audio_chunks_) {
      audio_chunk_first_sample_.push_back(audio_total_samples_);
      audio_total_samples_ += c.size / static_cast<std::uint32_t>(audio_block_align_);
    }
  } else {
    audio_chunks_.clear();
  }
  info_.has_audio = audio_total_samples_ > 0;
  if (!info_.has_audio) {
    info_.audio_rate_hz = 0;
    info_.audio_channels = 0;
  }

  info_.frame_count = static_cast<std::int64_t>(video_chunks_.size());
  if (info_.frame_count == 0) throw ValidationError("zero-duration media (no video frames)");
  info_.duration_s = static_cast<double>(info_.frame_count) / info_.fps;
}

FrameRef MediaReader::decode_frame(std::int64_t index) const {
  if (index < 0 || index >= info_.frame_count) throw ValidationError("frame index out of range");
  // Zero-sized chunks mark dropped frames; they repeat the previous picture.
  std::int64_t payload = index;
  while (payload > 0 && video_chunks_[static_cast<std::size_t>(payload)].size == 0) --payload;
  const Chunk& c = video_chunks_[static_cast<std::size_t>(payload)];

  const int bytes_pp = bits_per_pixel_ / 8;
  const std::size_t stride = (static_cast<std::size_t>(info_.width) * bytes_pp + 3) & ~std::size_t{3};
  const std::size_t expected = stride * static_cast<std::size_t>(info_.height);
  if (c.size < expected) {
    throw PartialSegmentError("frame " + std::to_string(index) + " payload is " +
                                  std::to_string(c.size) + " bytes, expected " +
                                  std::to_string(expected),
                              index - 1);
  }
  const auto raw = source_->read(c.offset, expected);

  FrameRef frame{.frame_index = index,
                 .timestamp_s = static_cast<double>(index) / info_.fps,
                 .pixels = Image(info_.width, info_.height)};
  for (int y = 0; y < info_.height; ++y) {
    const int src_row = bottom_up_ ? info_.height - 1 - y : y;
    const std::uint8_t* in = raw.data() + static_cast<std::size_t>(src_row) * stride;
    std::uint8_t* out = frame.pixels.at(0, y);
    for (int x = 0; x < info_.width; ++x, in += bytes_pp, out += 3) {
      out[0] = in[2];
      out[1] = in[1];
      out[2] = in[0];
    }
  }
  return frame;
}

FrameStream MediaReader::frames(const TimeInterval& interval) const {
  const double fps = info_.fps;
  auto first = static_cast<std::int64_t>(std::floor(interval.start_s() * fps));
  first = std::max<std::int64_t>(first - 1, 0);
  while (first < info_.frame_count && static_cast<double>(first) / fps < interval.start_s()) ++first;
  std::int64_t last = first;
  while (last < info_.frame_count && static_cast<double>(last) / fps < interval.end_s()) ++last;
  return FrameStream(shared_from_this(), first, last);
}

std::optional<FrameRef> FrameStream::next() {
  if (next_ >= last_) return std::nullopt;
  try {
    FrameRef f = reader_->decode_frame(next_);
    last_good_ = next_++;
    return f;
  } catch (const PartialSegmentError& e) {
    next_ = last_;
    throw PartialSegmentError(e.what(), last_good_);
  }
}

std::vector<float> MediaReader::read_mono(std::int64_t first_sample, std::int64_t count) const {
  std::vector<float> out(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)), 0.0f);
  if (count <= 0) return out;
  const std::int64_t begin = std::max<std::int64_t>(first_sample, 0);
  const std::int64_t end = std::min(first_sample + count, audio_total_samples_);
  if (begin >= end) return out;

  auto it = std::upper_bound(audio_chunk_first_sample_.begin(), audio_chunk_first_sample_.end(), begin);
  std::size_t ci = static_cast<std::size_t>(it - audio_chunk_first_sample_.begin()) - 1;
  const int channels = info_.audio_channels;
  std::int64_t s = begin;
  while (s < end && ci < audio_chunks_.size()) {
    const Chunk& c = audio_chunks_[ci];
    const std::int64_t chunk_first = audio_chunk_first_sample_[ci];
    const std::int64_t chunk_n = c.size / audio_block_align_;
    const std::int64_t from = s - chunk_first;
    const std::int64_t to = std::min(chunk_n, end - chunk_first);
    if (to > from) {
      const auto raw = source_->read(c.offset + static_cast<std::uint64_t>(from) * audio_block_align_,
                                     static_cast<std::size_t>((to - from) * audio_block_align_));
      for (std::int64_t i = 0; i < to - from; ++i) {
        double acc = 0.0;
        for (int ch = 0; ch < channels; ++ch) {
          const auto* p = raw.data() + (i * channels + ch) * 2;
          acc += static_cast<std::int16_t>(le16(p)) / 32768.0;
        }
        out[static_cast<std::size_t>(chunk_first + from + i - first_sample)] =
            static_cast<float>(acc / channels);
      }
      s = chunk_first + to;
    }
    ++ci;
  }
  return out;
}

AudioClip MediaReader::audio(const TimeInterval& interval, int target_rate_hz) const {
  if (!info_.has_audio) throw ModalityUnavailable("media has no decodable audio stream");
  if (target_rate_hz <= 0) throw ValidationError("target sample rate must be positive");
  const double end = std::min(interval.end_s(), info_.duration_s);
  if (!(interval.start_s() < end)) throw ValidationError("audio interval starts past the media end");
  const TimeInterval clipped(interval.start_s(), end);

  const auto n_out = static_cast<std::int64_t>(std::llround(clipped.length_s() * target_rate_hz));
  const double ratio = static_cast<double>(info_.audio_rate_hz) / target_rate_hz;
  const double src_start = clipped.start_s() * info_.audio_rate_hz;
  const auto first = static_cast<std::int64_t>(std::floor(src_start));
  const auto span = static_cast<std::int64_t>(std::ceil(static_cast<double>(n_out) * ratio)) + 2;
  const auto src = read_mono(first, span);

  AudioClip clip{.interval = clipped, .sample_rate_hz = target_rate_hz, .samples = {}};
  clip.samples.resize(static_cast<std::size_t>(n_out));
  // Linear interpolation; with equal rates and an aligned start this is an exact copy.
  for (std::int64_t i = 0; i < n_out; ++i) {
    const double pos = src_start - static_cast<double>(first) + static_cast<double>(i) * ratio;
    const auto i0 = static_cast<std::int64_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i0);
    auto sample = [&](std::int64_t k) {
      return (k >= 0 && k < static_cast<std::int64_t>(src.size())) ? src[static_cast<std::size_t>(k)] : 0.0f;
    };
    const double v = frac == 0.0 ? sample(i0) : sample(i0) * (1.0 - frac) + sample(i0 + 1) * frac;
    clip.samples[static_cast<std::size_t>(i)] = static_cast<float>(v);
  }
  return clip;
}

MediaInfo probe(const std::filesystem::path& path) { return MediaReader::open(path)->info(); }

FrameStream frames(const std::filesystem::path& path, const TimeInterval& interval) {
  return MediaReader::open(path)->frames(interval);
}

AudioClip audio(const std::filesystem::path& path, const TimeInterval& interval, int target_rate_hz) {
  return MediaReader::open(path)->audio(interval, target_rate_hz);
}

// --- writer ---------------------------------------------------------------

namespace {

void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xFF));
  s.push_back(static_cast<char>(v >> 8));
}
void put32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put_fourcc(std::string& s, const char* id) { s.append(id, 4); }

void patch32(std::string& s, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s[at + i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

// Opens a chunk (or LIST when `list_type` is set) and returns the size offset.
std::size_t open_chunk(std::string& s, const char* id, const char* list_type = nullptr) {
  put_fourcc(s, id);
  const std::size_t at = s.size();
  put32(s, 0);
  if (list_type) put_fourcc(s, list_type);
  return at;
}
void close_chunk(std::string& s, std::size_t size_at) {
  patch32(s, size_at, static_cast<std::uint32_t>(s.size() - size_at - 4));
  if (s.size() & 1U) s.push_back('\0');
}

}  // namespace

AviWriter::AviWriter(VideoFormat video, std::optional<AudioFormat> audio)
    : video_(video), audio_(audio) {
  if (video.width <= 0 || video.height <= 0 || video.fps_num == 0 || video.fps_den == 0) {
    throw ValidationError("invalid video format");
  }
  if (audio && (audio->sample_rate_hz <= 0 || audio->channels <= 0)) {
    throw ValidationError("invalid audio format");
  }
}

void AviWriter::append_chunk(const char fourcc[4], std::span<const std::uint8_t> payload,
                             bool keyframe) {
  IndexEntry e{};
  std::memcpy(e.fourcc, fourcc, 4);
  e.flags = keyframe ? 0x10 : 0;
  e.offset = static_cast<std::uint32_t>(4 + movi_.size());  // relative to the 'movi' fourcc
  e.size = static_cast<std::uint32_t>(payload.size());
  index_.push_back(e);
  movi_.append(fourcc, 4);
  put32(movi_, e.size);
  movi_.append(reinterpret_cast<const char*>(payload.data()), payload.size());
  if (payload.size() & 1U) movi_.push_back('\0');
}

void AviWriter::add_frame(const Image& frame) {
  if (frame.width != video_.width || frame.height != video_.height) {
    throw ValidationError("frame size does not match the stream format");
  }
  const std::size_t stride = (static_cast<std::size_t>(video_.width) * 3 + 3) & ~std::size_t{3};
  std::vector<std::uint8_t> dib(stride * static_cast<std::size_t>(video_.height), 0);
  for (int y = 0; y < video_.height; ++y) {
    std::uint8_t* out = dib.data() + static_cast<std::size_t>(video_.height - 1 - y) * stride;
    const std::uint8_t* in = frame.at(0, y);
    for (int x = 0; x < video_.width; ++x, in += 3, out += 3) {
      out[0] = in[2];
      out[1] = in[1];
      out[2] = in[0];
    }
  }
  append_chunk("00db", dib, true);
  ++frames_;
}

void AviWriter::add_audio(std::span<const std::int16_t> interleaved) {
  if (!audio_) throw ValidationError("writer has no audio stream");
  if (interleaved.size() % static_cast<std::size_t>(audio_->channels) != 0) {
    throw ValidationError("audio buffer is not a whole number of sample frames");
  }
  std::vector<std::uint8_t> pcm(interleaved.size() * 2);
  for (std::size_t i = 0; i < interleaved.size(); ++i) {
    const auto v = static_cast<std::uint16_t>(interleaved[i]);
    pcm[2 * i] = static_cast<std::uint8_t>(v & 0xFF);
    pcm[2 * i + 1] = static_cast<std::uint8_t>(v >> 8);
  }
  append_chunk("01wb", pcm, true);
  audio_samples_ += static_cast<std::int64_t>(interleaved.size()) / audio_->channels;
}

std::string AviWriter::finish() const {
  const std::uint32_t w = static_cast<std::uint32_t>(video_.width);
  const std::uint32_t h = static_cast<std::uint32_t>(video_.height);
  const std::uint32_t frame_bytes = ((w * 3 + 3) & ~3U) * h;
  const int streams = audio_ ? 2 : 1;

  std::string s;
  s.reserve(movi_.size() + index_.size() * 16 + 512);
  const auto riff = open_chunk(s, "RIFF", "AVI ");
  const auto hdrl = open_chunk(s, "LIST", "hdrl");
  {
    const auto avih = open_chunk(s, "avih");
    put32(s, static_cast<std::uint32_t>(std::llround(1e6 * video_.fps_den / video_.fps_num)));
    put32(s, 0);                               // max bytes per second
    put32(s, 0);                               // padding granularity
    put32(s, 0x10);                            // AVIF_HASINDEX
    put32(s, static_cast<std::uint32_t>(frames_));
    put32(s, 0);                               // initial frames
    put32(s, static_cast<std::uint32_t>(streams));
    put32(s, frame_bytes);
    put32(s, w);
    put32(s, h);
    for (int i = 0; i < 4; ++i) put32(s, 0);
    close_chunk(s, avih);
  }
  {
    const auto strl = open_chunk(s, "LIST", "strl");
    const auto strh = open_chunk(s, "strh");
    put_fourcc(s, "vids");
    put_fourcc(s, "DIB ");
    put32(s, 0);
    put16(s, 0);
    put16(s, 0);
    put32(s, 0);
    put32(s, video_.fps_den);
    put32(s, video_.fps_num);
    put32(s, 0);
    put32(s, static_cast<std::uint32_t>(frames_));
    put32(s, frame_bytes);
    put32(s, 0xFFFFFFFF);
    put32(s, 0);
    put16(s, 0);
    put16(s, 0);
    put16(s, static_cast<std::uint16_t>(w));
    put16(s, static_cast<std::uint16_t>(h));
    close_chunk(s, strh);
    const auto strf = open_chunk(s, "strf");
    put32(s, 40);
    put32(s, w);
    put32(s, h);  // positive height: bottom-up rows
    put16(s, 1);
    put16(s, 24);
    put32(s, 0);  // BI_RGB
    put32(s, frame_bytes);
    put32(s, 0);
    put32(s, 0);
    put32(s, 0);
    put32(s, 0);
    close_chunk(s, strf);
    close_chunk(s, strl);
  }
  if (audio_) {
    const auto block = static_cast<std::uint16_t>(2 * audio_->channels);
    const auto rate = static_cast<std::uint32_t>(audio_->sample_rate_hz);
    const auto strl = open_chunk(s, "LIST", "strl");
    const auto strh = open_chunk(s, "strh");
    put_fourcc(s, "auds");
    put32(s, 0);
    put32(s, 0);
    put16(s, 0);
    put16(s, 0);
    put32(s, 0);
    put32(s, block);
    put32(s, rate * block);
    put32(s, 0);
    put32(s, static_cast<std::uint32_t>(audio_samples_));
    put32(s, rate * block);
    put32(s, 0xFFFFFFFF);
    put32(s, block);
    for (int i = 0; i < 4; ++i) put16(s, 0);
    close_chunk(s, strh);
    const auto strf = open_chunk(s, "strf");
    put16(s, 1);  // PCM
    put16(s, static_cast<std::uint16_t>(audio_->channels));
    put32(s, rate);
    put32(s, rate * block);
    put16(s, block);
    put16(s, 16);
    put16(s, 0);
    close_chunk(s, strf);
    close_chunk(s, strl);
  }
  close_chunk(s, hdrl);

  const auto movi = open_chunk(s, "LIST", "movi");
  s.append(movi_);
  close_chunk(s, movi);

  const auto idx1 = open_chunk(s, "idx1");
  for (const auto& e : index_) {
    s.append(e.fourcc, 4);
    put32(s, e.flags);
    put32(s, e.offset);
    put32(s, e.size);
  }
  close_chunk(s, idx1);
  close_chunk(s, riff);
  return s;
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("short write to '" + path.string() + "'");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace emolysis
