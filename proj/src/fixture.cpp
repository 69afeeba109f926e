#include "emolysis/fixture.hpp"

#include <cmath>
#include <numbers>

#include "emolysis/tracking.hpp"

namespace emolysis::fixture {

std::int64_t frame_count(const Spec& spec) {
  return static_cast<std::int64_t>(std::llround(spec.duration_s * spec.fps));
}

std::int64_t flash_frame(const Spec& spec) {
  return static_cast<std::int64_t>(std::llround(spec.sync_at_s * spec.fps));
}

std::vector<Box> boxes_at(const Spec& spec, std::int64_t frame) {
  std::vector<Box> out;
  if (frame == flash_frame(spec)) return out;
  const double t = static_cast<double>(frame) / spec.fps;
  const double u = t / spec.duration_s;

  // Two non-crossing trajectories scaled to the frame size.
  const double sx = spec.width / 128.0;
  const double sy = spec.height / 96.0;
  out.push_back({0, static_cast<int>(std::lround((8 + 40 * u) * sx)),
                 static_cast<int>(std::lround((20 + 6 * std::sin(2 * std::numbers::pi * t / 10)) * sy)),
                 static_cast<int>(std::lround(28 * sx)), static_cast<int>(std::lround(32 * sy))});
  if (t >= 3.0 && t < spec.duration_s - 3.0) {
    out.push_back({1, static_cast<int>(std::lround((96 - 24 * u) * sx)),
                   static_cast<int>(std::lround(60 * sy)), static_cast<int>(std::lround(24 * sx)),
                   static_cast<int>(std::lround(28 * sy))});
  }
  return out;
}

Image render_frame(const Spec& spec, std::int64_t frame) {
  if (frame == flash_frame(spec)) return Image(spec.width, spec.height, 255);

  Image img(spec.width, spec.height);
  const auto f = static_cast<int>(frame);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const auto v = static_cast<std::uint8_t>(40 + (x * 3 + y * 5 + f) % 32);
      std::uint8_t* p = img.at(x, y);
      p[0] = v;
      p[1] = v;
      p[2] = v;
    }
  }
  const auto marker = tracking::MarkerDetector::kMarkerColor;
  for (const auto& b : boxes_at(spec, frame)) {
    for (int y = b.y; y < b.y + b.h; ++y) {
      for (int x = b.x; x < b.x + b.w; ++x) {
        std::uint8_t* p = img.at(x, y);
        const bool border = x < b.x + 2 || x >= b.x + b.w - 2 || y < b.y + 2 || y >= b.y + b.h - 2;
        if (border) {
          p[0] = marker[0];
          p[1] = marker[1];
          p[2] = marker[2];
        } else {
          // Texture drifts with time so each crop hashes differently.
          p[0] = static_cast<std::uint8_t>(120 + (f * 7 + x) % 100);
          p[1] = static_cast<std::uint8_t>(60 + b.person * 40);
          p[2] = static_cast<std::uint8_t>(90 + (y * 3 + f) % 60);
        }
      }
    }
  }
  return img;
}

std::string make_avi(const Spec& spec) {
  std::optional<AudioFormat> audio;
  if (spec.with_audio) audio = AudioFormat{spec.audio_rate_hz, spec.audio_channels};
  AviWriter writer({spec.width, spec.height, spec.fps, 1}, audio);

  const std::int64_t frames = frame_count(spec);
  const std::int64_t beep_first = std::llround(spec.sync_at_s * spec.audio_rate_hz);
  const std::int64_t beep_last = beep_first + std::llround(spec.beep_length_s * spec.audio_rate_hz);
  std::uint32_t lcg = 12345;
  std::int64_t sample = 0;
  for (std::int64_t i = 0; i < frames; ++i) {
    writer.add_frame(render_frame(spec, i));
    if (!audio) continue;
    // Audio interleaved per frame; sample counts follow the exact clock.
    const std::int64_t until = (i + 1) * spec.audio_rate_hz / spec.fps;
    std::vector<std::int16_t> pcm;
    pcm.reserve(static_cast<std::size_t>((until - sample) * spec.audio_channels));
    for (; sample < until; ++sample) {
      double v = 0.0;
      if (!spec.silent) {
        lcg = lcg * 1664525U + 1013904223U;
        v = 0.02 * (static_cast<double>(lcg >> 8) / static_cast<double>(1U << 24) - 0.5);
        if (sample >= beep_first && sample < beep_last) {
          const double t = static_cast<double>(sample - beep_first) / spec.audio_rate_hz;
          v += 0.5 * std::sin(2 * std::numbers::pi * 1000.0 * t + std::numbers::pi / 2);
        }
      }
      const auto q = static_cast<std::int16_t>(std::lround(v * 32767.0));
      for (int ch = 0; ch < spec.audio_channels; ++ch) pcm.push_back(q);
    }
    writer.add_audio(pcm);
  }
  return writer.finish();
}

}  // namespace emolysis::fixture
