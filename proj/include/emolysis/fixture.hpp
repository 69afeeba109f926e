#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emolysis/media.hpp"

namespace emolysis::fixture {

// Synthetic group video used by the test corpus. Faces are painted as marker
// rectangles (see tracking::MarkerDetector) with a textured interior; a full
// white flash frame and a 1 kHz beep share one timestamp so the shared media
// clock can be verified.
struct Spec {
  double duration_s = 30.0;
  int width = 128;
  int height = 96;
  std::uint32_t fps = 25;
  bool with_audio = true;
  bool silent = false;
  int audio_rate_hz = 16000;
  int audio_channels = 1;
  double sync_at_s = 12.0;
  double beep_length_s = 0.2;
};

struct Box {
  int person;
  int x;
  int y;
  int w;
  int h;
};

/// Ground-truth face boxes painted into `frame`. Empty on the flash frame.
std::vector<Box> boxes_at(const Spec& spec, std::int64_t frame);

std::int64_t frame_count(const Spec& spec);
std::int64_t flash_frame(const Spec& spec);

Image render_frame(const Spec& spec, std::int64_t frame);

/// Complete AVI container for `spec`. Pure function of its argument.
std::string make_avi(const Spec& spec);

}  // namespace emolysis::fixture
