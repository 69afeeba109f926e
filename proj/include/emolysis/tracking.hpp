#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emolysis/media.hpp"
#include "emolysis/serialization.hpp"

namespace emolysis::tracking {

inline constexpr int kCropSize = 224;

/// Axis-aligned box in pixels, origin top-left.
struct BBox {
  double x = 0;
  double y = 0;
  double w = 0;
  double h = 0;

  double area() const noexcept { return w > 0 && h > 0 ? w * h : 0.0; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

double iou(const BBox& a, const BBox& b) noexcept;

/// Intersection with the frame; may come back degenerate (w or h <= 0).
BBox clamp_to_frame(const BBox& b, int width, int height) noexcept;

struct FaceDetection {
  std::int64_t frame_index = 0;
  BBox bbox;
  double confidence = 1.0;
};

struct TrackPoint {
  double t;
  BBox box;
  friend bool operator==(const TrackPoint&, const TrackPoint&) = default;
};

struct PersonTrack {
  PersonId person_id = 0;
  std::vector<TrackPoint> boxes;  // strictly increasing t
  bool active = true;

  double last_seen() const { return boxes.empty() ? 0.0 : boxes.back().t; }
  friend bool operator==(const PersonTrack&, const PersonTrack&) = default;
};

Json to_json(const PersonTrack& track);
PersonTrack track_from_json(const Json& j);

/// Detector plugin. Implementations may throw; `detect` turns that into
/// ModalityUnavailable for the frame.
class FaceDetector {
 public:
  virtual ~FaceDetector() = default;
  virtual std::string name() const = 0;
  virtual std::vector<FaceDetection> find_faces(const FrameRef& frame) const = 0;
};

/// Model-free detector for synthetic footage: every 4-connected blob of the
/// marker colour is one face, its bounding box the detection. Confidence is
/// the fraction of the box outline covered by marker pixels.
class MarkerDetector final : public FaceDetector {
 public:
  static constexpr std::array<std::uint8_t, 3> kMarkerColor{255, 0, 255};

  explicit MarkerDetector(int min_side = 4) : min_side_(min_side) {}

  std::string name() const override { return "marker"; }
  std::vector<FaceDetection> find_faces(const FrameRef& frame) const override;

 private:
  int min_side_;
};

/// Runs the plugin, clamps boxes to the frame, drops degenerate ones and
/// sorts by descending confidence (ties: top-to-bottom, left-to-right).
std::vector<FaceDetection> detect(const FaceDetector& detector, const FrameRef& frame);

struct TrackerParams {
  double iou_threshold = 0.3;
  double ttl_s = 1.0;
};

struct Association {
  std::vector<PersonTrack> tracks;
  std::vector<PersonId> assignment;  // detection index -> person_id
};

/// Greedy best-first IoU matching of one frame's detections against the
/// active tracks. Tracks unseen for more than ttl_s are retired before
/// matching; unmatched detections open tracks with fresh ids.
Association associate(std::vector<PersonTrack> tracks, std::span<const FaceDetection> detections,
                      double t, const TrackerParams& params = {});

/// Stateful wrapper around `associate` for one session.
class Tracker {
 public:
  explicit Tracker(TrackerParams params = {}) : params_(params) {}

  std::vector<PersonId> update(std::span<const FaceDetection> detections, double t);
  const std::vector<PersonTrack>& tracks() const noexcept { return tracks_; }

 private:
  TrackerParams params_;
  std::vector<PersonTrack> tracks_;
};

struct PixelRect {
  int x;
  int y;
  int side;
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Square region for a crop: the clamped box expanded along its shorter side
/// around its centre, then shifted (and if needed shrunk) to fit the frame.
/// nullopt when the clamped box is degenerate.
std::optional<PixelRect> square_region(const BBox& bbox, int width, int height);

/// Bilinear resample of `region` to size x size, pixel-centre aligned, so a
/// region already at the target size is copied byte for byte.
Image resample_region(const Image& src, const PixelRect& region, int size);

/// Transient 224x224 crop; nullopt for a degenerate box.
std::optional<Image> crop_face(const FrameRef& frame, const BBox& bbox);

}  // namespace emolysis::tracking
