#include "emolysis/tracking.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <tuple>

namespace emolysis::tracking {

double iou(const BBox& a, const BBox& b) noexcept {
  const double x0 = std::max(a.x, b.x);
  const double y0 = std::max(a.y, b.y);
  const double x1 = std::min(a.x + a.w, b.x + b.w);
  const double y1 = std::min(a.y + a.h, b.y + b.h);
  const double inter = std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

BBox clamp_to_frame(const BBox& b, int width, int height) noexcept {
  const double x0 = std::clamp(b.x, 0.0, static_cast<double>(width));
  const double y0 = std::clamp(b.y, 0.0, static_cast<double>(height));
  const double x1 = std::clamp(b.x + b.w, 0.0, static_cast<double>(width));
  const double y1 = std::clamp(b.y + b.h, 0.0, static_cast<double>(height));
  return {x0, y0, x1 - x0, y1 - y0};
}

Json to_json(const PersonTrack& track) {
  Json boxes = Json::array();
  for (const auto& p : track.boxes) {
    boxes.push_back(Json{{"t", p.t}, {"x", p.box.x}, {"y", p.box.y}, {"w", p.box.w}, {"h", p.box.h}});
  }
  return Json{{"person_id", track.person_id}, {"boxes", std::move(boxes)}};
}

PersonTrack track_from_json(const Json& j) {
  try {
    PersonTrack track;
    track.person_id = j.at("person_id").get<PersonId>();
    if (track.person_id < 0) throw ValidationError("person_id must be non-negative");
    for (const auto& b : j.at("boxes")) {
      track.boxes.push_back({b.at("t").get<double>(),
                             {b.at("x").get<double>(), b.at("y").get<double>(),
                              b.at("w").get<double>(), b.at("h").get<double>()}});
      if (track.boxes.size() > 1 && !(track.boxes.back().t > track.boxes[track.boxes.size() - 2].t)) {
        throw ValidationError("track timestamps must increase");
      }
    }
    track.active = false;
    return track;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed track record: ") + e.what());
  }
}

std::vector<FaceDetection> MarkerDetector::find_faces(const FrameRef& frame) const {
  const Image& img = frame.pixels;
  const int w = img.width;
  const int h = img.height;
  auto is_marker = [&](int x, int y) {
    const std::uint8_t* p = img.at(x, y);
    return p[0] == kMarkerColor[0] && p[1] == kMarkerColor[1] && p[2] == kMarkerColor[2];
  };

  std::vector<std::uint8_t> seen(static_cast<std::size_t>(w) * h, 0);
  std::vector<std::pair<int, int>> stack;
  std::vector<FaceDetection> out;
  for (int y0 = 0; y0 < h; ++y0) {
    for (int x0 = 0; x0 < w; ++x0) {
      if (seen[static_cast<std::size_t>(y0) * w + x0] || !is_marker(x0, y0)) continue;
      int minx = x0, maxx = x0, miny = y0, maxy = y0;
      stack.assign(1, {x0, y0});
      seen[static_cast<std::size_t>(y0) * w + x0] = 1;
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        minx = std::min(minx, x);
        maxx = std::max(maxx, x);
        miny = std::min(miny, y);
        maxy = std::max(maxy, y);
        for (const auto& [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          auto& s = seen[static_cast<std::size_t>(ny) * w + nx];
          if (!s && is_marker(nx, ny)) {
            s = 1;
            stack.emplace_back(nx, ny);
          }
        }
      }
      const int bw = maxx - minx + 1;
      const int bh = maxy - miny + 1;
      if (bw < min_side_ || bh < min_side_) continue;

      int on = 0;
      int total = 0;
      for (int x = minx; x <= maxx; ++x) {
        on += is_marker(x, miny) + is_marker(x, maxy);
        total += 2;
      }
      for (int y = miny + 1; y < maxy; ++y) {
        on += is_marker(minx, y) + is_marker(maxx, y);
        total += 2;
      }
      out.push_back({frame.frame_index,
                     {static_cast<double>(minx), static_cast<double>(miny), static_cast<double>(bw),
                      static_cast<double>(bh)},
                     static_cast<double>(on) / total});
    }
  }
  return out;
}

std::vector<FaceDetection> detect(const FaceDetector& detector, const FrameRef& frame) {
  std::vector<FaceDetection> raw;
  try {
    raw = detector.find_faces(frame);
  } catch (const std::exception& e) {
    spdlog::warn("detector '{}' failed on frame {}: {}", detector.name(), frame.frame_index, e.what());
    throw ModalityUnavailable("face detector failed on frame " + std::to_string(frame.frame_index));
  }
  std::vector<FaceDetection> out;
  out.reserve(raw.size());
  for (auto d : raw) {
    d.frame_index = frame.frame_index;
    d.bbox = clamp_to_frame(d.bbox, frame.pixels.width, frame.pixels.height);
    if (!(d.bbox.w > 0 && d.bbox.h > 0)) continue;
    d.confidence = std::isfinite(d.confidence) ? std::clamp(d.confidence, 0.0, 1.0) : 0.0;
    out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const FaceDetection& a, const FaceDetection& b) {
    return std::tuple(-a.confidence, a.bbox.y, a.bbox.x) < std::tuple(-b.confidence, b.bbox.y, b.bbox.x);
  });
  return out;
}

Association associate(std::vector<PersonTrack> tracks, std::span<const FaceDetection> detections,
                      double t, const TrackerParams& params) {
  PersonId next_id = 0;
  for (auto& track : tracks) {
    next_id = std::max(next_id, track.person_id + 1);
    if (!track.boxes.empty() && !(t > track.last_seen())) {
      throw ValidationError("detections must be later than every track timestamp");
    }
    if (track.active && t - track.last_seen() > params.ttl_s) track.active = false;
  }

  struct Candidate {
    double iou;
    std::size_t track;
    std::size_t det;
  };
  std::vector<Candidate> candidates;
  for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
    if (!tracks[ti].active || tracks[ti].boxes.empty()) continue;
    for (std::size_t di = 0; di < detections.size(); ++di) {
      const double o = iou(tracks[ti].boxes.back().box, detections[di].bbox);
      if (o >= params.iou_threshold) candidates.push_back({o, ti, di});
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (tracks[a.track].person_id != tracks[b.track].person_id) {
      return tracks[a.track].person_id < tracks[b.track].person_id;
    }
    return a.det < b.det;
  });

  Association result;
  result.assignment.assign(detections.size(), -1);
  std::vector<bool> track_taken(tracks.size(), false);
  for (const auto& c : candidates) {
    if (track_taken[c.track] || result.assignment[c.det] >= 0) continue;
    track_taken[c.track] = true;
    result.assignment[c.det] = tracks[c.track].person_id;
    tracks[c.track].boxes.push_back({t, detections[c.det].bbox});
  }
  for (std::size_t di = 0; di < detections.size(); ++di) {
    if (result.assignment[di] >= 0) continue;
    PersonTrack fresh{.person_id = next_id++, .boxes = {{t, detections[di].bbox}}, .active = true};
    result.assignment[di] = fresh.person_id;
    tracks.push_back(std::move(fresh));
  }
  result.tracks = std::move(tracks);
  return result;
}

std::vector<PersonId> Tracker::update(std::span<const FaceDetection> detections, double t) {
  auto result = associate(std::move(tracks_), detections, t, params_);
  tracks_ = std::move(result.tracks);
  return std::move(result.assignment);
}

std::optional<PixelRect> square_region(const BBox& bbox, int width, int height) {
  const BBox c = clamp_to_frame(bbox, width, height);
  if (!(c.w >= 1.0 && c.h >= 1.0)) return std::nullopt;
  const double side = std::min({std::max(c.w, c.h), static_cast<double>(width),
                                static_cast<double>(height)});
  const double cx = c.x + c.w / 2;
  const double cy = c.y + c.h / 2;
  const int s = static_cast<int>(std::lround(side));
  const int x = std::clamp(static_cast<int>(std::lround(cx - side / 2)), 0, width - s);
  const int y = std::clamp(static_cast<int>(std::lround(cy - side / 2)), 0, height - s);
  return PixelRect{x, y, s};
}

Image resample_region(const Image& src, const PixelRect& region, int size) {
  Image out(size, size);
  const double scale = static_cast<double>(region.side) / size;
  const int max_x = region.x + region.side - 1;
  const int max_y = region.y + region.side - 1;
  for (int oy = 0; oy < size; ++oy) {
    const double sy = std::clamp(region.y + (oy + 0.5) * scale - 0.5, static_cast<double>(region.y),
                                 static_cast<double>(max_y));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, max_y);
    const double fy = sy - y0;
    for (int ox = 0; ox < size; ++ox) {
      const double sx = std::clamp(region.x + (ox + 0.5) * scale - 0.5,
                                   static_cast<double>(region.x), static_cast<double>(max_x));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, max_x);
      const double fx = sx - x0;
      std::uint8_t* o = out.at(ox, oy);
      for (int ch = 0; ch < 3; ++ch) {
        const double top = src.at(x0, y0)[ch] * (1 - fx) + src.at(x1, y0)[ch] * fx;
        const double bottom = src.at(x0, y1)[ch] * (1 - fx) + src.at(x1, y1)[ch] * fx;
        o[ch] = static_cast<std::uint8_t>(std::lround(top * (1 - fy) + bottom * fy));
      }
    }
  }
  return out;
}

std::optional<Image> crop_face(const FrameRef& frame, const BBox& bbox) {
  const auto region = square_region(bbox, frame.pixels.width, frame.pixels.height);
  if (!region) return std::nullopt;
  return resample_region(frame.pixels, *region, kCropSize);
}

}  // namespace emolysis::tracking
