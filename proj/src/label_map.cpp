#include "emolysis/label_map.hpp"

#include <cmath>
#include <set>

#include "emolysis/media.hpp"

namespace emolysis::labels {

void validate_matrix(const LabelSpace& space, const MappingMatrix& m) {
  if (space.id.empty()) throw ValidationError("label space id must not be empty");
  if (space.arity() < 1) throw ValidationError("label space '" + space.id + "' has no labels");
  if (std::set<std::string>(space.labels.begin(), space.labels.end()).size() != space.labels.size()) {
    throw ValidationError("label space '" + space.id + "' has duplicate labels");
  }
  if (m.rows() != space.arity()) {
    throw ValidationError("matrix for '" + space.id + "' has " + std::to_string(m.rows()) +
                          " rows, expected " + std::to_string(space.arity()));
  }
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!m.row(r).allFinite() || (m.row(r).array() < 0.0).any()) {
      throw ValidationError("row " + std::to_string(r) + " (" + space.labels[r] + ") of '" + space.id +
                            "' has a negative or non-finite entry");
    }
    const double sum = m.row(r).sum();
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      throw ValidationError("row " + std::to_string(r) + " (" + space.labels[r] + ") of '" + space.id +
                            "' sums to " + std::to_string(sum) + ", expected 1");
    }
  }
}

void LabelMapRegistry::register_space(LabelSpace space, MappingMatrix matrix) {
  validate_matrix(space, matrix);
  if (contains(space.id)) throw RegistryConflict("label space '" + space.id + "' already registered");
  order_.push_back(space.id);
  const std::string id = space.id;
  spaces_.emplace(id, Entry{std::move(space), std::move(matrix)});
}

void LabelMapRegistry::register_convention(VaConvention convention) {
  if (!std::isfinite(convention.min) || !std::isfinite(convention.max) ||
      !(convention.min < convention.max)) {
    throw ValidationError("valence/arousal convention '" + convention.id + "' needs min < max");
  }
  if (has_convention(convention.id)) {
    throw RegistryConflict("convention '" + convention.id + "' already registered");
  }
  convention_order_.push_back(convention.id);
  conventions_.emplace(convention.id, std::move(convention));
}

const LabelSpace& LabelMapRegistry::space(const std::string& space_id) const {
  const auto it = spaces_.find(space_id);
  if (it == spaces_.end()) throw RegistryError("unknown label space '" + space_id + "'");
  return it->second.space;
}

const MappingMatrix& LabelMapRegistry::matrix(const std::string& space_id) const {
  const auto it = spaces_.find(space_id);
  if (it == spaces_.end()) throw RegistryError("unknown label space '" + space_id + "'");
  return it->second.matrix;
}

std::vector<std::string> LabelMapRegistry::space_ids() const { return order_; }

EmotionVector LabelMapRegistry::map_scores_unclamped(const Eigen::Ref<const Eigen::VectorXd>& native,
                                                     const std::string& space_id) const {
  const auto& m = matrix(space_id);
  if (native.size() != m.rows()) {
    throw ValidationError("score vector has " + std::to_string(native.size()) + " entries, '" +
                          space_id + "' expects " + std::to_string(m.rows()));
  }
  return labels::map_scores_unclamped(native, m);
}

EmotionDistribution LabelMapRegistry::map_scores(const Eigen::Ref<const Eigen::VectorXd>& native,
                                                 const std::string& space_id) const {
  return clamp_distribution(map_scores_unclamped(native, space_id));
}

VAPoint LabelMapRegistry::map_va(double valence, double arousal, const std::string& convention_id) const {
  const auto it = conventions_.find(convention_id);
  if (it == conventions_.end()) {
    throw RegistryError("unknown valence/arousal convention '" + convention_id + "'");
  }
  const auto& c = it->second;
  // Centre and half-range keep the symmetric convention an exact identity.
  const double mid = (c.min + c.max) / 2.0;
  const double half = (c.max - c.min) / 2.0;
  auto rescale = [&](double x) { return (x - mid) / half; };
  return VAPoint(rescale(valence), rescale(arousal));
}

Json LabelMapRegistry::to_json() const {
  Json spaces = Json::array();
  for (const auto& id : order_) {
    const auto& e = spaces_.at(id);
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < e.matrix.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index c = 0; c < kNumLabels; ++c) row.push_back(e.matrix(r, c));
      rows.push_back(std::move(row));
    }
    spaces.push_back(Json{{"id", id}, {"labels", e.space.labels}, {"matrix", std::move(rows)}});
  }
  Json conventions = Json::array();
  for (const auto& id : convention_order_) {
    const auto& c = conventions_.at(id);
    conventions.push_back(Json{{"id", c.id}, {"min", c.min}, {"max", c.max}});
  }
  return Json{{"version", 1},
              {"target", kLabelNames},
              {"spaces", std::move(spaces)},
              {"va_conventions", std::move(conventions)}};
}

LabelMapRegistry LabelMapRegistry::from_json(const Json& j) {
  LabelMapRegistry reg;
  try {
    if (j.at("version").get<int>() != 1) throw ValidationError("unsupported label map version");
    for (const auto& s : j.at("spaces")) {
      LabelSpace space{s.at("id").get<std::string>(), s.at("labels").get<std::vector<std::string>>()};
      const auto& rows = s.at("matrix");
      MappingMatrix m(static_cast<Eigen::Index>(rows.size()), kNumLabels);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto row = rows[r].get<std::vector<double>>();
        if (row.size() != kNumLabels) {
          throw ValidationError("row " + std::to_string(r) + " of '" + space.id + "' needs 9 columns");
        }
        for (int c = 0; c < kNumLabels; ++c) m(static_cast<Eigen::Index>(r), c) = row[c];
      }
      reg.register_space(std::move(space), std::move(m));
    }
    for (const auto& c : j.at("va_conventions")) {
      reg.register_convention({c.at("id").get<std::string>(), c.at("min").get<double>(),
                               c.at("max").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed label map file: ") + e.what());
  }
  return reg;
}

LabelMapRegistry LabelMapRegistry::load(const std::filesystem::path& path) {
  return from_json(parse_json(read_file(path)));
}

LabelMapRegistry LabelMapRegistry::builtin() {
  using L = EmotionLabel;
  auto one_hot_rows = [](const std::vector<std::vector<std::pair<L, double>>>& rows) {
    MappingMatrix m = MappingMatrix::Zero(static_cast<Eigen::Index>(rows.size()), kNumLabels);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (const auto& [label, w] : rows[r]) m(static_cast<Eigen::Index>(r), static_cast<int>(label)) = w;
    }
    return m;
  };

  LabelMapRegistry reg;
  LabelSpace plutchik{kPlutchik9, {kLabelNames.begin(), kLabelNames.end()}};
  reg.register_space(plutchik, MappingMatrix::Identity(kNumLabels, kNumLabels));

  reg.register_space({kAffectNet8,
                      {"neutral", "happiness", "sadness", "surprise", "fear", "disgust", "anger",
                       "contempt"}},
                     one_hot_rows({{{L::none, 1.0}},
                                   {{L::joy, 1.0}},
                                   {{L::sadness, 1.0}},
                                   {{L::surprise, 1.0}},
                                   {{L::fear, 1.0}},
                                   {{L::disgust, 1.0}},
                                   {{L::anger, 1.0}},
                                   {{L::anger, 0.5}, {L::disgust, 0.5}}}));

  reg.register_space({kMosei6, {"happiness", "sadness", "anger", "fear", "disgust", "surprise"}},
                     one_hot_rows({{{L::joy, 1.0}},
                                   {{L::sadness, 1.0}},
                                   {{L::anger, 1.0}},
                                   {{L::fear, 1.0}},
                                   {{L::disgust, 1.0}},
                                   {{L::surprise, 1.0}}}));

  reg.register_convention({kSymmetricUnit, -1.0, 1.0});
  reg.register_convention({kSam9, 1.0, 9.0});
  return reg;
}

}  // namespace emolysis::labels
