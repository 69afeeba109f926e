#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "emolysis/core.hpp"
#include "emolysis/serialization.hpp"

namespace emolysis::labels {

inline constexpr double kRowSumTolerance = 1e-9;

struct LabelSpace {
  std::string id;
  std::vector<std::string> labels;

  Eigen::Index arity() const noexcept { return static_cast<Eigen::Index>(labels.size()); }
};

/// arity(source) x 9, row-stochastic: row i distributes native label i over
/// the common label space.
using MappingMatrix = Eigen::Matrix<double, Eigen::Dynamic, kNumLabels, Eigen::RowMajor>;

/// Native valence/arousal range, rescaled affinely onto [-1,1].
struct VaConvention {
  std::string id;
  double min;
  double max;
};

/// Pre-clamp mapping. Linear in `native`.
template <typename Derived>
EmotionVector map_scores_unclamped(const Eigen::MatrixBase<Derived>& native, const MappingMatrix& m) {
  return m.transpose() * native;
}

/// Sum, then clamp into [0,1]; no renormalisation.
template <typename Derived>
EmotionDistribution map_scores(const Eigen::MatrixBase<Derived>& native, const MappingMatrix& m) {
  return clamp_distribution(map_scores_unclamped(native, m));
}

/// Throws ValidationError naming the first offending row.
void validate_matrix(const LabelSpace& space, const MappingMatrix& m);

// Built at startup, read-only afterwards; concurrent const access is safe.
class LabelMapRegistry {
 public:
  void register_space(LabelSpace space, MappingMatrix matrix);
  void register_convention(VaConvention convention);

  bool contains(const std::string& space_id) const { return spaces_.count(space_id) != 0; }
  bool has_convention(const std::string& id) const { return conventions_.count(id) != 0; }
  const LabelSpace& space(const std::string& space_id) const;
  const MappingMatrix& matrix(const std::string& space_id) const;
  std::vector<std::string> space_ids() const;

  EmotionDistribution map_scores(const Eigen::Ref<const Eigen::VectorXd>& native,
                                 const std::string& space_id) const;
  EmotionVector map_scores_unclamped(const Eigen::Ref<const Eigen::VectorXd>& native,
                                     const std::string& space_id) const;
  VAPoint map_va(double valence, double arousal, const std::string& convention_id) const;

  Json to_json() const;
  static LabelMapRegistry from_json(const Json& j);
  static LabelMapRegistry load(const std::filesystem::path& path);

  /// plutchik9 (identity), affectnet8 and mosei6, plus the `symmetric_unit`
  /// ([-1,1]) and `sam9` ([1,9]) valence/arousal conventions.
  static LabelMapRegistry builtin();

 private:
  struct Entry {
    LabelSpace space;
    MappingMatrix matrix;
  };
  std::map<std::string, Entry> spaces_;
  std::vector<std::string> order_;
  std::map<std::string, VaConvention> conventions_;
  std::vector<std::string> convention_order_;
};

inline const std::string kPlutchik9 = "plutchik9";
inline const std::string kAffectNet8 = "affectnet8";
inline const std::string kMosei6 = "mosei6";
inline const std::string kSymmetricUnit = "symmetric_unit";
inline const std::string kSam9 = "sam9";

}  // namespace emolysis::labels
