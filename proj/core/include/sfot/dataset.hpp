#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sfot/geometry.hpp"

namespace sfot {

enum class AbsenceKind { none = 0, out_of_view = 1, full_occlusion = 2 };

struct FrameAnnotation {
  std::optional<BBox> box;
  AbsenceKind absence_kind = AbsenceKind::none;

  bool absent() const { return !box.has_value(); }

  static FrameAnnotation present(const BBox& b) { return {b, AbsenceKind::none}; }
  static FrameAnnotation missing(AbsenceKind kind) { return {std::nullopt, kind}; }
};

/// The twelve per-sequence challenge labels, in canonical order.
enum class Attribute : std::size_t { IV, DEF, MB, ROT, BC, SV, OV, LR, ARC, POC, FOC, FM };
inline constexpr std::size_t kNumAttributes = 12;

std::string_view attribute_name(Attribute a);
std::optional<Attribute> parse_attribute(std::string_view name);
const std::array<Attribute, kNumAttributes>& all_attributes();

class AttributeSet {
 public:
  AttributeSet() = default;
  AttributeSet(std::initializer_list<Attribute> attrs);

  void insert(Attribute a) { bits_.set(static_cast<std::size_t>(a)); }
  bool contains(Attribute a) const { return bits_.test(static_cast<std::size_t>(a)); }
  bool empty() const { return bits_.none(); }
  std::size_t size() const { return bits_.count(); }
  std::vector<Attribute> to_vector() const;

  AttributeSet operator|(const AttributeSet& o) const;
  friend bool operator==(const AttributeSet&, const AttributeSet&) = default;

 private:
  std::bitset<kNumAttributes> bits_;
};

struct Sequence {
  std::string name;
  std::string category;
  double frame_rate = 30.0;
  std::vector<FrameAnnotation> frames;
  AttributeSet manual_attributes;

  std::size_t size() const { return frames.size(); }
  /// Checks the record invariants; throws InputError.
  void validate() const;
};

struct DatasetStats {
  double avg_target_size = 0.0;     // px^2, over present frames
  double avg_relative_speed = 0.0;  // over consecutive present-present pairs
  std::size_t num_sequences = 0;
  std::size_t total_frames = 0;
  std::size_t present_frames = 0;
  std::size_t speed_pairs = 0;
  std::size_t min_frames = 0;
  std::size_t max_frames = 0;
  double avg_frames = 0.0;
};

/// counts[a][b] = number of sequences carrying both a and b.
struct AttributeMatrix {
  std::array<std::array<std::size_t, kNumAttributes>, kNumAttributes> counts{};

  std::size_t at(Attribute a, Attribute b) const {
    return counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
  }
};

/// Documentation constants for the real small/fast-object benchmark; they
/// require the original videos and are not reproduced by this toolkit.
namespace reference {
inline constexpr double kAvgTargetSizePx2 = 0.51e3;
inline constexpr double kAvgRelativeSpeed = 58.28e-1;
}  // namespace reference

// Sequence bundle I/O.
Sequence load_sequence(const std::filesystem::path& dir);
void save_sequence(const Sequence& seq, const std::filesystem::path& dir);
/// Loads every subdirectory of root that holds a meta.json, sorted by name.
std::vector<Sequence> load_dataset(const std::filesystem::path& root);

// Tracker results: one "x,y,w,h" line per frame.
std::vector<BBox> load_results(const std::filesystem::path& path);
std::vector<BBox> load_results(const std::filesystem::path& path, std::size_t expected_frames);
void save_results(const std::filesystem::path& path, const std::vector<BBox>& boxes);
std::string format_results(const std::vector<BBox>& boxes);

/// SV, LR, ARC and FM from the ground-truth geometry.
AttributeSet compute_auto_attributes(const Sequence& seq);
/// Manual labels merged with the geometric ones.
AttributeSet resolved_attributes(const Sequence& seq);

DatasetStats dataset_stats(const std::vector<Sequence>& sequences);
/// Mean sequence length per category.
std::map<std::string, double> category_lengths(const std::vector<Sequence>& sequences);

AttributeMatrix attribute_cooccurrence(const std::vector<AttributeSet>& per_sequence);
AttributeMatrix attribute_cooccurrence(const std::vector<Sequence>& sequences);

// Thresholds of the geometric attribute rules.
namespace attribute_rules {
inline constexpr double kRatioLow = 0.5;
inline constexpr double kRatioHigh = 2.0;
inline constexpr double kLowResolutionArea = 900.0;
inline constexpr double kFastMotionFraction = 0.5;
}  // namespace attribute_rules

}  // namespace sfot
