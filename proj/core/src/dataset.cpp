#include "sfot/dataset.hpp"

#include <algorithm>
#include <limits>

#include <nlohmann/json.hpp>

#include "sfot/error.hpp"
#include "sfot/text_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sfot {

namespace {

constexpr std::array<std::string_view, kNumAttributes> kAttributeNames = {
    "IV", "DEF", "MB", "ROT", "BC", "SV", "OV", "LR", "ARC", "POC", "FOC", "FM"};

bool ratio_outside(double r) {
  return r < attribute_rules::kRatioLow || r > attribute_rules::kRatioHigh;
}

BBox parse_box_line(std::string_view line, const std::string& where) {
  const auto fields = text::split(line, ',');
  if (fields.size() != 4) throw InputError(where + ": expected 4 comma-separated values");
  try {
    return BBox::make(text::parse_double(fields[0]), text::parse_double(fields[1]),
                      text::parse_double(fields[2]), text::parse_double(fields[3]));
  } catch (const InputError& e) {
    throw InputError(where + ": " + e.what());
  }
}

std::string format_box(const BBox& b) {
  return text::format_double(b.x) + "," + text::format_double(b.y) + "," +
         text::format_double(b.w) + "," + text::format_double(b.h);
}

}  // namespace

std::string_view attribute_name(Attribute a) { return kAttributeNames[static_cast<std::size_t>(a)]; }

std::optional<Attribute> parse_attribute(std::string_view name) {
  for (std::size_t i = 0; i < kNumAttributes; ++i) {
    if (kAttributeNames[i] == name) return static_cast<Attribute>(i);
  }
  return std::nullopt;
}

const std::array<Attribute, kNumAttributes>& all_attributes() {
  static const auto attrs = [] {
    std::array<Attribute, kNumAttributes> a{};
    for (std::size_t i = 0; i < kNumAttributes; ++i) a[i] = static_cast<Attribute>(i);
    return a;
  }();
  return attrs;
}

AttributeSet::AttributeSet(std::initializer_list<Attribute> attrs) {
  for (auto a : attrs) insert(a);
}

std::vector<Attribute> AttributeSet::to_vector() const {
  std::vector<Attribute> out;
  for (auto a : all_attributes()) {
    if (contains(a)) out.push_back(a);
  }
  return out;
}

AttributeSet AttributeSet::operator|(const AttributeSet& o) const {
  AttributeSet r;
  r.bits_ = bits_ | o.bits_;
  return r;
}

void Sequence::validate() const {
  if (frames.empty()) throw InputError(name + ": sequence has no frames");
  if (frames.front().absent()) throw InputError(name + ": first frame must be present to initialize");
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const auto& f = frames[t];
    if (f.box && f.absence_kind != AbsenceKind::none) {
      throw InputError(name + ": frame " + std::to_string(t + 1) + " has a box but an absence label");
    }
    if (f.box && !is_valid(*f.box)) {
      throw InputError(name + ": frame " + std::to_string(t + 1) + " has an invalid box");
    }
  }
  if (!(frame_rate > 0.0)) throw InputError(name + ": frame_rate must be positive");
}

Sequence load_sequence(const fs::path& dir) {
  for (const char* f : {"meta.json", "groundtruth.txt", "absence.txt"}) {
    if (!fs::is_regular_file(dir / f)) throw InputError(dir.string() + ": missing " + f);
  }

  Sequence seq;
  try {
    const json meta = json::parse(text::read_file(dir / "meta.json"));
    seq.name = meta.at("name").get<std::string>();
    seq.category = meta.at("category").get<std::string>();
    seq.frame_rate = meta.at("frame_rate").get<double>();
    for (const auto& a : meta.at("manual_attributes")) {
      const auto attr = parse_attribute(a.get<std::string>());
      if (!attr) throw InputError("unknown attribute '" + a.get<std::string>() + "'");
      seq.manual_attributes.insert(*attr);
    }
  } catch (const json::exception& e) {
    throw InputError((dir / "meta.json").string() + ": " + e.what());
  }

  const auto gt_lines = text::read_lines(dir / "groundtruth.txt");
  const auto absence_lines = text::read_lines(dir / "absence.txt");
  if (gt_lines.size() != absence_lines.size()) {
    throw InputError(dir.string() + ": groundtruth.txt has " + std::to_string(gt_lines.size()) +
                     " lines but absence.txt has " + std::to_string(absence_lines.size()));
  }

  seq.frames.reserve(gt_lines.size());
  for (std::size_t t = 0; t < gt_lines.size(); ++t) {
    const std::string where = dir.string() + " line " + std::to_string(t + 1);
    const auto kind_code = text::parse_int(absence_lines[t]);
    if (kind_code < 0 || kind_code > 2) throw InputError(where + ": absence code must be 0, 1 or 2");
    const auto kind = static_cast<AbsenceKind>(kind_code);
    const auto gt = text::trim(gt_lines[t]);
    if (gt == "absent") {
      seq.frames.push_back(FrameAnnotation::missing(kind));
    } else {
      if (kind != AbsenceKind::none) throw InputError(where + ": box given for a frame flagged absent");
      seq.frames.push_back(FrameAnnotation::present(parse_box_line(gt, where)));
    }
  }
  seq.validate();
  return seq;
}

void save_sequence(const Sequence& seq, const fs::path& dir) {
  seq.validate();
  json meta;
  meta["name"] = seq.name;
  meta["category"] = seq.category;
  meta["frame_rate"] = seq.frame_rate;
  meta["manual_attributes"] = json::array();
  for (auto a : seq.manual_attributes.to_vector()) meta["manual_attributes"].push_back(attribute_name(a));

  std::string gt;
  std::string absence;
  for (const auto& f : seq.frames) {
    gt += f.box ? format_box(*f.box) : std::string("absent");
    gt += '\n';
    absence += std::to_string(static_cast<int>(f.absence_kind));
    absence += '\n';
  }
  fs::create_directories(dir);
  text::write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
  text::write_file_atomic(dir / "groundtruth.txt", gt);
  text::write_file_atomic(dir / "absence.txt", absence);
}

std::vector<Sequence> load_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError(root.string() + ": not a directory");
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory() && fs::is_regular_file(entry.path() / "meta.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<Sequence> out;
  out.reserve(dirs.size());
  for (const auto& d : dirs) out.push_back(load_sequence(d));
  if (out.empty()) throw InputError(root.string() + ": no sequence bundles found");
  return out;
}

std::vector<BBox> load_results(const fs::path& path) {
  const auto lines = text::read_lines(path);
  std::vector<BBox> boxes;
  boxes.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    boxes.push_back(parse_box_line(lines[i], path.string() + " line " + std::to_string(i + 1)));
  }
  return boxes;
}

std::vector<BBox> load_results(const fs::path& path, std::size_t expected_frames) {
  auto boxes = load_results(path);
  if (boxes.size() != expected_frames) {
    throw InputError(path.string() + ": " + std::to_string(boxes.size()) + " result lines for a sequence of " +
                     std::to_string(expected_frames) + " frames");
  }
  return boxes;
}

std::string format_results(const std::vector<BBox>& boxes) {
  std::string out;
  for (const auto& b : boxes) {
    out += format_box(b);
    out += '\n';
  }
  return out;
}

void save_results(const fs::path& path, const std::vector<BBox>& boxes) {
  text::write_file_atomic(path, format_results(boxes));
}

AttributeSet compute_auto_attributes(const Sequence& seq) {
  using namespace attribute_rules;
  AttributeSet attrs;
  const BBox* first = nullptr;
  const BBox* prev = nullptr;
  for (const auto& f : seq.frames) {
    if (!f.box) {
      prev = nullptr;  // absence breaks the consecutive pair
      continue;
    }
    const BBox& b = *f.box;
    if (!first) first = &b;
    if (ratio_outside(b.area() / first->area())) attrs.insert(Attribute::SV);
    if (b.area() < kLowResolutionArea) attrs.insert(Attribute::LR);
    const double aspect_ratio = (b.w / b.h) / (first->w / first->h);
    if (ratio_outside(aspect_ratio)) attrs.insert(Attribute::ARC);
    if (prev && distance(center(*prev), center(b)) >= kFastMotionFraction * std::sqrt(prev->area())) {
      attrs.insert(Attribute::FM);
    }
    prev = &b;
  }
  return attrs;
}

AttributeSet resolved_attributes(const Sequence& seq) { return seq.manual_attributes | compute_auto_attributes(seq); }

DatasetStats dataset_stats(const std::vector<Sequence>& sequences) {
  if (sequences.empty()) throw InputError("dataset_stats: empty dataset");
  DatasetStats s;
  s.num_sequences = sequences.size();
  s.min_frames = std::numeric_limits<std::size_t>::max();
  double area_sum = 0.0;
  double speed_sum = 0.0;
  for (const auto& seq : sequences) {
    s.total_frames += seq.size();
    s.min_frames = std::min(s.min_frames, seq.size());
    s.max_frames = std::max(s.max_frames, seq.size());
    const BBox* prev = nullptr;
    for (const auto& f : seq.frames) {
      if (!f.box) {
        prev = nullptr;
        continue;
      }
      area_sum += f.box->area();
      ++s.present_frames;
      if (prev) {
        speed_sum += relative_speed(*prev, *f.box);
        ++s.speed_pairs;
      }
      prev = &*f.box;
    }
  }
  s.avg_frames = static_cast<double>(s.total_frames) / static_cast<double>(s.num_sequences);
  s.avg_target_size = s.present_frames ? area_sum / static_cast<double>(s.present_frames) : 0.0;
  s.avg_relative_speed = s.speed_pairs ? speed_sum / static_cast<double>(s.speed_pairs) : 0.0;
  return s;
}

std::map<std::string, double> category_lengths(const std::vector<Sequence>& sequences) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> acc;
  for (const auto& seq : sequences) {
    auto& [frames, count] = acc[seq.category];
    frames += seq.size();
    ++count;
  }
  std::map<std::string, double> out;
  for (const auto& [cat, fc] : acc) out[cat] = static_cast<double>(fc.first) / static_cast<double>(fc.second);
  return out;
}

AttributeMatrix attribute_cooccurrence(const std::vector<AttributeSet>& per_sequence) {
  AttributeMatrix m;
  for (const auto& attrs : per_sequence) {
    const auto present = attrs.to_vector();
    for (auto a : present) {
      for (auto b : present) ++m.counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
    }
  }
  return m;
}

AttributeMatrix attribute_cooccurrence(const std::vector<Sequence>& sequences) {
  std::vector<AttributeSet> sets;
  sets.reserve(sequences.size());
  for (const auto& s : sequences) sets.push_back(resolved_attributes(s));
  return attribute_cooccurrence(sets);
}

}  // namespace sfot
