#include "sfot/sim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "sfot/error.hpp"
#include "sfot/seeding.hpp"
#include "sfot/text_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sfot {

// ---------------------------------------------------------------------------
// ScoreMap

ScoreMap::ScoreMap(std::size_t w, std::size_t h, double s) : width(w), height(h), stride(s), values(w * h, 0.0) {}

Point ScoreMap::cell_center(std::size_t r, std::size_t c) const {
  return {(static_cast<double>(c) + 0.5) * stride, (static_cast<double>(r) + 0.5) * stride};
}

void ScoreMap::validate() const {
  if (!(stride > 0.0) || !std::isfinite(stride)) throw InputError("score map stride must be positive");
  if (values.size() != width * height) throw InputError("score map size does not match its dimensions");
  for (double v : values) {
    if (!std::isfinite(v)) throw InputError("score map holds a non-finite value");
  }
}

// ---------------------------------------------------------------------------
// Generation

void SimConfig::validate() const {
  if (num_frames < 1) throw InputError("sim: num_frames must be at least 1");
  if (!(speed >= 0.0)) throw InputError("sim: speed must be non-negative");
  if (!(target_size >= 2.0)) throw InputError("sim: target_size must be at least 2");
  if (!(image_size >= 2.0 * target_size)) throw InputError("sim: image_size must be at least twice target_size");
  if (high_feature_cluster_count < 1) throw InputError("sim: high_feature_cluster_count must be at least 1");
  if (feature_width < 1) throw InputError("sim: feature_width must be positive");
  if (!(stride > 0.0)) throw InputError("sim: stride must be positive");
  for (double p : {distractor_spawn_rate, occlusion_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("sim: probabilities must lie in [0, 1]");
  }
  for (double s : {noise_sigma, feature_noise, cluster_spread, direction_jitter}) {
    if (!(s >= 0.0) || !std::isfinite(s)) throw InputError("sim: noise levels must be non-negative");
  }
  if (!(frame_rate > 0.0)) throw InputError("sim: frame_rate must be positive");
}

namespace {

using Rng = std::mt19937_64;

std::vector<double> unit_vector(std::size_t d, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> v(d);
  double norm = 0.0;
  while (norm < 1e-12) {
    norm = 0.0;
    for (auto& x : v) {
      x = n(rng);
      norm += x * x;
    }
  }
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<double> perturbed(const std::vector<double>& base, double sigma, Rng& rng) {
  std::vector<double> v = base;
  if (sigma > 0.0) {
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& x : v) x += n(rng);
  }
  return v;
}

struct SimObject {
  long long id = 0;
  Point center;
  double heading = 0.0;
  bool active = true;
  std::vector<double> latent_low;
  std::vector<double> latent_high;
};

class Simulator {
 public:
  explicit Simulator(const SimConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    for (std::size_t k = 0; k < cfg.high_feature_cluster_count; ++k) {
      clusters_.push_back(unit_vector(cfg.feature_width, rng_));
    }
  }

  SimObject spawn() {
    SimObject o;
    o.id = next_id_++;
    const double half = cfg_.target_size / 2.0;
    std::uniform_real_distribution<double> pos(half, cfg_.image_size - half);
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    o.center = {pos(rng_), pos(rng_)};
    o.heading = angle(rng_);
    o.latent_low = unit_vector(cfg_.feature_width, rng_);
    std::uniform_int_distribution<std::size_t> cluster(0, clusters_.size() - 1);
    o.latent_high = perturbed(clusters_[cluster(rng_)], cfg_.cluster_spread, rng_);
    return o;
  }

  // Heading jitter, constant-magnitude step, reflection at the borders so the
  // whole box stays inside the image.
  void step(SimObject& o) {
    if (cfg_.direction_jitter > 0.0) {
      std::normal_distribution<double> jitter(0.0, cfg_.direction_jitter);
      o.heading += jitter(rng_);
    }
    const double dist = cfg_.speed * cfg_.target_size;
    o.center.x += dist * std::cos(o.heading);
    o.center.y += dist * std::sin(o.heading);
    const double lo = cfg_.target_size / 2.0;
    const double hi = cfg_.image_size - lo;
    bool flip_x = false;
    bool flip_y = false;
    for (int guard = 0; guard < 8; ++guard) {
      if (o.center.x < lo) {
        o.center.x = 2.0 * lo - o.center.x;
        flip_x = !flip_x;
      } else if (o.center.x > hi) {
        o.center.x = 2.0 * hi - o.center.x;
        flip_x = !flip_x;
      } else if (o.center.y < lo) {
        o.center.y = 2.0 * lo - o.center.y;
        flip_y = !flip_y;
      } else if (o.center.y > hi) {
        o.center.y = 2.0 * hi - o.center.y;
        flip_y = !flip_y;
      } else {
        break;
      }
    }
    o.center.x = std::clamp(o.center.x, lo, hi);
    o.center.y = std::clamp(o.center.y, lo, hi);
    if (flip_x) o.heading = std::numbers::pi - o.heading;
    if (flip_y) o.heading = -o.heading;
  }

  ScoreMap render(const std::vector<const SimObject*>& visible) {
    const auto cells = static_cast<std::size_t>(std::ceil(cfg_.image_size / cfg_.stride));
    ScoreMap map(cells, cells, cfg_.stride);
    const double sigma = cfg_.target_size / 2.0;
    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    std::normal_distribution<double> noise(0.0, cfg_.noise_sigma > 0.0 ? cfg_.noise_sigma : 1.0);
    for (std::size_t r = 0; r < cells; ++r) {
      for (std::size_t c = 0; c < cells; ++c) {
        const Point p = map.cell_center(r, c);
        double v = 0.0;
        for (const auto* o : visible) {
          const double dx = p.x - o->center.x;
          const double dy = p.y - o->center.y;
          v += std::exp(-(dx * dx + dy * dy) * inv_two_var);
        }
        if (cfg_.noise_sigma > 0.0) v += noise(rng_);
        // Stored at the on-disk precision so in-memory and loaded runs agree.
        map.at(r, c) = static_cast<double>(static_cast<float>(v));
      }
    }
    return map;
  }

  FeatureRecord observe(const SimObject& o, const ScoreMap& map) {
    FeatureRecord rec;
    rec.pos = o.center;
    rec.object_id = o.id;
    const auto c = std::min(static_cast<std::size_t>(o.center.x / map.stride), map.width - 1);
    const auto r = std::min(static_cast<std::size_t>(o.center.y / map.stride), map.height - 1);
    rec.score = std::clamp(map.at(r, c), 0.0, 1.0);
    rec.feat_low = perturbed(o.latent_low, cfg_.feature_noise, rng_);
    rec.feat_high = perturbed(o.latent_high, cfg_.feature_noise, rng_);
    return rec;
  }

  Rng& rng() { return rng_; }

 private:
  const SimConfig& cfg_;
  Rng rng_;
  std::vector<std::vector<double>> clusters_;
  long long next_id_ = 0;
};

}  // namespace

SimSequence gen_sequence(const SimConfig& cfg, const std::string& name) {
  cfg.validate();
  Simulator sim(cfg);
  auto& rng = sim.rng();
  std::bernoulli_distribution occlusion_start(cfg.occlusion_probability);
  std::bernoulli_distribution churn(cfg.distractor_spawn_rate);
  std::uniform_int_distribution<std::size_t> occlusion_len(1, std::max<std::size_t>(1, cfg.max_occlusion_length));

  SimSequence seq;
  seq.config = cfg;
  seq.image_width = cfg.image_size;
  seq.image_height = cfg.image_size;
  seq.groundtruth.name = name;
  seq.groundtruth.category = cfg.category;
  seq.groundtruth.frame_rate = cfg.frame_rate;

  SimObject target = sim.spawn();
  std::vector<SimObject> distractors;
  for (std::size_t k = 0; k < cfg.num_distractors; ++k) distractors.push_back(sim.spawn());

  std::size_t occluded_for = 0;
  bool any_occlusion = false;
  for (std::size_t t = 0; t < cfg.num_frames; ++t) {
    if (t > 0) {
      sim.step(target);
      if (occluded_for > 0) --occluded_for;
      if (occluded_for == 0 && occlusion_start(rng)) {
        occluded_for = occlusion_len(rng);
        any_occlusion = true;
      }
      for (auto& d : distractors) {
        if (d.active) {
          sim.step(d);
          if (churn(rng)) d.active = false;
        } else if (churn(rng)) {
          d = sim.spawn();
        }
      }
    }

    std::vector<const SimObject*> visible;
    const bool target_visible = occluded_for == 0;
    if (target_visible) visible.push_back(&target);
    for (const auto& d : distractors) {
      if (d.active) visible.push_back(&d);
    }
    seq.score_maps.push_back(sim.render(visible));

    FrameFeatures records;
    for (const auto* o : visible) records.push_back(sim.observe(*o, seq.score_maps.back()));
    seq.features.push_back(std::move(records));

    if (target_visible) {
      seq.groundtruth.frames.push_back(
          FrameAnnotation::present(BBox::from_center(target.center, cfg.target_size, cfg.target_size)));
    } else {
      seq.groundtruth.frames.push_back(FrameAnnotation::missing(AbsenceKind::full_occlusion));
    }
    seq.scale_factors.push_back(1.0);
  }
  if (any_occlusion) seq.groundtruth.manual_attributes.insert(Attribute::FOC);
  if (cfg.num_distractors > 0) seq.groundtruth.manual_attributes.insert(Attribute::BC);
  seq.groundtruth.validate();
  return seq;
}

MatchSet correspondences(const SimSequence& seq, std::size_t t) {
  if (t < 1 || t >= seq.features.size()) {
    throw InputError("correspondences: frame index " + std::to_string(t) + " out of range");
  }
  const auto ids = [](const FrameFeatures& f) {
    std::vector<long long> out;
    for (const auto& r : f) out.push_back(r.object_id);
    return out;
  };
  return match_by_identity(ids(seq.features[t - 1]), ids(seq.features[t]));
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize_score_maps(const std::vector<ScoreMap>& maps) {
  if (maps.empty()) throw InputError("serialize_score_maps: no frames");
  const auto& first = maps.front();
  std::string out = std::to_string(first.width) + " " + std::to_string(first.height) + " " +
                    text::format_double(first.stride) + " " + std::to_string(maps.size()) + "\n";
  out.reserve(out.size() + maps.size() * first.values.size() * 4);
  for (const auto& m : maps) {
    if (m.width != first.width || m.height != first.height || m.stride != first.stride) {
      throw InputError("serialize_score_maps: frames differ in geometry");
    }
    for (double v : m.values) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>(bits & 0xffu));
        bits >>= 8;
      }
    }
  }
  return out;
}

std::vector<ScoreMap> parse_score_maps(const std::string& bytes) {
  const auto nl = bytes.find('\n');
  if (nl == std::string::npos) throw InputError("scoremaps.bin: missing header line");
  const auto fields = text::split(text::trim(std::string_view(bytes).substr(0, nl)), ' ');
  if (fields.size() != 4) throw InputError("scoremaps.bin: header must be 'width height stride frames'");
  const auto width = text::parse_int(fields[0]);
  const auto height = text::parse_int(fields[1]);
  const double stride = text::parse_double(fields[2]);
  const auto frames = text::parse_int(fields[3]);
  if (width <= 0 || height <= 0 || frames <= 0) throw InputError("scoremaps.bin: non-positive dimension");
  const auto cells = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() - nl - 1 != cells * static_cast<std::size_t>(frames) * 4) {
    throw InputError("scoremaps.bin: payload size does not match header");
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + nl + 1);
  std::vector<ScoreMap> maps;
  maps.reserve(static_cast<std::size_t>(frames));
  for (long long f = 0; f < frames; ++f) {
    ScoreMap m(static_cast<std::size_t>(width), static_cast<std::size_t>(height), stride);
    for (auto& v : m.values) {
      std::uint32_t bits = 0;
      for (int i = 3; i >= 0; --i) bits = (bits << 8) | p[i];
      p += 4;
      v = static_cast<double>(std::bit_cast<float>(bits));
    }
    m.validate();
    maps.push_back(std::move(m));
  }
  return maps;
}

std::string serialize_features(const std::vector<FrameFeatures>& frames) {
  std::string out;
  for (const auto& f : frames) {
    json line = json::array();
    for (const auto& r : f) {
      line.push_back({{"pos", {r.pos.x, r.pos.y}},
                      {"score", r.score},
                      {"feat_low", r.feat_low},
                      {"feat_high", r.feat_high},
                      {"object_id", r.object_id}});
    }
    out += line.dump();
    out += '\n';
  }
  return out;
}

std::vector<FrameFeatures> parse_features(const std::string& contents) {
  std::vector<FrameFeatures> frames;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < contents.size()) {
    auto end = contents.find('\n', start);
    if (end == std::string::npos) end = contents.size();
    ++line_no;
    try {
      const json line = json::parse(contents.substr(start, end - start));
      FrameFeatures f;
      for (const auto& r : line) {
        FeatureRecord rec;
        rec.pos = {r.at("pos").at(0).get<double>(), r.at("pos").at(1).get<double>()};
        rec.score = r.at("score").get<double>();
        rec.feat_low = r.at("feat_low").get<std::vector<double>>();
        rec.feat_high = r.at("feat_high").get<std::vector<double>>();
        rec.object_id = r.at("object_id").get<long long>();
        f.push_back(std::move(rec));
      }
      frames.push_back(std::move(f));
    } catch (const json::exception& e) {
      throw InputError("features.jsonl line " + std::to_string(line_no) + ": " + e.what());
    }
    start = end + 1;
  }
  return frames;
}

std::string sim_config_to_json(const SimConfig& c) {
  json j;
  j["num_frames"] = c.num_frames;
  j["image_size"] = c.image_size;
  j["target_size"] = c.target_size;
  j["speed"] = c.speed;
  j["num_distractors"] = c.num_distractors;
  j["distractor_spawn_rate"] = c.distractor_spawn_rate;
  j["occlusion_probability"] = c.occlusion_probability;
  j["noise_sigma"] = c.noise_sigma;
  j["feature_width"] = c.feature_width;
  j["high_feature_cluster_count"] = c.high_feature_cluster_count;
  j["seed"] = c.seed;
  j["stride"] = c.stride;
  j["direction_jitter"] = c.direction_jitter;
  j["feature_noise"] = c.feature_noise;
  j["cluster_spread"] = c.cluster_spread;
  j["max_occlusion_length"] = c.max_occlusion_length;
  j["category"] = c.category;
  j["frame_rate"] = c.frame_rate;
  return j.dump(2);
}

SimConfig sim_config_from_json(const std::string& contents) {
  SimConfig c;
  try {
    const json j = json::parse(contents);
    if (!j.is_object()) throw InputError("sim config must be a JSON object");
    static const std::vector<std::string> known = {
        "num_frames", "image_size", "target_size", "speed", "num_distractors", "distractor_spawn_rate",
        "occlusion_probability", "noise_sigma", "feature_width", "high_feature_cluster_count", "seed", "stride",
        "direction_jitter", "feature_noise", "cluster_spread", "max_occlusion_length", "category", "frame_rate"};
    for (const auto& [key, value] : j.items()) {
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        throw InputError("sim config: unknown key '" + key + "'");
      }
    }
    c.num_frames = j.value("num_frames", c.num_frames);
    c.image_size = j.value("image_size", c.image_size);
    c.target_size = j.value("target_size", c.target_size);
    c.speed = j.value("speed", c.speed);
    c.num_distractors = j.value("num_distractors", c.num_distractors);
    c.distractor_spawn_rate = j.value("distractor_spawn_rate", c.distractor_spawn_rate);
    c.occlusion_probability = j.value("occlusion_probability", c.occlusion_probability);
    c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
    c.feature_width = j.value("feature_width", c.feature_width);
    c.high_feature_cluster_count = j.value("high_feature_cluster_count", c.high_feature_cluster_count);
    c.seed = j.value("seed", c.seed);
    c.stride = j.value("stride", c.stride);
    c.direction_jitter = j.value("direction_jitter", c.direction_jitter);
    c.feature_noise = j.value("feature_noise", c.feature_noise);
    c.cluster_spread = j.value("cluster_spread", c.cluster_spread);
    c.max_occlusion_length = j.value("max_occlusion_length", c.max_occlusion_length);
    c.category = j.value("category", c.category);
    c.frame_rate = j.value("frame_rate", c.frame_rate);
  } catch (const json::exception& e) {
    throw InputError(std::string("sim config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// On-disk datasets

void save_sim_sequence(const SimSequence& seq, const fs::path& dir) {
  save_sequence(seq.groundtruth, dir);
  text::write_file_atomic(dir / "scoremaps.bin", serialize_score_maps(seq.score_maps));
  text::write_file_atomic(dir / "features.jsonl", serialize_features(seq.features));
  text::write_file_atomic(dir / "sim_config.json", sim_config_to_json(seq.config) + "\n");
}

bool has_sim_sidecars(const fs::path& dir) {
  return fs::is_regular_file(dir / "scoremaps.bin") && fs::is_regular_file(dir / "features.jsonl");
}

SimSequence load_sim_sequence(const fs::path& dir) {
  if (!has_sim_sidecars(dir)) throw InputError(dir.string() + ": missing sim sidecars (scoremaps.bin, features.jsonl)");
  SimSequence seq;
  seq.groundtruth = load_sequence(dir);
  if (fs::is_regular_file(dir / "sim_config.json")) {
    seq.config = sim_config_from_json(text::read_file(dir / "sim_config.json"));
  }
  seq.score_maps = parse_score_maps(text::read_file(dir / "scoremaps.bin"));
  seq.features = parse_features(text::read_file(dir / "features.jsonl"));
  if (seq.score_maps.size() != seq.groundtruth.size() || seq.features.size() != seq.groundtruth.size()) {
    throw InputError(dir.string() + ": sidecar frame counts do not match the ground truth");
  }
  const auto& m = seq.score_maps.front();
  seq.image_width = static_cast<double>(m.width) * m.stride;
  seq.image_height = static_cast<double>(m.height) * m.stride;
  if (fs::is_regular_file(dir / "sim_config.json")) {
    seq.image_width = seq.config.image_size;
    seq.image_height = seq.config.image_size;
  }
  seq.scale_factors.assign(seq.groundtruth.size(), 1.0);
  return seq;
}

std::vector<SimSequence> load_sim_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw InputError(root.string() + ": not a directory");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory() && fs::is_regular_file(e.path() / "meta.json")) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  if (dirs.empty()) throw InputError(root.string() + ": no sequence bundles found");
  std::vector<SimSequence> out;
  for (const auto& d : dirs) out.push_back(load_sim_sequence(d));
  return out;
}

std::vector<std::string> gen_dataset(const SimConfig& base, std::size_t count, std::uint64_t seed,
                                     const fs::path& root, std::size_t jobs) {
  base.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw InputError(root.string() + ": cannot create dataset directory");

  std::vector<std::string> names;
  for (std::size_t i = 0; i < count; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "seq_%03zu", i);
    names.emplace_back(buf);
  }
  const auto work = [&](std::size_t i) {
    SimConfig cfg = base;
    cfg.seed = derive_seed(seed, "simulate", names[i]);
    save_sim_sequence(gen_sequence(cfg, names[i]), root / names[i]);
  };
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < count; i += jobs) work(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return names;
}

}  // namespace sfot
