#include "stripereid/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace stripereid::synth {

namespace {

std::size_t idx(std::int64_t i) { return static_cast<std::size_t>(i); }

template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(v[i - 1], v[j]);
  }
}

std::int64_t parse_int_field(const std::string& field, std::size_t line, const char* name) {
  if (field.empty()) throw ManifestParseError(line, std::string("empty ") + name);
  std::size_t used = 0;
  std::int64_t v = 0;
  try {
    v = std::stoll(field, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != field.size()) throw ManifestParseError(line, std::string("invalid ") + name + " '" + field + "'");
  return v;
}

}  // namespace

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "query") return Split::query;
  if (name == "gallery") return Split::gallery;
  throw std::invalid_argument("unknown split '" + name + "'");
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::query: return "query";
    case Split::gallery: return "gallery";
  }
  return "?";
}

std::vector<std::size_t> DatasetManifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == split) out.push_back(i);
  }
  return out;
}

ManifestParseError::ManifestParseError(std::size_t line, const std::string& what)
    : std::runtime_error("manifest line " + std::to_string(line) + ": " + what), line_(line) {}

std::string format_manifest(const DatasetManifest& manifest) {
  std::string out = std::string(kManifestHeader) + "\n";
  for (const auto& r : manifest.records) {
    out += std::to_string(r.person_id) + "," + std::to_string(r.camera_id) + "," + to_string(r.split) + "," +
           r.image_path + "\n";
  }
  return out;
}

DatasetManifest parse_manifest(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ManifestParseError(1, "missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kManifestHeader) throw ManifestParseError(1, "expected header '" + std::string(kManifestHeader) + "'");
  DatasetManifest manifest;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (fields.size() != 4) throw ManifestParseError(line_no, "expected 4 fields, got " + std::to_string(fields.size()));
    SampleRecord r;
    r.person_id = parse_int_field(fields[0], line_no, "person_id");
    r.camera_id = parse_int_field(fields[1], line_no, "camera_id");
    try {
      r.split = parse_split(fields[2]);
    } catch (const std::invalid_argument&) {
      throw ManifestParseError(line_no, "invalid split '" + fields[2] + "'");
    }
    if (fields[3].empty()) throw ManifestParseError(line_no, "empty image_path");
    r.image_path = fields[3];
    manifest.records.push_back(std::move(r));
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest '" + path.string() + "'");
  out << format_manifest(manifest);
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read manifest '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str());
}

// ---------------------------------------------------------------------------
// Generator

void GeneratorConfig::validate() const {
  if (num_ids < 4) throw std::invalid_argument("gendata: need at least 4 identities");
  if (num_cams < 2) throw std::invalid_argument("gendata: need at least 2 cameras for cross-camera evaluation");
  if (per_id_per_cam < 1) throw std::invalid_argument("gendata: need at least 1 image per identity and camera");
  if (!(occlusion_prob >= 0.0 && occlusion_prob <= 1.0)) throw std::invalid_argument("gendata: occlusion_prob must be in [0,1]");
  if (height < 16 || width < 8) throw std::invalid_argument("gendata: image must be at least 16x8");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("gendata: noise_std must be >= 0");
}

std::vector<IdentityAppearance> sample_identities(std::int64_t count, std::uint64_t seed) {
  SplitMix64 rng(derive_seed(seed, "identities"));
  std::vector<IdentityAppearance> people;
  while (static_cast<std::int64_t>(people.size()) < count) {
    IdentityAppearance p;
    for (auto& band : p.bands) {
      for (auto& ch : band) ch = rng.uniform(0.05, 0.95);
    }
    p.texture_frequency = rng.uniform(1.0, 4.0);
    p.texture_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    p.body_width = rng.uniform(0.45, 0.7);
    const bool distinct = std::all_of(people.begin(), people.end(), [&](const IdentityAppearance& q) {
      double gap = 0.0;
      for (std::size_t b = 0; b < 4; ++b) {
        for (std::size_t c = 0; c < 3; ++c) gap = std::max(gap, std::fabs(p.bands[b][c] - q.bands[b][c]));
      }
      return gap >= kMinIdentityColorGap;
    });
    if (distinct) people.push_back(p);
  }
  return people;
}

std::vector<CameraProfile> sample_cameras(std::int64_t count, std::uint64_t seed) {
  SplitMix64 rng(derive_seed(seed, "cameras"));
  std::vector<CameraProfile> cams(idx(count));
  for (auto& cam : cams) {
    for (auto& ch : cam.background) ch = rng.uniform(0.15, 0.85);
    for (auto& ch : cam.tint) ch = rng.uniform(0.9, 1.1);
  }
  return cams;
}

Image8 render_person(const IdentityAppearance& person, const CameraProfile& camera, const GeneratorConfig& config,
                     SplitMix64& draw, bool* occluded) {
  const auto h = config.height;
  const auto w = config.width;
  const std::int64_t margin_top = 2 + static_cast<std::int64_t>(draw.uniform_int(3));
  const std::int64_t figure_h = h - 6;
  const double center_x = 0.5 * static_cast<double>(w) + draw.uniform(-0.125, 0.125) * static_cast<double>(w);
  constexpr std::array<double, 4> kBandWidth{0.55, 1.0, 0.8, 0.9};

  std::array<std::int64_t, 5> edges{};
  edges[0] = margin_top;
  double acc = 0.0;
  for (std::size_t b = 0; b < 4; ++b) {
    acc += kBandHeights[b];
    edges[b + 1] = margin_top + static_cast<std::int64_t>(std::lround(acc * static_cast<double>(figure_h)));
  }
  const double half_body = 0.5 * person.body_width * static_cast<double>(w);

  ImageF img = ImageF::blank(h, w);
  for (std::int64_t y = 0; y < h; ++y) {
    int band = -1;
    for (int b = 0; b < 4; ++b) {
      if (y >= edges[idx(b)] && y < edges[idx(b + 1)]) band = b;
    }
    const double texture =
        1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * person.texture_frequency * static_cast<double>(y - margin_top) /
                                  static_cast<double>(figure_h) +
                              person.texture_phase);
    for (std::int64_t x = 0; x < w; ++x) {
      const double dx = std::fabs(static_cast<double>(x) + 0.5 - center_x);
      const bool on_body = band >= 0 && dx <= kBandWidth[idx(band)] * half_body;
      for (std::int64_t c = 0; c < 3; ++c) {
        double v;
        if (on_body) {
          v = person.bands[idx(band)][idx(c)] * ((band == 1 || band == 2) ? texture : 1.0);
        } else {
          v = camera.background[idx(c)] * (0.85 + 0.3 * static_cast<double>(y) / static_cast<double>(h));
        }
        v = v * camera.tint[idx(c)] + config.noise_std * draw.normal();
        img.at(c, y, x) = v;
      }
    }
  }
  Image8 out = to_rgb8(img);
  // Reserve exact gray for occluders.
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      if (out.at(y, x, 0) == kOccluderGray && out.at(y, x, 1) == kOccluderGray && out.at(y, x, 2) == kOccluderGray) {
        out.at(y, x, 2) = kOccluderGray + 1;
      }
    }
  }
  const bool occlude = draw.bernoulli(config.occlusion_prob);
  const auto band = static_cast<std::size_t>(draw.uniform_int(4));
  if (occlude) {
    const auto x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(center_x - half_body - 2.0)));
    const auto x1 = std::min<std::int64_t>(w, static_cast<std::int64_t>(std::ceil(center_x + half_body + 2.0)));
    for (std::int64_t y = edges[band]; y < edges[band + 1]; ++y) {
      for (std::int64_t x = x0; x < x1; ++x) {
        for (std::int64_t c = 0; c < 3; ++c) out.at(y, x, c) = kOccluderGray;
      }
    }
  }
  if (occluded != nullptr) *occluded = occlude;
  return out;
}

GeneratedDataset generate_dataset(const GeneratorConfig& config) {
  config.validate();
  const auto people = sample_identities(config.num_ids, config.seed);
  const auto cams = sample_cameras(config.num_cams, config.seed);

  std::vector<std::int64_t> order(idx(config.num_ids));
  std::iota(order.begin(), order.end(), 0);
  SplitMix64 split_rng(derive_seed(config.seed, "split"));
  shuffle(order, split_rng);
  std::set<std::int64_t> train_ids(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(config.num_ids / 2));

  const auto render_seed = derive_seed(config.seed, "render");
  GeneratedDataset ds;
  for (std::int64_t id = 0; id < config.num_ids; ++id) {
    for (std::int64_t cam = 0; cam < config.num_cams; ++cam) {
      for (std::int64_t k = 0; k < config.per_id_per_cam; ++k) {
        const auto flat = static_cast<std::uint64_t>((id * config.num_cams + cam) * config.per_id_per_cam + k);
        SplitMix64 draw(derive_seed(render_seed, flat));
        bool occluded = false;
        ds.images.push_back(render_person(people[idx(id)], cams[idx(cam)], config, draw, &occluded));
        ds.occluded.push_back(occluded);
        SampleRecord r;
        r.person_id = id;
        r.camera_id = cam;
        r.split = train_ids.count(id) ? Split::train : (k == 0 ? Split::query : Split::gallery);
        r.image_path = "images/" + std::to_string(id) + "_" + std::to_string(cam) + "_" + std::to_string(k) + ".ppm";
        ds.manifest.records.push_back(std::move(r));
      }
    }
  }
  return ds;
}

void write_dataset(const GeneratedDataset& dataset, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  for (std::size_t i = 0; i < dataset.images.size(); ++i) {
    write_pnm(root / dataset.manifest.records[i].image_path, dataset.images[i]);
  }
  save_manifest(dataset.manifest, root / "manifest.csv");
}

// ---------------------------------------------------------------------------
// Augmentation

void AugmentationConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(flip_prob) || !prob(erase_prob)) throw std::invalid_argument("augmentation probabilities must be in [0,1]");
  if (!(zoom_min > 0.0 && zoom_min <= zoom_max)) throw std::invalid_argument("zoom range must be positive and ordered");
  if (!(erase_area_min > 0.0 && erase_area_min <= erase_area_max && erase_area_max < 1.0)) {
    throw std::invalid_argument("erase area range must satisfy 0 < min <= max < 1");
  }
  if (!(erase_aspect_min > 0.0 && erase_aspect_min <= erase_aspect_max)) throw std::invalid_argument("invalid erase aspect range");
}

AugmentationConfig AugmentationConfig::disabled() {
  AugmentationConfig c;
  c.flip_prob = 0.0;
  c.zoom_min = c.zoom_max = 1.0;
  c.erase_prob = 0.0;
  return c;
}

ImageF flip_horizontal(const ImageF& image) {
  ImageF out = image;
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t y = 0; y < image.height; ++y) {
      for (std::int64_t x = 0; x < image.width; ++x) out.at(c, y, x) = image.at(c, y, image.width - 1 - x);
    }
  }
  return out;
}

ImageF zoom(const ImageF& image, double factor) {
  if (factor == 1.0) return image;
  ImageF out = ImageF::blank(image.height, image.width);
  const double cy = 0.5 * static_cast<double>(image.height);
  const double cx = 0.5 * static_cast<double>(image.width);
  auto sample = [&](std::int64_t c, std::int64_t y, std::int64_t x) {
    if (y < 0 || y >= image.height || x < 0 || x >= image.width) return 0.0;
    return image.at(c, y, x);
  };
  for (std::int64_t y = 0; y < image.height; ++y) {
    const double sy = (static_cast<double>(y) + 0.5 - cy) / factor + cy - 0.5;
    const auto y0 = static_cast<std::int64_t>(std::floor(sy));
    const double fy = sy - static_cast<double>(y0);
    for (std::int64_t x = 0; x < image.width; ++x) {
      const double sx = (static_cast<double>(x) + 0.5 - cx) / factor + cx - 0.5;
      const auto x0 = static_cast<std::int64_t>(std::floor(sx));
      const double fx = sx - static_cast<double>(x0);
      for (std::int64_t c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * sample(c, y0, x0) + fx * sample(c, y0, x0 + 1);
        const double bottom = (1.0 - fx) * sample(c, y0 + 1, x0) + fx * sample(c, y0 + 1, x0 + 1);
        out.at(c, y, x) = (1.0 - fy) * top + fy * bottom;
      }
    }
  }
  return out;
}

ImageF augment(const ImageF& image, const AugmentationConfig& config, SplitMix64& draw, AugmentRecord* record) {
  AugmentRecord rec;
  rec.flipped = draw.bernoulli(config.flip_prob);
  rec.zoom = config.zoom_min == config.zoom_max ? config.zoom_min : draw.uniform(config.zoom_min, config.zoom_max);
  ImageF out = rec.flipped ? flip_horizontal(image) : image;
  out = zoom(out, rec.zoom);

  if (draw.bernoulli(config.erase_prob)) {
    const double image_area = static_cast<double>(image.height * image.width);
    for (int attempt = 0; attempt < 10 && !rec.erased; ++attempt) {
      const double area = draw.uniform(config.erase_area_min, config.erase_area_max) * image_area;
      const double aspect =
          std::exp(draw.uniform(std::log(config.erase_aspect_min), std::log(config.erase_aspect_max)));
      const auto eh = static_cast<std::int64_t>(std::lround(std::sqrt(area * aspect)));
      const auto ew = static_cast<std::int64_t>(std::lround(std::sqrt(area / aspect)));
      if (eh < 1 || ew < 1 || eh >= image.height || ew >= image.width) continue;
      rec.erase_y = static_cast<std::int64_t>(draw.uniform_int(static_cast<std::uint64_t>(image.height - eh + 1)));
      rec.erase_x = static_cast<std::int64_t>(draw.uniform_int(static_cast<std::uint64_t>(image.width - ew + 1)));
      rec.erase_h = eh;
      rec.erase_w = ew;
      rec.erased = true;
    }
    if (rec.erased) {
      for (std::int64_t c = 0; c < 3; ++c) {
        for (std::int64_t y = rec.erase_y; y < rec.erase_y + rec.erase_h; ++y) {
          for (std::int64_t x = rec.erase_x; x < rec.erase_x + rec.erase_w; ++x) out.at(c, y, x) = 0.0;
        }
      }
    }
  }
  if (record != nullptr) *record = rec;
  return out;
}

Tensor images_to_tensor(std::span<const ImageF> images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const auto h = images[0].height;
  const auto w = images[0].width;
  std::vector<double> data;
  data.reserve(images.size() * idx(3 * h * w));
  for (const auto& img : images) {
    if (img.height != h || img.width != w) throw ShapeError("images_to_tensor: images differ in size");
    for (const double v : img.planes) data.push_back((v - 0.5) / 0.25);
  }
  return Tensor({static_cast<std::int64_t>(images.size()), 3, h, w}, std::move(data));
}

// ---------------------------------------------------------------------------
// PK sampling

void BatchSpec::validate() const {
  if (p < 2 || k < 2) throw std::invalid_argument("batch spec needs P >= 2 and K >= 2");
}

PkSampler::PkSampler(const DatasetManifest& manifest, BatchSpec spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
  spec_.validate();
  std::map<std::int64_t, std::vector<std::size_t>> all;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) {
    if (manifest.records[i].split == Split::train) all[manifest.records[i].person_id].push_back(i);
  }
  std::size_t train_images = 0;
  for (auto& [id, list] : all) {
    if (static_cast<std::int64_t>(list.size()) < spec_.k) continue;
    identities_.push_back(id);
    train_images += list.size();
    images_[id] = std::move(list);
  }
  const auto n = static_cast<std::int64_t>(identities_.size());
  if (n < spec_.p) {
    throw std::invalid_argument("pk_sample: only " + std::to_string(n) + " train identities have >= " +
                                std::to_string(spec_.k) + " images; need P = " + std::to_string(spec_.p));
  }
  batches_per_round_ = (n + spec_.p - 1) / spec_.p;
  batches_per_epoch_ = std::max<std::int64_t>(static_cast<std::int64_t>(train_images) / spec_.batch_size(), batches_per_round_);
}

std::vector<std::size_t> PkSampler::batch(std::int64_t epoch, std::int64_t position) const {
  if (epoch < 0 || position < 0 || position >= batches_per_epoch_) throw std::out_of_range("pk_sample: batch position out of range");
  const auto round = position / batches_per_round_;
  const auto chunk = position % batches_per_round_;
  const auto epoch_seed = derive_seed(derive_seed(seed_, "pk"), static_cast<std::uint64_t>(epoch));

  std::vector<std::int64_t> order = identities_;
  SplitMix64 perm_rng(derive_seed(epoch_seed, static_cast<std::uint64_t>(round)));
  shuffle(order, perm_rng);
  std::vector<std::int64_t> chosen;
  const auto n = static_cast<std::int64_t>(order.size());
  for (std::int64_t i = chunk * spec_.p; i < std::min(n, (chunk + 1) * spec_.p); ++i) chosen.push_back(order[idx(i)]);
  for (std::int64_t i = 0; static_cast<std::int64_t>(chosen.size()) < spec_.p; ++i) chosen.push_back(order[idx(i)]);

  std::vector<std::size_t> out;
  SplitMix64 pick_rng(derive_seed(epoch_seed, "images" + std::to_string(position)));
  for (const auto id : chosen) {
    auto pool = images_.at(id);
    for (std::int64_t j = 0; j < spec_.k; ++j) {
      const auto r = idx(j) + static_cast<std::size_t>(pick_rng.uniform_int(pool.size() - idx(j)));
      std::swap(pool[idx(j)], pool[r]);
      out.push_back(pool[idx(j)]);
    }
  }
  return out;
}

std::vector<std::size_t> pk_sample(const DatasetManifest& manifest, const BatchSpec& spec, std::uint64_t seed,
                                   std::int64_t epoch, std::int64_t position) {
  return PkSampler(manifest, spec, seed).batch(epoch, position);
}

std::map<std::int64_t, std::int64_t> train_label_map(const DatasetManifest& manifest) {
  std::set<std::int64_t> ids;
  for (const auto& r : manifest.records) {
    if (r.split == Split::train) ids.insert(r.person_id);
  }
  std::map<std::int64_t, std::int64_t> labels;
  for (const auto id : ids) labels[id] = static_cast<std::int64_t>(labels.size());
  return labels;
}

}  // namespace stripereid::synth
