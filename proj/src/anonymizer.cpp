#include "sgg/anonymizer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "sgg/errors.hpp"
#include "sgg/generator.hpp"
#include "sgg/training.hpp"

namespace sgg {

namespace fs = std::filesystem;

std::vector<PersonDetection> parse_detections(const std::string& text) {
  std::vector<PersonDetection> out;
  std::istringstream lines(text);
  std::string line;
  int number = 0;
  while (std::getline(lines, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream is(line);
    std::vector<std::string> tok;
    for (std::string t; is >> t;) tok.push_back(t);
    const std::string where = "line " + std::to_string(number);
    if (tok.size() != 5) throw FormatError("boxes", where + ": expected 'x0 y0 x1 y1 score'");
    PersonDetection d;
    int* coords[4] = {&d.box.x0, &d.box.y0, &d.box.x1, &d.box.y1};
    for (int k = 0; k < 4; ++k) {
      const auto& t = tok[k];
      const auto [end, ec] = std::from_chars(t.data(), t.data() + t.size(), *coords[k]);
      if (ec != std::errc() || end != t.data() + t.size()) {
        throw FormatError("boxes", where + ": '" + t + "' is not an integer");
      }
    }
    std::size_t used = 0;
    try {
      d.score = std::stod(tok[4], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok[4].size()) throw FormatError("boxes", where + ": '" + tok[4] + "' is not a number");
    if (!(d.score >= 0 && d.score <= 1)) {
      throw FormatError("boxes", where + ": score outside [0, 1]");
    }
    out.push_back(d);
  }
  return out;
}

std::vector<PersonDetection> load_detections(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("boxes", "cannot open " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_detections(ss.str());
}

Box context_crop(const Box& box, double margin, int height, int width) {
  const int mx = static_cast<int>(std::lround(margin * box.width()));
  const int my = static_cast<int>(std::lround(margin * box.height()));
  return {std::max(0, box.x0 - mx), std::max(0, box.y0 - my), std::min(width, box.x1 + mx),
          std::min(height, box.y1 + my)};
}

std::vector<float> person_latent(const AnonymizeOptions& opt, const std::string& key, int person,
                                 int z_dim) {
  // FNV-1a keeps the stream stable across standard libraries.
  std::uint64_t h = 1469598103934665603ull;
  if (!opt.fixed_z) {
    for (unsigned char c : key) h = (h ^ c) * 1099511628211ull;
    h = (h ^ static_cast<std::uint64_t>(person)) * 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                    static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<float> n;
  std::vector<float> z(z_dim);
  for (auto& v : z) v = n(rng);
  return z;
}

namespace {

// Model-resolution annotation of one crop. BODY is the valid surface inside the box.
SurfaceAnnotation crop_annotation(const Image& image, const EmbeddingRaster& surface, const Box& box,
                                  const Box& crop, int mh, int mw, const AnonymizeOptions& opt) {
  Image patch(crop.height(), crop.width(), 3);
  for (int y = 0; y < crop.height(); ++y)
    for (int x = 0; x < crop.width(); ++x)
      for (int c = 0; c < 3; ++c) patch.at(y, x, c) = image.at(crop.y0 + y, crop.x0 + x, c);

  SurfaceAnnotation a;
  a.image = resize_bilinear(patch, mh, mw);
  a.embeddings = EmbeddingRaster(mh, mw, surface.channels);
  a.mask = RegionMask(mh, mw);
  for (int y = 0; y < mh; ++y) {
    const int sy = crop.y0 + nearest_source(y, mh, crop.height());
    for (int x = 0; x < mw; ++x) {
      const int sx = crop.x0 + nearest_source(x, mw, crop.width());
      const bool inside = sy >= box.y0 && sy < box.y1 && sx >= box.x0 && sx < box.x1;
      if (!inside || !surface.is_valid(sy, sx)) continue;
      const auto src = surface.at(sy, sx);
      std::copy(src.begin(), src.end(), a.embeddings.at(y, x).begin());
      a.embeddings.valid[a.embeddings.pixel_index(y, x)] = 1;
      a.mask.at(y, x) = Region::Body;
    }
  }
  if (opt.table) a.embeddings = discretize(a.embeddings, *opt.table);
  a.mask = dilate_mask(a.mask, opt.dilation);
  return a;
}

}  // namespace

AnonymizeResult anonymize_image(const Image& image, const EmbeddingRaster& surface,
                                const std::vector<PersonDetection>& detections,
                                const ImageModel& model, const AnonymizeOptions& opt,
                                const std::string& key) {
  const int h = image.height, w = image.width;
  if (image.channels != 3) throw std::invalid_argument("anonymize_image: expected an RGB image");
  if (surface.height != h || surface.width != w) {
    throw std::invalid_argument("anonymize_image: surface raster does not match the image");
  }
  if (opt.truncation < 0 || opt.truncation > 1) {
    throw std::invalid_argument("anonymize_image: truncation must lie in [0, 1]");
  }
  AnonymizeResult r;
  r.image = image;
  r.region.assign(static_cast<std::size_t>(h) * w, 0);

  std::vector<int> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return detections[a].score > detections[b].score; });

  const int mh = model.height(), mw = model.width();
  for (int rank = 0; rank < static_cast<int>(order.size()); ++rank) {
    const auto& det = detections[order[rank]];
    const Box box{std::max(0, det.box.x0), std::max(0, det.box.y0), std::min(w, det.box.x1),
                  std::min(h, det.box.y1)};
    std::ostringstream tag;
    tag << "box " << det.box.x0 << " " << det.box.y0 << " " << det.box.x1 << " " << det.box.y1;
    if (box.width() < 4 || box.height() < 4) {
      ++r.skipped;
      r.warnings.push_back(tag.str() + ": smaller than 4x4 inside the image, skipped");
      continue;
    }
    const Box crop = context_crop(box, opt.margin, h, w);
    const SurfaceAnnotation ann = crop_annotation(image, surface, box, crop, mh, mw, opt);
    if (ann.mask.count(Region::Body) == 0) {
      ++r.skipped;
      r.warnings.push_back(tag.str() + ": no surface pixels, skipped");
      continue;
    }
    const auto z = person_latent(opt, key, rank, model.z_dim());
    const Image raw = model.generate(ann, z, opt.truncation);
    if (raw.height != mh || raw.width != mw || raw.channels != 3) {
      throw std::runtime_error("model returned an image of the wrong shape");
    }
    const Image back = resize_bilinear(raw, crop.height(), crop.width());
    for (int y = 0; y < crop.height(); ++y) {
      const int my = nearest_source(y, crop.height(), mh);
      for (int x = 0; x < crop.width(); ++x) {
        if (ann.mask.at(my, nearest_source(x, crop.width(), mw)) == Region::Known) continue;
        const int iy = crop.y0 + y, ix = crop.x0 + x;
        for (int c = 0; c < 3; ++c) r.image.at(iy, ix, c) = back.at(y, x, c);
        r.region[static_cast<std::size_t>(iy) * w + ix] = 1;
      }
    }
    ++r.generated;
  }
  return r;
}

void AnonymizationJob::validate() const {
  if (truncation < 0 || truncation > 1) throw std::invalid_argument("truncation must lie in [0, 1]");
  if (dilation < 0) throw std::invalid_argument("dilation must be >= 0");
  if (score_threshold < 0 || score_threshold > 1) {
    throw std::invalid_argument("score threshold must lie in [0, 1]");
  }
  if (!fs::is_directory(input)) throw std::invalid_argument("input directory " + input.string() + " does not exist");
  if (!table.empty() && !fs::exists(table)) throw std::invalid_argument("table " + table.string() + " does not exist");
}

nlohmann::json to_json(const JobReport& r) {
  return {{"images", r.images},   {"persons", r.persons}, {"generated", r.generated},
          {"skips", r.skips},     {"failed", r.failed},   {"wall_seconds", r.wall_seconds},
          {"messages", r.messages}};
}

JobReport run_job(const AnonymizationJob& job, const ImageModel& model) {
  job.validate();
  const auto start = std::chrono::steady_clock::now();
  fs::create_directories(job.output);
  std::optional<VertexTable> table;
  const fs::path table_path = job.table.empty() ? job.input / "table.vtx" : job.table;
  if (fs::exists(table_path)) table = load_vertex_table(table_path);

  AnonymizeOptions opt;
  opt.truncation = job.truncation;
  opt.seed = job.seed;
  opt.dilation = job.dilation;
  opt.fixed_z = job.fixed_z;
  opt.table = table ? &*table : nullptr;

  JobReport report;
  if (!table) report.messages.push_back("no vertex table found; embeddings used as given");
  for (const auto& id : list_annotation_ids(job.input)) {
    std::vector<PersonDetection> kept;
    SurfaceAnnotation ann;
    try {
      ann = load_annotation(job.input, id);
      for (const auto& d : load_detections(job.input / (id + ".boxes.txt"))) {
        if (d.score >= job.score_threshold) kept.push_back(d);
      }
    } catch (const std::exception& e) {
      ++report.failed;
      report.messages.push_back(id + ": " + e.what());
      continue;
    }
    const auto r = anonymize_image(ann.image, ann.embeddings, kept, model, opt, id);
    write_png(job.output / (id + ".image.png"), r.image);
    ++report.images;
    report.persons += static_cast<int>(kept.size());
    report.generated += r.generated;
    report.skips += r.skipped;
    for (const auto& w : r.warnings) report.messages.push_back(id + ": " + w);
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::ofstream os(job.output / "report.json");
  os << to_json(report).dump(2) << "\n";
  return report;
}

JobReport run_job(const AnonymizationJob& job) {
  const auto g = load_generator(job.checkpoint);
  return run_job(job, GeneratorModel(*g));
}

}  // namespace sgg
