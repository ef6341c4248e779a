#pragma once

// Per-person crop, generate and paste-back over whole images.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgg/model.hpp"

namespace sgg {

/// Half-open pixel box [x0, x1) x [y0, y1).
struct Box {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  bool operator==(const Box&) const = default;
};

/// A detected person. Its surface embeddings are the valid pixels of the
/// image-level raster inside `box`.
struct PersonDetection {
  Box box;
  double score = 1.0;
};

/// Sidecar format: one "x0 y0 x1 y1 score" record per line; blank lines ignored.
std::vector<PersonDetection> parse_detections(const std::string& text);
std::vector<PersonDetection> load_detections(const std::filesystem::path& path);

struct AnonymizeOptions {
  double truncation = 1.0;
  std::uint64_t seed = 0;
  int dilation = 2;
  double margin = 0.2;                 // context on each side, as a fraction of the box size
  bool fixed_z = false;                // one z for every person of every image
  const VertexTable* table = nullptr;  // embeddings are discretized when set
};

struct AnonymizeResult {
  Image image;
  std::vector<std::uint8_t> region;  // 1 where a generated pixel was pasted
  int generated = 0;
  int skipped = 0;
  std::vector<std::string> warnings;
};

/// Context crop of `box`, widened by `margin` of its size on each side and clamped.
Box context_crop(const Box& box, double margin, int height, int width);

/// Latent code for one person. `key` identifies the image.
std::vector<float> person_latent(const AnonymizeOptions& opt, const std::string& key, int person,
                                 int z_dim);

/// `surface` supplies the embeddings; its mask is ignored. Detections are taken
/// in descending score order; boxes smaller than 4x4 are skipped with a warning.
AnonymizeResult anonymize_image(const Image& image, const EmbeddingRaster& surface,
                                const std::vector<PersonDetection>& detections,
                                const ImageModel& model, const AnonymizeOptions& options,
                                const std::string& key = "");

struct AnonymizationJob {
  std::filesystem::path input;
  std::filesystem::path output;
  std::filesystem::path checkpoint;
  std::filesystem::path table;  // empty: input/table.vtx when present
  double truncation = 1.0;
  std::uint64_t seed = 0;
  int dilation = 2;
  double score_threshold = 0.1;
  bool fixed_z = false;

  void validate() const;
};

struct JobReport {
  int images = 0;     // written
  int persons = 0;    // detections at or above the threshold
  int generated = 0;
  int skips = 0;      // degenerate or empty detections
  int failed = 0;     // images without a usable annotation
  double wall_seconds = 0;
  std::vector<std::string> messages;
};

nlohmann::json to_json(const JobReport& r);

/// Processes every `S.image.png` of the input directory, writing `S.image.png`
/// into the output directory and `report.json` beside it.
JobReport run_job(const AnonymizationJob& job, const ImageModel& model);
/// Loads the evaluation generator of the job's checkpoint.
JobReport run_job(const AnonymizationJob& job);

}  // namespace sgg
