#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "deepest/corpus.hpp"
#include "deepest/pipeline.hpp"
#include "deepest/types.hpp"

// Objective evaluation: MCD tables against parallel target recordings and
// embedding projections with cluster metrics.
namespace deepest {

struct McdPair {
  std::string source_id;
  std::string target_id;  // parallel recording in the target emotion
  std::string pair_tag;   // e.g. "N2H"
  std::string gender;     // "unknown" when the manifest has none
  double zero_effort = 0.0;  // MCD(source, target)
  double system = 0.0;       // MCD(converted, target)
};

struct McdCell {
  std::string pair_tag;
  std::string gender;
  int pairs = 0;
  double zero_effort = 0.0;  // means over the cell's pairs
  double system = 0.0;
};

struct McdReport {
  std::vector<McdPair> pairs;  // sorted (pair_tag, gender, source_id)
  std::vector<McdCell> cells;  // sorted (pair_tag, gender)
  std::vector<std::string> pair_tags() const;
  std::vector<std::string> genders() const;  // male, female, then the rest
  // Rows = emotion pairs; per gender a zero-effort, a system and a count column.
  std::string csv() const;
  std::string markdown() const;
};

// Pairs every "<source_id>__to__<emotion>.wav" in `converted_dir` with the
// recording of the same speaker, target emotion and text id. A sibling
// .feat file supplies the converted features when present, so outputs of
// other systems only need the naming convention. Throws MissingPair.
McdReport mcd_report(const std::filesystem::path& converted_dir, const CorpusIndex& index,
                     const CacheDir& cache = std::nullopt);

// Mean MCD per (pair_tag, gender) over the given pairs, independent of order.
std::vector<McdCell> summarize_pairs(std::vector<McdPair> pairs);

struct TsneOptions {
  double perplexity = 10.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int exaggeration_iterations = 250;
  std::uint64_t seed = 1;
};

// Exact t-SNE to two dimensions. Throws TooFewPoints when N < 5 or
// perplexity >= N.
Matrix tsne_project(const Matrix& points, const TsneOptions& options = {});

// Scatter plot, one colour per distinct label, written as PNG.
void write_scatter_png(const std::filesystem::path& path, const Matrix& coords,
                       const std::vector<int>& labels, int size = 640);

// k-means (k-means++ seeding, best inertia of `restarts` runs) followed by
// purity = (1/N) * sum over clusters of the largest label count. Throws
// LabelMismatch when labels and rows disagree or k differs from the number
// of distinct labels.
double cluster_purity(const Matrix& points, const std::vector<int>& labels, int k,
                      std::uint64_t seed = 1, int restarts = 10);

// Cluster index per row from the same procedure.
std::vector<int> kmeans_assign(const Matrix& points, int k, std::uint64_t seed = 1, int restarts = 10);

}  // namespace deepest
