#include "deepest/evaluate.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "deepest/distortion.hpp"
#include "deepest/error.hpp"
#include "deepest/feature_cache.hpp"
#include "deepest/spectral.hpp"
#include "deepest/wav.hpp"

namespace deepest {
namespace {

constexpr std::string_view kStemSeparator = "__to__";

int gender_rank(const std::string& g) {
  if (g == "male") return 0;
  if (g == "female") return 1;
  return 2;
}

bool cell_less(const std::string& tag_a, const std::string& g_a, const std::string& tag_b,
               const std::string& g_b) {
  if (tag_a != tag_b) return tag_a < tag_b;
  if (gender_rank(g_a) != gender_rank(g_b)) return gender_rank(g_a) < gender_rank(g_b);
  return g_a < g_b;
}

std::string fixed3(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(3);
  s << v;
  return s.str();
}

MCEPTrack track_of(const FeatureSet& f) { return mcep(f.sp); }

double squared_distance(const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

struct KMeansRun {
  std::vector<int> assignment;
  double inertia = std::numeric_limits<double>::infinity();
};

KMeansRun kmeans_once(const Matrix& x, int k, std::mt19937_64& rng) {
  const Eigen::Index n = x.rows();
  Matrix centres(k, x.cols());
  // k-means++ seeding.
  std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
  centres.row(0) = x.row(pick(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < c; ++j) best = std::min(best, squared_distance(x, i, centres, j));
      d2[static_cast<std::size_t>(i)] = best;
      total += best;
    }
    Eigen::Index chosen = pick(rng);
    if (total > 0.0) {
      std::discrete_distribution<Eigen::Index> weighted(d2.begin(), d2.end());
      chosen = weighted(rng);
    }
    centres.row(c) = x.row(chosen);
  }

  KMeansRun run;
  run.assignment.assign(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < 300; ++iter) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = squared_distance(x, i, centres, j);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      inertia += best_d;
      if (run.assignment[static_cast<std::size_t>(i)] != best) {
        run.assignment[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    run.inertia = inertia;
    if (!changed) break;
    Matrix sums = Matrix::Zero(k, x.cols());
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = run.assignment[static_cast<std::size_t>(i)];
      sums.row(c) += x.row(i);
      ++counts[static_cast<std::size_t>(c)];
    }
    for (int j = 0; j < k; ++j)
      if (counts[static_cast<std::size_t>(j)] > 0) centres.row(j) = sums.row(j) / counts[static_cast<std::size_t>(j)];
  }
  return run;
}

// Row-wise conditional affinities with the Gaussian width found by
// bisection so that each row's entropy equals ln(perplexity).
Matrix conditional_affinities(const Matrix& d2, double perplexity) {
  const Eigen::Index n = d2.rows();
  const double target = std::log(perplexity);
  Matrix p = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    Eigen::RowVectorXd row(n);
    for (int step = 0; step < 100; ++step) {
      double sum = 0.0, weighted = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * d2(i, j));
        sum += row[j];
        weighted += row[j] * d2(i, j);
      }
      sum = std::max(sum, std::numeric_limits<double>::min());
      const double entropy = std::log(sum) + beta * weighted / sum;
      row /= sum;
      const double diff = entropy - target;
      if (std::abs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    p.row(i) = row;
  }
  return p;
}

}  // namespace

// ------------------------------------------------------------------- MCD

std::vector<std::string> McdReport::pair_tags() const {
  std::vector<std::string> tags;
  for (const auto& c : cells)
    if (std::find(tags.begin(), tags.end(), c.pair_tag) == tags.end()) tags.push_back(c.pair_tag);
  return tags;
}

std::vector<std::string> McdReport::genders() const {
  std::vector<std::string> g;
  for (const auto& c : cells)
    if (std::find(g.begin(), g.end(), c.gender) == g.end()) g.push_back(c.gender);
  std::sort(g.begin(), g.end(), [](const std::string& a, const std::string& b) {
    return gender_rank(a) != gender_rank(b) ? gender_rank(a) < gender_rank(b) : a < b;
  });
  return g;
}

std::string McdReport::csv() const {
  const auto genders_ = genders();
  std::ostringstream out;
  out << "pair";
  for (const auto& g : genders_) out << ',' << g << "_zero_effort," << g << "_system," << g << "_pairs";
  out << '\n';
  out.precision(17);
  for (const auto& tag : pair_tags()) {
    out << tag;
    for (const auto& g : genders_) {
      const auto it = std::find_if(cells.begin(), cells.end(),
                                   [&](const McdCell& c) { return c.pair_tag == tag && c.gender == g; });
      if (it == cells.end())
        out << ",,,0";
      else
        out << ',' << it->zero_effort << ',' << it->system << ',' << it->pairs;
    }
    out << '\n';
  }
  return out.str();
}

std::string McdReport::markdown() const {
  const auto genders_ = genders();
  std::ostringstream out;
  out << "| Pair |";
  for (const auto& g : genders_) out << ' ' << g << " zero effort | " << g << " converted | " << g << " n |";
  out << "\n|---|";
  for (std::size_t i = 0; i < genders_.size(); ++i) out << "---:|---:|---:|";
  out << '\n';
  for (const auto& tag : pair_tags()) {
    out << "| " << tag << " |";
    for (const auto& g : genders_) {
      const auto it = std::find_if(cells.begin(), cells.end(),
                                   [&](const McdCell& c) { return c.pair_tag == tag && c.gender == g; });
      if (it == cells.end())
        out << " - | - | 0 |";
      else
        out << ' ' << fixed3(it->zero_effort) << " | " << fixed3(it->system) << " | " << it->pairs << " |";
    }
    out << '\n';
  }
  return out.str();
}

std::vector<McdCell> summarize_pairs(std::vector<McdPair> pairs) {
  std::sort(pairs.begin(), pairs.end(), [](const McdPair& a, const McdPair& b) {
    if (a.pair_tag != b.pair_tag || a.gender != b.gender)
      return cell_less(a.pair_tag, a.gender, b.pair_tag, b.gender);
    return a.source_id < b.source_id;
  });
  std::vector<McdCell> cells;
  for (const auto& p : pairs) {
    if (cells.empty() || cells.back().pair_tag != p.pair_tag || cells.back().gender != p.gender)
      cells.push_back({p.pair_tag, p.gender, 0, 0.0, 0.0});
    auto& c = cells.back();
    ++c.pairs;
    c.zero_effort += p.zero_effort;
    c.system += p.system;
  }
  for (auto& c : cells) {
    c.zero_effort /= c.pairs;
    c.system /= c.pairs;
  }
  return cells;
}

McdReport mcd_report(const std::filesystem::path& converted_dir, const CorpusIndex& index,
                     const CacheDir& cache) {
  if (!std::filesystem::is_directory(converted_dir))
    fail("MissingDirectory", converted_dir.string() + " is not a directory");
  std::map<std::string, const Utterance*> by_id;
  for (const auto& u : index.utterances) by_id[u.id] = &u;

  std::vector<std::filesystem::path> wavs;
  for (const auto& entry : std::filesystem::directory_iterator(converted_dir))
    if (entry.path().extension() == ".wav" &&
        entry.path().stem().string().find(kStemSeparator) != std::string::npos)
      wavs.push_back(entry.path());
  std::sort(wavs.begin(), wavs.end());

  McdReport report;
  for (const auto& wav_path : wavs) {
    const std::string stem = wav_path.stem().string();
    const auto cut = stem.rfind(kStemSeparator);
    const std::string source_id = stem.substr(0, cut);
    const Emotion target = parse_emotion(stem.substr(cut + kStemSeparator.size()));
    const auto src_it = by_id.find(source_id);
    if (src_it == by_id.end()) fail("MissingPair", "source utterance " + source_id + " is not in the manifest");
    const Utterance& source = *src_it->second;
    const auto ref = std::find_if(index.utterances.begin(), index.utterances.end(), [&](const Utterance& u) {
      return u.speaker_id == source.speaker_id && u.emotion == target && u.text_id == source.text_id;
    });
    if (ref == index.utterances.end())
      fail("MissingPair", "no " + to_string(target) + " recording of text " + source.text_id + " for speaker " +
                              source.speaker_id);

    auto feat_path = wav_path;
    feat_path.replace_extension(".feat");
    FeatureSet converted;
    if (std::filesystem::exists(feat_path)) {
      converted = read_feature_cache(feat_path).features;
    } else {
      const Wav w = read_wav(wav_path);
      converted = analyze(w.samples, w.sample_rate);
    }
    const auto target_track = track_of(utterance_features(*ref, cache));
    McdPair p;
    p.source_id = source.id;
    p.target_id = ref->id;
    p.pair_tag = emotion_pair_tag(source.emotion, target);
    p.gender = source.gender.value_or("unknown");
    p.zero_effort = mcd(track_of(utterance_features(source, cache)), target_track);
    p.system = mcd(track_of(converted), target_track);
    report.pairs.push_back(std::move(p));
  }
  report.cells = summarize_pairs(report.pairs);
  std::sort(report.pairs.begin(), report.pairs.end(), [](const McdPair& a, const McdPair& b) {
    if (a.pair_tag != b.pair_tag || a.gender != b.gender)
      return cell_less(a.pair_tag, a.gender, b.pair_tag, b.gender);
    return a.source_id < b.source_id;
  });
  return report;
}

// ----------------------------------------------------------------- t-SNE

Matrix tsne_project(const Matrix& points, const TsneOptions& o) {
  const Eigen::Index n = points.rows();
  if (n < 5 || o.perplexity >= static_cast<double>(n))
    fail("TooFewPoints", std::to_string(n) + " points cannot support perplexity " + std::to_string(o.perplexity));
  if (!points.allFinite()) fail("InvalidInput", "embeddings contain non-finite values");

  Matrix d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) d2(i, j) = squared_distance(points, i, points, j);
  Matrix p = conditional_affinities(d2, o.perplexity);
  p = (p + p.transpose()).eval() / (2.0 * static_cast<double>(n));
  p = p.cwiseMax(1e-12);

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> init(0.0, 1e-4);
  Matrix y(n, 2);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = init(rng);
  Matrix velocity = Matrix::Zero(n, 2);
  Matrix gains = Matrix::Ones(n, 2);
  Matrix q(n, n), grad(n, 2);

  for (int iter = 0; iter < o.iterations; ++iter) {
    const double exaggeration = iter < o.exaggeration_iterations ? o.early_exaggeration : 1.0;
    const double momentum = iter < o.exaggeration_iterations ? 0.5 : 0.8;
    double z = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      q(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double w = 1.0 / (1.0 + squared_distance(y, i, y, j));
        q(i, j) = q(j, i) = w;
        z += 2.0 * w;
      }
    }
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = q(i, j);
        const double coef = 4.0 * (exaggeration * p(i, j) - w / z) * w;
        grad.row(i) += coef * (y.row(i) - y.row(j));
      }
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
      double& g = gains.data()[i];
      const bool same_sign = (grad.data()[i] > 0.0) == (velocity.data()[i] > 0.0);
      g = std::max(same_sign ? g * 0.8 : g + 0.2, 0.01);
    }
    velocity = momentum * velocity - o.learning_rate * gains.cwiseProduct(grad);
    y += velocity;
    y.rowwise() -= y.colwise().mean();
  }
  return y;
}

void write_scatter_png(const std::filesystem::path& path, const Matrix& coords,
                       const std::vector<int>& labels, int size) {
  if (coords.cols() != 2 || static_cast<std::size_t>(coords.rows()) != labels.size())
    fail("LabelMismatch", "scatter needs N x 2 coordinates and N labels");
  static constexpr unsigned char kPalette[][3] = {{31, 119, 180}, {255, 127, 14}, {44, 160, 44},
                                                  {214, 39, 40},  {148, 103, 189}, {140, 86, 75},
                                                  {227, 119, 194}, {127, 127, 127}, {188, 189, 34},
                                                  {23, 190, 207}};
  std::vector<int> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<unsigned char> pixels(static_cast<std::size_t>(size) * size * 3, 255);
  const int margin = size / 16, radius = std::max(2, size / 160);
  Eigen::RowVector2d lo = Eigen::RowVector2d::Zero(), hi = Eigen::RowVector2d::Ones();
  if (coords.rows() > 0) {
    lo = coords.colwise().minCoeff();
    hi = coords.colwise().maxCoeff();
  }
  const double span = std::max({hi[0] - lo[0], hi[1] - lo[1], 1e-12});
  const int inner = size - 2 * margin;
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    const auto rank = std::lower_bound(distinct.begin(), distinct.end(), labels[static_cast<std::size_t>(i)]) -
                      distinct.begin();
    const auto& colour = kPalette[rank % 10];
    const int cx = margin + static_cast<int>((coords(i, 0) - lo[0]) / span * inner);
    const int cy = size - 1 - margin - static_cast<int>((coords(i, 1) - lo[1]) / span * inner);
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx) {
        const int px = cx + dx, py = cy + dy;
        if (dx * dx + dy * dy > radius * radius || px < 0 || py < 0 || px >= size || py >= size) continue;
        std::copy(colour, colour + 3, &pixels[(static_cast<std::size_t>(py) * size + px) * 3]);
      }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(size);
  image.height = static_cast<png_uint_32>(size);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr))
    fail("WriteFailed", "cannot write " + path.string() + ": " + image.message);
}

// ---------------------------------------------------------------- purity

std::vector<int> kmeans_assign(const Matrix& points, int k, std::uint64_t seed, int restarts) {
  if (k < 1 || points.rows() < k) fail("LabelMismatch", "k-means needs 1 <= k <= N");
  std::mt19937_64 rng(seed);
  KMeansRun best;
  for (int r = 0; r < restarts; ++r) {
    auto run = kmeans_once(points, k, rng);
    if (run.inertia < best.inertia) best = std::move(run);
  }
  return best.assignment;
}

double cluster_purity(const Matrix& points, const std::vector<int>& labels, int k, std::uint64_t seed,
                      int restarts) {
  if (static_cast<std::size_t>(points.rows()) != labels.size())
    fail("LabelMismatch", std::to_string(labels.size()) + " labels for " + std::to_string(points.rows()) + " points");
  const std::set<int> distinct(labels.begin(), labels.end());
  if (static_cast<int>(distinct.size()) != k)
    fail("LabelMismatch", "k = " + std::to_string(k) + " but there are " + std::to_string(distinct.size()) +
                              " distinct labels");
  const auto assignment = kmeans_assign(points, k, seed, restarts);
  std::map<std::pair<int, int>, int> counts;
  for (std::size_t i = 0; i < labels.size(); ++i) ++counts[{assignment[i], labels[i]}];
  std::vector<int> majority(static_cast<std::size_t>(k), 0);
  for (const auto& [key, count] : counts)
    majority[static_cast<std::size_t>(key.first)] = std::max(majority[static_cast<std::size_t>(key.first)], count);
  return static_cast<double>(std::accumulate(majority.begin(), majority.end(), 0)) /
         static_cast<double>(labels.size());
}

}  // namespace deepest
