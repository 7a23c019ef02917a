#include "pllm/signal.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "pllm/io_util.hpp"
#include "pllm/rng.hpp"

namespace pllm {

namespace {

constexpr u64 kPhaseStream = 0x70686173ULL;   // stream tags for seed derivation
constexpr u64 kNoiseStream = 0x6e6f6973ULL;
constexpr u64 kWalkStream = 0x77616c6bULL;
constexpr u64 kFeatStream = 0x66656174ULL;

// Periodic kernel evaluated at a fraction of a cycle in [0,1), normalized so
// p(0) = 1 for every waveform. Working in cycle fractions (instead of radians)
// keeps the dt == T case exact: an integer cycle count has fraction 0.
double waveform_value(Waveform w, double cycle_frac) {
  switch (w) {
    case Waveform::cosine:
      return std::cos(2.0 * M_PI * cycle_frac);
    case Waveform::square:
      return (cycle_frac < 0.25 || cycle_frac >= 0.75) ? 1.0 : -1.0;
    case Waveform::triangle:
      return cycle_frac <= 0.5 ? 1.0 - 4.0 * cycle_frac : -3.0 + 4.0 * cycle_frac;
  }
  return 0.0;
}

double fractional(double x) {
  double f = x - std::floor(x);
  if (f >= 1.0) f = 0.0;
  return f;
}

void validate(const SequenceConfig& c) {
  if (c.length < 1) throw std::invalid_argument("sequence config: length must be >= 1");
  if (c.channels < 1) throw std::invalid_argument("sequence config: channels must be >= 1");
  if (!(c.dt_s > 0.0)) throw std::invalid_argument("sequence config: dt must be > 0");
  if (!(c.period_s > 0.0)) throw std::invalid_argument("sequence config: period must be > 0");
  if (c.noise_sigma < 0.0) throw std::invalid_argument("sequence config: noise_sigma must be >= 0");
  if (!std::isfinite(c.amplitude) || !std::isfinite(c.semantic_amp))
    throw std::invalid_argument("sequence config: amplitudes must be finite");
}

}  // namespace

const char* to_string(Waveform w) {
  switch (w) {
    case Waveform::cosine: return "cosine";
    case Waveform::square: return "square";
    case Waveform::triangle: return "triangle";
  }
  return "?";
}

const char* to_string(SemanticKind k) {
  switch (k) {
    case SemanticKind::none: return "none";
    case SemanticKind::linear_drift: return "linear_drift";
    case SemanticKind::random_walk: return "random_walk";
  }
  return "?";
}

std::optional<Waveform> waveform_from_string(const std::string& s) {
  if (s == "cosine") return Waveform::cosine;
  if (s == "square") return Waveform::square;
  if (s == "triangle") return Waveform::triangle;
  return std::nullopt;
}

std::optional<SemanticKind> semantic_from_string(const std::string& s) {
  if (s == "none") return SemanticKind::none;
  if (s == "linear_drift") return SemanticKind::linear_drift;
  if (s == "random_walk") return SemanticKind::random_walk;
  return std::nullopt;
}

PeriodicSequence generate_sequence(const SequenceConfig& config) {
  validate(config);

  const i64 L = config.length;
  const i64 D = config.channels;

  PeriodicSequence seq;
  seq.config = config;
  seq.omega = 2.0 * M_PI / config.period_s;
  seq.samples.assign(static_cast<size_t>(L * D), 0.0);

  // Channel phases in cycle fractions. Channel 0 stays at phase 0 so the
  // degenerate dt == T sampling yields exactly K there.
  std::vector<double> phase(static_cast<size_t>(D), 0.0);
  {
    Rng phase_rng(Rng::mix(config.seed, kPhaseStream));
    for (i64 d = 1; d < D; ++d) phase[static_cast<size_t>(d)] = phase_rng.next_unit();
  }

  // Semantic component s(t), shared across channels.
  std::vector<double> semantic(static_cast<size_t>(L), 0.0);
  switch (config.semantic) {
    case SemanticKind::none:
      break;
    case SemanticKind::linear_drift:
      for (i64 t = 0; t < L; ++t)
        semantic[static_cast<size_t>(t)] = config.drift_slope * (static_cast<double>(t) * config.dt_s);
      break;
    case SemanticKind::random_walk: {
      Rng walk_rng(Rng::mix(config.seed, kWalkStream));
      double s = 0.0;
      const double step = 0.1;
      for (i64 t = 0; t < L; ++t) {
        semantic[static_cast<size_t>(t)] = s;
        s += step * walk_rng.next_gaussian(0.0, 1.0);
        s = std::clamp(s, -1.0, 1.0);
      }
      break;
    }
  }

  Rng noise_rng(Rng::mix(config.seed, kNoiseStream));
  const double cycles_per_step = config.dt_s / config.period_s;
  for (i64 t = 0; t < L; ++t) {
    const double cycles = static_cast<double>(t) * cycles_per_step;
    for (i64 d = 0; d < D; ++d) {
      const double frac = fractional(cycles + phase[static_cast<size_t>(d)]);
      double x = config.amplitude * waveform_value(config.waveform, frac) +
                 config.semantic_amp * semantic[static_cast<size_t>(t)];
      if (config.noise_sigma > 0.0) x += noise_rng.next_gaussian(0.0, config.noise_sigma);
      seq.samples[static_cast<size_t>(t * D + d)] = x;
    }
  }
  return seq;
}

GroundTruth derive_ground_truth(const PeriodicSequence& seq) {
  const auto& c = seq.config;
  GroundTruth gt;
  const double elapsed_periods =
      static_cast<double>(c.length) * c.dt_s / c.period_s;
  // Robust floor: a window spanning exactly k periods must not round down to
  // k-1 through accumulated representation error (e.g. dt = 1/30).
  gt.repetition_count = static_cast<i64>(std::floor(elapsed_periods * (1.0 + 1e-12) + 1e-9));
  gt.rate_per_minute = 60.0 / c.period_s;
  return gt;
}

Mat to_frame_features(const PeriodicSequence& seq, int feat_dim) {
  if (feat_dim < 1) throw std::invalid_argument("to_frame_features: feat_dim must be >= 1");
  const i64 L = seq.config.length;
  const i64 D = seq.config.channels;

  Mat out(L, feat_dim);
  const i64 raw_cols = std::min<i64>(D, feat_dim);
  for (i64 t = 0; t < L; ++t)
    for (i64 j = 0; j < raw_cols; ++j) out(t, j) = seq.at(t, j);

  if (feat_dim > raw_cols) {
    Rng proj_rng(Rng::mix(seq.config.seed, kFeatStream));
    Mat proj(D, feat_dim - raw_cols);
    for (i64 i = 0; i < D; ++i)
      for (i64 j = 0; j < proj.cols(); ++j)
        proj(i, j) = proj_rng.next_gaussian(0.0, 1.0 / std::sqrt(static_cast<double>(D)));
    for (i64 t = 0; t < L; ++t) {
      for (i64 j = 0; j < proj.cols(); ++j) {
        double acc = 0.0;
        for (i64 d = 0; d < D; ++d) acc += seq.at(t, d) * proj(d, j);
        out(t, raw_cols + j) = acc;
      }
    }
  }
  return out;
}

namespace {
constexpr char kSeqMagic[5] = {'P', 'S', 'E', 'Q', '1'};
constexpr std::uint32_t kSeqVersion = 1;
}  // namespace

void save_sequence(const PeriodicSequence& seq, const std::string& path) {
  AtomicFileWriter w(path);
  w.write_bytes(kSeqMagic, sizeof(kSeqMagic));
  w.write_u32(kSeqVersion);
  w.write_u64(static_cast<u64>(seq.config.length));
  w.write_u64(static_cast<u64>(seq.config.channels));
  w.write_f64(seq.config.dt_s);
  w.write_f64(seq.config.period_s);
  w.write_f64(seq.config.amplitude);
  w.write_f64(seq.config.semantic_amp);
  w.write_f64(seq.config.drift_slope);
  w.write_f64(seq.config.noise_sigma);
  w.write_u32(static_cast<std::uint32_t>(seq.config.waveform));
  w.write_u32(static_cast<std::uint32_t>(seq.config.semantic));
  w.write_u64(seq.config.seed);
  for (double x : seq.samples) w.write_f64(x);
  w.commit();
}

PeriodicSequence load_sequence(const std::string& path) {
  FileReader r(path);
  char magic[5];
  r.read_bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kSeqMagic, sizeof(magic)) != 0)
    throw std::runtime_error(path + ": not a PSEQ1 sequence file");
  const std::uint32_t version = r.read_u32();
  if (version != kSeqVersion)
    throw std::runtime_error(path + ": unsupported sequence version " + std::to_string(version));

  SequenceConfig c;
  c.length = static_cast<i64>(r.read_u64());
  c.channels = static_cast<i64>(r.read_u64());
  c.dt_s = r.read_f64();
  c.period_s = r.read_f64();
  c.amplitude = r.read_f64();
  c.semantic_amp = r.read_f64();
  c.drift_slope = r.read_f64();
  c.noise_sigma = r.read_f64();
  c.waveform = static_cast<Waveform>(r.read_u32());
  c.semantic = static_cast<SemanticKind>(r.read_u32());
  c.seed = r.read_u64();

  PeriodicSequence seq;
  seq.config = c;
  seq.omega = 2.0 * M_PI / c.period_s;
  seq.samples.resize(static_cast<size_t>(c.length * c.channels));
  for (double& x : seq.samples) x = r.read_f64();
  return seq;
}

void save_sequence_csv(const PeriodicSequence& seq, const std::string& path) {
  AtomicFileWriter w(path);
  std::string header = "t,time_s";
  for (i64 d = 0; d < seq.config.channels; ++d) header += ",ch" + std::to_string(d);
  header += "\n";
  w.write_text(header);
  for (i64 t = 0; t < seq.config.length; ++t) {
    std::string row = std::to_string(t) + "," + format_double(static_cast<double>(t) * seq.config.dt_s);
    for (i64 d = 0; d < seq.config.channels; ++d) row += "," + format_double(seq.at(t, d));
    row += "\n";
    w.write_text(row);
  }
  w.commit();
}

}  // namespace pllm
