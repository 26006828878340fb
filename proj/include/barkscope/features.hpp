#ifndef BARKSCOPE_FEATURES_HPP
#define BARKSCOPE_FEATURES_HPP

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "barkscope/audio.hpp"

namespace barkscope {

enum class FeatureSetId { filterbank24, mfcc13, plp13, gemaps_lite };

inline constexpr std::array kAllFeatureSets{FeatureSetId::filterbank24, FeatureSetId::mfcc13,
                                            FeatureSetId::plp13, FeatureSetId::gemaps_lite};

std::string_view to_string(FeatureSetId id);
FeatureSetId feature_set_from_string(std::string_view s);
std::size_t feature_set_dimension(FeatureSetId id);
const std::vector<std::string>& feature_names(FeatureSetId id);

struct FeatureVector {
  FeatureSetId set_id = FeatureSetId::mfcc13;
  std::vector<std::string> names;
  std::vector<double> values;
  std::string clip_id;
  // Dimensions that carry the sentinel 0 because their statistic is undefined
  // for this clip (e.g. pitch statistics of a fully unvoiced clip).
  std::vector<std::string> sentinel_dims;

  double at(std::string_view name) const;
};

struct PitchContour {
  std::vector<std::optional<double>> f0_semitone;  // semitones above 27.5 Hz
  double frame_hop_s = 0.01;

  std::size_t voiced_count() const;
};

struct LoudnessContour {
  std::vector<double> loudness_db;  // dBFS, floored at -90
  double frame_hop_s = 0.01;
};

struct PitchConfig {
  double min_f0_hz = 60.0;
  double max_f0_hz = 1600.0;
  double clarity_threshold = 0.45;
  double octave_cost = 0.1;
};

inline constexpr double kLogFloorEpsilon = 1e-10;
inline constexpr double kLoudnessFloorDb = -90.0;

double hz_to_semitone(double f0_hz);

// Triangular mel filters over [0, rate/2], log energies averaged over frames.
FeatureVector mel_filterbank(const SpectralFrameSeq& spec, std::size_t n_bands = 24);

// Per-frame log-mel energies (frame x band, row-major); the building block of
// mel_filterbank and mfcc.
std::vector<double> log_mel_frames(const SpectralFrameSeq& spec, std::size_t n_bands = 24);

// Orthonormal DCT-II, first n_out coefficients.
std::vector<double> dct2(std::span<const double> x, std::size_t n_out);

FeatureVector mfcc(const SpectralFrameSeq& spec);

// Per-frame perceptual linear prediction state.
struct PlpFrame {
  std::vector<double> auditory;    // compressed critical-band spectrum
  std::vector<double> lpc;         // a[0..order], a[0] = 1
  std::vector<double> reflection;  // k[1..order]
  double error = 0.0;              // prediction error power
  std::vector<double> cepstrum;    // c[0..order]
};

// nullopt for frames whose autocorrelation is singular (all-zero power).
std::optional<PlpFrame> plp_frame(std::span<const double> power, double bin_hz,
                                  std::size_t order = 12);

// Band-centre frequencies (Hz) of the critical-band integration used by
// plp_frame for a spectrum of n_bins bins spaced bin_hz apart.
std::vector<double> plp_band_centers_hz(std::size_t n_bins, double bin_hz);

FeatureVector plp(const SpectralFrameSeq& spec, std::size_t order = 12);

double bark(double hz);

// Frame layout shared by the gemaps contours: 25 ms loudness frames with a
// 10 ms hop; pitch analysis windows are centred on the same frame centres.
PitchContour f0_contour(const AudioClip& clip, const PitchConfig& config = {});
LoudnessContour loudness_contour(const AudioClip& clip);

FeatureVector gemaps_lite(const AudioClip& clip, const PitchConfig& pitch = {});

// [a || b] with names suffixed _left / _right.
FeatureVector compare_feature_set(const FeatureVector& a, const FeatureVector& b);

// Extracts one feature set from a clip at the canonical rate.
FeatureVector extract(FeatureSetId id, const AudioClip& clip);

// The gemaps_lite dimensions whose value tracks absolute level and therefore
// changes under gain (excluded from the gain-invariance property).
const std::vector<std::string>& gemaps_level_dependent_dims();

// One CSV per feature set: clip_id,<names...>; rows in insertion order.
class FeatureStore {
 public:
  explicit FeatureStore(FeatureSetId id);

  FeatureSetId set_id() const { return set_id_; }
  void put(FeatureVector v);
  const FeatureVector* find(std::string_view clip_id) const;
  const FeatureVector& get(std::string_view clip_id) const;  // throws naming the id
  std::size_t size() const { return rows_.size(); }
  const std::vector<FeatureVector>& rows() const { return rows_; }

  void save(const std::filesystem::path& csv) const;
  static FeatureStore load(const std::filesystem::path& csv);

 private:
  FeatureSetId set_id_;
  std::vector<FeatureVector> rows_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

}  // namespace barkscope

#endif  // BARKSCOPE_FEATURES_HPP
