// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef NCVC_CORPUS_HPP
#define NCVC_CORPUS_HPP

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ncvc/attribute.hpp"
#include "ncvc/signals.hpp"

namespace ncvc::corpus {

using signals::Waveform;

// ---------------------------------------------------------------------------
// WAV I/O: RIFF 16-bit PCM mono. Inputs at other rates are resampled to 16 kHz
// with a linear-phase polyphase filter.
// ---------------------------------------------------------------------------

Waveform load_wav(const std::string& path);
void save_wav(const Waveform& w, const std::string& path);
Waveform resample(const Waveform& w, int target_rate_hz);

// ---------------------------------------------------------------------------
// PPG: per-frame phoneme posteriors at the 10 ms grid, (classes x frames).
// Binary format: magic "PPG1", u32 n_classes, u32 n_frames, then float32
// column-major frame data. A whitespace text form (n_classes n_frames data...)
// is accepted as well.
// ---------------------------------------------------------------------------

struct PPGSequence {
  Eigen::MatrixXd posteriors;

  int classes() const { return static_cast<int>(posteriors.rows()); }
  int frames() const { return static_cast<int>(posteriors.cols()); }
};

PPGSequence load_ppg(const std::string& path);
void save_ppg(const PPGSequence& ppg, const std::string& path);

// Renormalizes columns whose sum deviates by at most 1e-3; larger deviations
// or negative entries are errors.
void validate_ppg(PPGSequence& ppg);

// ---------------------------------------------------------------------------
// Manifest: one JSON object per line. The first line is a header carrying the
// corpus-level fields; wav/ppg paths are stored relative to the manifest.
// ---------------------------------------------------------------------------

struct Utterance {
  std::string id;
  std::string speaker_id;
  std::string wav_path;
  AttributeVector attribute = AttributeVector::clean();
  std::optional<double> snr_db;        // present iff noisy and simulated
  std::optional<std::string> ppg_path;
  bool real_noise = false;  // noisy recordings without a simulated SNR
};

struct CorpusManifest {
  std::vector<Utterance> entries;
  int sample_rate_hz = 16000;
  int hop_length = 160;
  std::string base_dir;  // directory of the manifest file; not serialized

  std::string resolve_wav(const Utterance& u) const;
  std::string resolve_ppg(const Utterance& u) const;
  const Utterance* find(const std::string& id) const;
};

CorpusManifest load_manifest(const std::string& path);
void save_manifest(const CorpusManifest& m, const std::string& path);

// The id of an utterance's opposite-attribute twin.
std::string twin_id(const std::string& id);

// ---------------------------------------------------------------------------
// Corpus building.
// ---------------------------------------------------------------------------

// For every clean utterance, draws snr ~ U[lo, hi] and a random noise segment
// (random file, random start offset, wrap-around looping) and writes the
// noisy twin. Clean files are copied into out_dir too, so the result is a
// self-contained corpus directory; when a mix needs peak normalization the
// copied clean twin is scaled jointly so the recorded SNR stays true.
// Deterministic for a fixed seed. Returns the combined manifest (saved as
// out_dir/manifest.jsonl).
CorpusManifest build_paired_corpus(const CorpusManifest& clean_manifest,
                                   const std::vector<std::string>& noise_files,
                                   double snr_lo_db, double snr_hi_db,
                                   uint64_t seed, const std::string& out_dir);

// Fully synthetic desk-scale corpus: per speaker, harmonic "vowel" sequences
// with a speaker-specific F0 base and spectral tilt, ground-truth PPGs, and
// clean/noisy twins mixed from generated colored-noise recordings.
struct SynthConfig {
  int n_speakers = 2;
  int n_utts_per_speaker = 4;
  uint64_t seed = 0;
  std::string out_dir;
  double snr_lo_db = 5.0;
  double snr_hi_db = 25.0;
  int n_phone_classes = 6;
  int sample_rate_hz = 16000;
  int hop_length = 160;
};

CorpusManifest synth_corpus(const SynthConfig& cfg);

// ---------------------------------------------------------------------------
// Training pairs (opposite-attribute reconstruction). The attribute vector
// labels the decoder TARGET: reconstructing the noisy twin from clean input
// uses c = noisy, and vice versa.
// ---------------------------------------------------------------------------

struct TrainingPairRef {
  const Utterance* input = nullptr;
  const Utterance* target = nullptr;
  AttributeVector target_attribute = AttributeVector::clean();
};

struct TrainingPair {
  Waveform input_wav;
  Waveform target_wav;
  AttributeVector target_attribute = AttributeVector::clean();
  std::string speaker_id;
  std::string input_id;
};

struct PairReport {
  int emitted = 0;
  int skipped_missing_twin = 0;
};

// Emits both directions per twin pair, in manifest order. When
// include_identity is set, same-attribute reconstruction pairs are added as
// well (off by default; the training recipe uses opposite pairs only).
std::vector<TrainingPairRef> make_training_pairs(const CorpusManifest& m,
                                                 PairReport* report = nullptr,
                                                 bool include_identity = false);

TrainingPair load_pair(const CorpusManifest& m, const TrainingPairRef& ref);

}  // namespace ncvc::corpus

#endif  // NCVC_CORPUS_HPP
