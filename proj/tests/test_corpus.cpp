// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>

#include "ncvc/corpus.hpp"
#include "ncvc/rng.hpp"
#include "oracles.hpp"

using namespace ncvc::corpus;
using ncvc::AttributeVector;
using ncvc::Rng;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const std::string& name) {
  const fs::path dir = fs::path("corpus_test_tmp") / name;
  fs::create_directories(dir);
  return dir;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  REQUIRE(is);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("wav: save/load round-trip within one quantization step") {
  const auto dir = tmp_dir("wav_rt");
  const auto w = oracles::make_sine(440.0, 1.0, 0.8);
  save_wav(w, (dir / "sine.wav").string());
  const auto back = load_wav((dir / "sine.wav").string());
  REQUIRE(back.samples.size() == w.samples.size());
  CHECK(back.sample_rate_hz == 16000);
  double max_diff = 0.0;
  for (size_t i = 0; i < w.samples.size(); ++i)
    max_diff = std::max(
        max_diff, std::abs(static_cast<double>(w.samples[i]) - back.samples[i]));
  CHECK(max_diff <= std::pow(2.0, -15.0));

  // Quantized values round-trip exactly.
  save_wav(back, (dir / "sine2.wav").string());
  const auto back2 = load_wav((dir / "sine2.wav").string());
  for (size_t i = 0; i < back.samples.size(); ++i)
    CHECK(back.samples[i] == back2.samples[i]);
}

TEST_CASE("wav: 8 kHz input is resampled to 16 kHz with twice the samples") {
  const auto dir = tmp_dir("wav_resample");
  const auto w = oracles::make_sine(500.0, 0.5, 0.5, 8000);
  save_wav(w, (dir / "low.wav").string());
  const auto up = load_wav((dir / "low.wav").string());
  CHECK(up.sample_rate_hz == 16000);
  CHECK(std::abs(static_cast<long>(up.samples.size()) -
                 2 * static_cast<long>(w.samples.size())) <= 1);
  // Content preserved: the 500 Hz tone survives with its amplitude.
  const auto mag = ncvc::signals::stft_magnitude(up, {1024, 256, 1024});
  int argmax = 0;
  mag.col(mag.cols() / 2).maxCoeff(&argmax);
  CHECK(argmax == 32);  // 500 * 1024 / 16000
}

TEST_CASE("wav: stereo files are rejected") {
  const auto dir = tmp_dir("wav_stereo");
  // Hand-written 2-channel header with 4 frames of silence.
  std::ofstream os(dir / "stereo.wav", std::ios::binary);
  auto u32 = [&](uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
  auto u16 = [&](uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
  os.write("RIFF", 4);
  u32(36 + 16);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  u32(16);
  u16(1);
  u16(2);  // stereo
  u32(16000);
  u32(64000);
  u16(4);
  u16(16);
  os.write("data", 4);
  u32(16);
  for (int i = 0; i < 8; ++i) u16(0);
  os.close();
  CHECK_THROWS_WITH_AS(load_wav((dir / "stereo.wav").string()),
                       doctest::Contains("mono required"), std::runtime_error);
}

TEST_CASE("wav: malformed header is a parse error") {
  const auto dir = tmp_dir("wav_bad");
  std::ofstream os(dir / "bad.wav", std::ios::binary);
  os << "this is not a wav file at all";
  os.close();
  CHECK_THROWS_AS(load_wav((dir / "bad.wav").string()), std::runtime_error);
}

TEST_CASE("ppg: binary round-trip and validation rules") {
  const auto dir = tmp_dir("ppg");
  PPGSequence ppg;
  ppg.posteriors = Eigen::MatrixXd::Identity(4, 4);

  SUBCASE("identity one-hot loads unchanged") {
    save_ppg(ppg, (dir / "id.ppg").string());
    const auto back = load_ppg((dir / "id.ppg").string());
    CHECK((back.posteriors - ppg.posteriors).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("small column-sum deviation renormalizes") {
    ppg.posteriors(0, 0) = 1.0005;
    save_ppg(ppg, (dir / "near.ppg").string());
    auto back = load_ppg((dir / "near.ppg").string());
    for (int t = 0; t < back.frames(); ++t)
      CHECK(back.posteriors.col(t).sum() == doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("large column-sum deviation is an error") {
    ppg.posteriors(0, 0) = 1.1;
    save_ppg(ppg, (dir / "far.ppg").string());
    CHECK_THROWS_WITH_AS(load_ppg((dir / "far.ppg").string()),
                         doctest::Contains("not a posteriorgram"),
                         std::runtime_error);
  }
  SUBCASE("negative entries are an error") {
    ppg.posteriors(1, 0) = -0.0005;
    ppg.posteriors(0, 0) = 1.0005;
    save_ppg(ppg, (dir / "neg.ppg").string());
    CHECK_THROWS_AS(load_ppg((dir / "neg.ppg").string()), std::runtime_error);
  }
  SUBCASE("text form loads too") {
    std::ofstream os(dir / "text.ppg");
    os << "2 3\n1 0\n0.5 0.5\n0 1\n";
    os.close();
    const auto back = load_ppg((dir / "text.ppg").string());
    CHECK(back.classes() == 2);
    CHECK(back.frames() == 3);
    CHECK(back.posteriors(0, 1) == 0.5);
  }
}

TEST_CASE("manifest: round-trip preserves every field") {
  const auto dir = tmp_dir("manifest");
  // Manifest loading checks wav existence, so put real files there.
  save_wav(oracles::make_sine(200.0, 0.1), (dir / "a.wav").string());
  save_wav(oracles::make_sine(300.0, 0.1), (dir / "b.wav").string());

  CorpusManifest m;
  m.sample_rate_hz = 16000;
  m.hop_length = 160;
  m.base_dir = dir.string();
  Utterance a;
  a.id = "utt_a";
  a.speaker_id = "spk0";
  a.wav_path = "a.wav";
  a.attribute = AttributeVector::clean();
  a.ppg_path = "a.ppg";
  Utterance b;
  b.id = "utt_a_noisy";
  b.speaker_id = "spk0";
  b.wav_path = "b.wav";
  b.attribute = AttributeVector::noisy();
  b.snr_db = 12.5;
  m.entries = {a, b};

  save_manifest(m, (dir / "manifest.jsonl").string());
  const auto back = load_manifest((dir / "manifest.jsonl").string());
  REQUIRE(back.entries.size() == 2);
  CHECK(back.sample_rate_hz == 16000);
  CHECK(back.hop_length == 160);
  CHECK(back.entries[0].id == "utt_a");
  CHECK(back.entries[0].speaker_id == "spk0");
  CHECK(back.entries[0].attribute.is_clean());
  CHECK(back.entries[0].ppg_path.value() == "a.ppg");
  CHECK(!back.entries[0].snr_db.has_value());
  CHECK(back.entries[1].attribute == AttributeVector::noisy());
  CHECK(back.entries[1].snr_db.value() == 12.5);

  // Serialize the parsed manifest again: identical bytes.
  save_manifest(back, (dir / "manifest2.jsonl").string());
  CHECK(slurp(dir / "manifest.jsonl") == slurp(dir / "manifest2.jsonl"));
}

TEST_CASE("manifest: noisy entries need snr_db or a real-source mark") {
  const auto dir = tmp_dir("manifest_bad");
  save_wav(oracles::make_sine(200.0, 0.1), (dir / "a.wav").string());
  std::ofstream os(dir / "manifest.jsonl");
  os << R"({"kind":"ncvc-manifest","sample_rate_hz":16000,"hop_length":160})"
     << "\n"
     << R"({"id":"x","speaker_id":"s","wav_path":"a.wav","attribute":"noisy"})"
     << "\n";
  os.close();
  CHECK_THROWS_AS(load_manifest((dir / "manifest.jsonl").string()),
                  std::runtime_error);
}

TEST_CASE("build_paired_corpus: SNR range, determinism, measured SNR") {
  const auto src = tmp_dir("paired_src");
  CorpusManifest clean;
  clean.base_dir = src.string();
  for (int i = 0; i < 4; ++i) {
    Utterance u;
    u.id = "u" + std::to_string(i);
    u.speaker_id = "spk" + std::to_string(i % 2);
    u.wav_path = u.id + ".wav";
    u.attribute = AttributeVector::clean();
    save_wav(oracles::make_sine(180.0 + 60.0 * i, 0.4, 0.3),
             (src / u.wav_path).string());
    clean.entries.push_back(u);
  }
  const auto noise_dir = tmp_dir("paired_noise");
  std::vector<std::string> noise_files;
  for (int i = 0; i < 2; ++i) {
    const auto p = noise_dir / ("n" + std::to_string(i) + ".wav");
    save_wav(oracles::make_noise(9000, 500 + i, 0.25), p.string());
    noise_files.push_back(p.string());
  }

  const auto out1 = tmp_dir("paired_out1");
  const auto m1 =
      build_paired_corpus(clean, noise_files, 5.0, 25.0, 42, out1.string());
  REQUIRE(m1.entries.size() == 8);

  for (const auto& u : m1.entries) {
    if (u.attribute.is_clean()) continue;
    REQUIRE(u.snr_db.has_value());
    CHECK(*u.snr_db >= 5.0);
    CHECK(*u.snr_db <= 25.0);
    const auto noisy = load_wav(m1.resolve_wav(u));
    const auto ref = load_wav(m1.resolve_wav(*m1.find(twin_id(u.id))));
    REQUIRE(noisy.samples.size() == ref.samples.size());
    CHECK(std::abs(ncvc::signals::measure_snr(ref, noisy) - *u.snr_db) < 0.01);
  }

  const auto out2 = tmp_dir("paired_out2");
  build_paired_corpus(clean, noise_files, 5.0, 25.0, 42, out2.string());
  CHECK(slurp(out1 / "manifest.jsonl") == slurp(out2 / "manifest.jsonl"));
  for (const auto& u : m1.entries)
    CHECK(slurp(out1 / u.wav_path) == slurp(out2 / u.wav_path));

  SUBCASE("empty noise set is an error") {
    CHECK_THROWS_AS(
        build_paired_corpus(clean, {}, 5.0, 25.0, 1, out1.string()),
        std::invalid_argument);
  }
}

TEST_CASE("make_training_pairs: both directions, target-labelled attribute") {
  const auto dir = tmp_dir("pairs");
  CorpusManifest m;
  m.base_dir = dir.string();
  save_wav(oracles::make_sine(200.0, 0.2), (dir / "c.wav").string());
  save_wav(oracles::make_sine(200.0, 0.2), (dir / "n.wav").string());
  save_wav(oracles::make_sine(250.0, 0.2), (dir / "o.wav").string());

  Utterance c;
  c.id = "utt";
  c.speaker_id = "spk0";
  c.wav_path = "c.wav";
  c.attribute = AttributeVector::clean();
  Utterance n;
  n.id = "utt_noisy";
  n.speaker_id = "spk0";
  n.wav_path = "n.wav";
  n.attribute = AttributeVector::noisy();
  n.snr_db = 10.0;
  Utterance orphan;
  orphan.id = "alone";
  orphan.speaker_id = "spk1";
  orphan.wav_path = "o.wav";
  orphan.attribute = AttributeVector::clean();
  m.entries = {c, n, orphan};

  PairReport report;
  const auto pairs = make_training_pairs(m, &report);
  CHECK(report.emitted == 2);
  CHECK(report.skipped_missing_twin == 1);
  REQUIRE(pairs.size() == 2);

  // Input clean -> target noisy, attribute labels the target: (0,1).
  CHECK(pairs[0].input->id == "utt");
  CHECK(pairs[0].target->id == "utt_noisy");
  CHECK(pairs[0].target_attribute.vec()(0) == 0.0);
  CHECK(pairs[0].target_attribute.vec()(1) == 1.0);
  // Input noisy -> target clean: (1,0).
  CHECK(pairs[1].input->id == "utt_noisy");
  CHECK(pairs[1].target_attribute.vec()(0) == 1.0);
  CHECK(pairs[1].target_attribute.vec()(1) == 0.0);

  for (const auto& p : pairs) {
    CHECK(!(p.input->attribute == p.target->attribute));
    CHECK(p.target_attribute == p.target->attribute);
    CHECK(p.input->speaker_id == p.target->speaker_id);
  }

  const auto loaded = load_pair(m, pairs[0]);
  CHECK(loaded.speaker_id == "spk0");
  CHECK(loaded.input_id == "utt");
  CHECK(loaded.input_wav.samples.size() == loaded.target_wav.samples.size());

  SUBCASE("identity pairs only behind the flag") {
    const auto with_id = make_training_pairs(m, nullptr, true);
    CHECK(with_id.size() == 4);
    CHECK(with_id[2].input->id == with_id[2].target->id);
  }
}

TEST_CASE("synth_corpus: deterministic bytes and valid PPGs") {
  SynthConfig cfg;
  cfg.n_speakers = 2;
  cfg.n_utts_per_speaker = 4;
  cfg.seed = 7;
  cfg.out_dir = tmp_dir("synth1").string();
  const auto m1 = synth_corpus(cfg);
  REQUIRE(m1.entries.size() == 16);  // 8 clean + 8 noisy twins

  cfg.out_dir = tmp_dir("synth2").string();
  const auto m2 = synth_corpus(cfg);
  CHECK(slurp(fs::path(m1.base_dir) / "manifest.jsonl") ==
        slurp(fs::path(m2.base_dir) / "manifest.jsonl"));
  for (const auto& u : m1.entries) {
    CHECK(slurp(fs::path(m1.base_dir) / u.wav_path) ==
          slurp(fs::path(m2.base_dir) / u.wav_path));
    if (u.ppg_path)
      CHECK(slurp(fs::path(m1.base_dir) / *u.ppg_path) ==
            slurp(fs::path(m2.base_dir) / *u.ppg_path));
  }

  for (const auto& u : m1.entries) {
    const auto w = load_wav(m1.resolve_wav(u));
    const auto ppg = load_ppg(m1.resolve_ppg(u));
    // 10 ms grid: frame count follows ceil(samples/hop) and lengths are
    // whole frames by construction.
    CHECK(ppg.frames() == (w.size() + 159) / 160);
    CHECK(w.size() % 160 == 0);
    for (int t = 0; t < ppg.frames(); ++t)
      CHECK(std::abs(ppg.posteriors.col(t).sum() - 1.0) <= 1e-4);
    if (!u.attribute.is_clean()) {
      REQUIRE(u.snr_db.has_value());
      CHECK(*u.snr_db >= 5.0);
      CHECK(*u.snr_db <= 25.0);
    }
  }

  // Twins: pair count and speaker bookkeeping.
  PairReport report;
  const auto pairs = make_training_pairs(m1, &report);
  CHECK(report.emitted == 16);
  CHECK(report.skipped_missing_twin == 0);
}
