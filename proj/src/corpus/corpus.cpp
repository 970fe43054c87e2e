// Copyright 2026 ncvc project authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "ncvc/corpus.hpp"
#include "ncvc/rng.hpp"

namespace ncvc::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// PPG I/O
// ---------------------------------------------------------------------------

namespace {

constexpr char kPpgMagic[4] = {'P', 'P', 'G', '1'};

PPGSequence load_ppg_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open ppg file " + path);
  long classes = 0, frames = 0;
  if (!(is >> classes >> frames) || classes <= 0 || frames <= 0)
    throw std::runtime_error("bad text ppg header in " + path);
  PPGSequence ppg;
  ppg.posteriors.resize(classes, frames);
  for (long t = 0; t < frames; ++t)
    for (long c = 0; c < classes; ++c)
      if (!(is >> ppg.posteriors(c, t)))
        throw std::runtime_error("truncated text ppg " + path);
  return ppg;
}

}  // namespace

PPGSequence load_ppg(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open ppg file " + path);
  char magic[4] = {0, 0, 0, 0};
  is.read(magic, 4);
  PPGSequence ppg;
  if (is && std::memcmp(magic, kPpgMagic, 4) == 0) {
    uint32_t classes = 0, frames = 0;
    is.read(reinterpret_cast<char*>(&classes), 4);
    is.read(reinterpret_cast<char*>(&frames), 4);
    if (!is || classes == 0 || frames == 0)
      throw std::runtime_error("bad ppg header in " + path);
    std::vector<float> buf(static_cast<size_t>(classes) * frames);
    is.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!is) throw std::runtime_error("truncated ppg data in " + path);
    ppg.posteriors.resize(classes, frames);
    for (uint32_t t = 0; t < frames; ++t)
      for (uint32_t c = 0; c < classes; ++c)
        ppg.posteriors(c, t) =
            static_cast<double>(buf[static_cast<size_t>(t) * classes + c]);
  } else {
    ppg = load_ppg_text(path);
  }
  validate_ppg(ppg);
  return ppg;
}

void save_ppg(const PPGSequence& ppg, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write ppg file " + path);
  os.write(kPpgMagic, 4);
  const uint32_t classes = static_cast<uint32_t>(ppg.classes());
  const uint32_t frames = static_cast<uint32_t>(ppg.frames());
  os.write(reinterpret_cast<const char*>(&classes), 4);
  os.write(reinterpret_cast<const char*>(&frames), 4);
  std::vector<float> buf(static_cast<size_t>(classes) * frames);
  for (uint32_t t = 0; t < frames; ++t)
    for (uint32_t c = 0; c < classes; ++c)
      buf[static_cast<size_t>(t) * classes + c] =
          static_cast<float>(ppg.posteriors(c, t));
  os.write(reinterpret_cast<const char*>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!os) throw std::runtime_error("short write to " + path);
}

void validate_ppg(PPGSequence& ppg) {
  if (ppg.posteriors.minCoeff() < 0.0)
    throw std::runtime_error("ppg has negative entries");
  for (int t = 0; t < ppg.frames(); ++t) {
    const double s = ppg.posteriors.col(t).sum();
    if (std::abs(s - 1.0) > 1e-3) {
      std::ostringstream msg;
      msg << "not a posteriorgram: frame " << t << " sums to " << s;
      throw std::runtime_error(msg.str());
    }
    ppg.posteriors.col(t) /= s;
  }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::string CorpusManifest::resolve_wav(const Utterance& u) const {
  return base_dir.empty() ? u.wav_path
                          : (fs::path(base_dir) / u.wav_path).string();
}

std::string CorpusManifest::resolve_ppg(const Utterance& u) const {
  if (!u.ppg_path) throw std::runtime_error("utterance " + u.id + " has no ppg");
  return base_dir.empty() ? *u.ppg_path
                          : (fs::path(base_dir) / *u.ppg_path).string();
}

const Utterance* CorpusManifest::find(const std::string& id) const {
  for (const auto& u : entries)
    if (u.id == id) return &u;
  return nullptr;
}

std::string twin_id(const std::string& id) {
  constexpr std::string_view suffix = "_noisy";
  if (id.size() > suffix.size() &&
      id.compare(id.size() - suffix.size(), suffix.size(), suffix) == 0)
    return id.substr(0, id.size() - suffix.size());
  return id + std::string(suffix);
}

CorpusManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest " + path);
  CorpusManifest m;
  m.base_dir = fs::path(path).parent_path().string();

  std::string line;
  bool header_seen = false;
  std::set<std::string> ids;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (!header_seen) {
      if (j.value("kind", "") != "ncvc-manifest")
        throw std::runtime_error("manifest missing header line: " + path);
      m.sample_rate_hz = j.at("sample_rate_hz").get<int>();
      m.hop_length = j.at("hop_length").get<int>();
      header_seen = true;
      continue;
    }
    Utterance u;
    u.id = j.at("id").get<std::string>();
    u.speaker_id = j.at("speaker_id").get<std::string>();
    u.wav_path = j.at("wav_path").get<std::string>();
    const std::string attr = j.at("attribute").get<std::string>();
    if (attr == "clean") {
      u.attribute = AttributeVector::clean();
    } else if (attr == "noisy") {
      u.attribute = AttributeVector::noisy();
    } else {
      throw std::runtime_error("bad attribute '" + attr + "' for " + u.id);
    }
    if (j.contains("snr_db")) u.snr_db = j.at("snr_db").get<double>();
    if (j.contains("ppg_path"))
      u.ppg_path = j.at("ppg_path").get<std::string>();
    if (j.contains("source")) u.real_noise = j.at("source") == "real";

    if (!ids.insert(u.id).second)
      throw std::runtime_error("duplicate utterance id " + u.id);
    if (!u.attribute.is_clean() && !u.snr_db && !u.real_noise)
      throw std::runtime_error("noisy utterance " + u.id +
                               " lacks snr_db and is not marked real");
    if (!fs::exists(m.resolve_wav(u)))
      throw std::runtime_error("missing wav file " + m.resolve_wav(u));
    m.entries.push_back(std::move(u));
  }
  if (!header_seen) throw std::runtime_error("empty manifest " + path);
  return m;
}

void save_manifest(const CorpusManifest& m, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write manifest " + path);
  json header = {{"kind", "ncvc-manifest"},
                 {"sample_rate_hz", m.sample_rate_hz},
                 {"hop_length", m.hop_length}};
  os << header.dump() << "\n";
  for (const auto& u : m.entries) {
    json j = {{"id", u.id},
              {"speaker_id", u.speaker_id},
              {"wav_path", u.wav_path},
              {"attribute", u.attribute.is_clean() ? "clean" : "noisy"}};
    if (u.snr_db) j["snr_db"] = *u.snr_db;
    if (u.ppg_path) j["ppg_path"] = *u.ppg_path;
    if (u.real_noise) j["source"] = "real";
    os << j.dump() << "\n";
  }
  if (!os) throw std::runtime_error("short write to " + path);
}

// ---------------------------------------------------------------------------
// Paired corpus building
// ---------------------------------------------------------------------------

CorpusManifest build_paired_corpus(const CorpusManifest& clean_manifest,
                                   const std::vector<std::string>& noise_files,
                                   double snr_lo_db, double snr_hi_db,
                                   uint64_t seed, const std::string& out_dir) {
  if (noise_files.empty()) throw std::invalid_argument("empty noise set");
  if (snr_lo_db > snr_hi_db) throw std::invalid_argument("snr lo > hi");
  fs::create_directories(fs::path(out_dir) / "wav");
  fs::create_directories(fs::path(out_dir) / "ppg");

  std::vector<Waveform> noises;
  noises.reserve(noise_files.size());
  for (const auto& f : noise_files) noises.push_back(load_wav(f));

  CorpusManifest out;
  out.sample_rate_hz = clean_manifest.sample_rate_hz;
  out.hop_length = clean_manifest.hop_length;
  out.base_dir = out_dir;

  Rng rng(seed);
  for (const auto& u : clean_manifest.entries) {
    if (!u.attribute.is_clean()) continue;
    const Waveform clean = load_wav(clean_manifest.resolve_wav(u));

    const int noise_idx = rng.uniform_int(0, static_cast<int>(noises.size()) - 1);
    const Waveform& noise = noises[static_cast<size_t>(noise_idx)];
    const long offset = rng.uniform_int(0, static_cast<int>(noise.size()) - 1);
    const double snr = rng.uniform(snr_lo_db, snr_hi_db);

    double applied_scale = 1.0;
    const Waveform noisy = signals::mix_at_snr(clean, noise, snr, offset,
                                               &applied_scale);
    Waveform clean_out = clean;
    if (applied_scale != 1.0)
      for (auto& s : clean_out.samples)
        s = static_cast<float>(s * applied_scale);

    // Copy the ppg (shared by both twins) into the corpus directory.
    std::optional<std::string> ppg_rel;
    if (u.ppg_path) {
      ppg_rel = "ppg/" + u.id + ".ppg";
      const fs::path src = clean_manifest.resolve_ppg(u);
      const fs::path dst = fs::path(out_dir) / *ppg_rel;
      if (!fs::exists(dst) || !fs::equivalent(src, dst))
        fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
    }

    Utterance clean_entry = u;
    clean_entry.wav_path = "wav/" + u.id + ".wav";
    clean_entry.ppg_path = ppg_rel;
    save_wav(clean_out, (fs::path(out_dir) / clean_entry.wav_path).string());

    Utterance noisy_entry;
    noisy_entry.id = twin_id(u.id);
    noisy_entry.speaker_id = u.speaker_id;
    noisy_entry.attribute = AttributeVector::noisy();
    noisy_entry.snr_db = snr;
    noisy_entry.wav_path = "wav/" + noisy_entry.id + ".wav";
    noisy_entry.ppg_path = ppg_rel;
    save_wav(noisy, (fs::path(out_dir) / noisy_entry.wav_path).string());

    out.entries.push_back(std::move(clean_entry));
    out.entries.push_back(std::move(noisy_entry));
  }
  save_manifest(out, (fs::path(out_dir) / "manifest.jsonl").string());
  return out;
}

// ---------------------------------------------------------------------------
// Training pairs
// ---------------------------------------------------------------------------

std::vector<TrainingPairRef> make_training_pairs(const CorpusManifest& m,
                                                 PairReport* report,
                                                 bool include_identity) {
  std::vector<TrainingPairRef> pairs;
  PairReport local;
  for (const auto& u : m.entries) {
    if (!u.attribute.is_clean()) continue;  // walk each twin pair once
    const Utterance* twin = m.find(twin_id(u.id));
    if (!twin) {
      ++local.skipped_missing_twin;
      continue;
    }
    // Both directions; c labels the target attribute.
    pairs.push_back({&u, twin, twin->attribute});
    pairs.push_back({twin, &u, u.attribute});
    local.emitted += 2;
    if (include_identity) {
      pairs.push_back({&u, &u, u.attribute});
      pairs.push_back({twin, twin, twin->attribute});
      local.emitted += 2;
    }
  }
  if (report) *report = local;
  return pairs;
}

TrainingPair load_pair(const CorpusManifest& m, const TrainingPairRef& ref) {
  TrainingPair pair;
  pair.input_wav = load_wav(m.resolve_wav(*ref.input));
  pair.target_wav = load_wav(m.resolve_wav(*ref.target));
  pair.target_attribute = ref.target_attribute;
  pair.speaker_id = ref.input->speaker_id;
  pair.input_id = ref.input->id;
  return pair;
}

}  // namespace ncvc::corpus
