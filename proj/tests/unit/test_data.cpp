#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "eogstage/common/error.hpp"
#include "eogstage/common/io.hpp"
#include "eogstage/common/rng.hpp"
#include "eogstage/data/dataset.hpp"
#include "eogstage/data/edf.hpp"
#include "eogstage/data/hypnogram.hpp"
#include "eogstage/data/synth.hpp"
#include "json.hpp"

using namespace eogstage;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = EOGSTAGE_FIXTURE_DIR;

nlohmann::json expected_edf() {
  return nlohmann::json::parse(io::read_text(kFixtures / "edf_expected.json"));
}

struct TempDir {
  TempDir() {
    path = fs::temp_directory_path() /
           ("eogstage_data_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path path;
};

template <typename Fn>
EdfError::Kind edf_error_kind(Fn&& fn, std::size_t* offset = nullptr) {
  try {
    fn();
  } catch (const EdfError& e) {
    if (offset) *offset = e.offset();
    return e.kind();
  }
  ADD_FAILURE() << "no EdfError thrown";
  return EdfError::Kind::TooShort;
}

// A random but valid recording for round-trip fuzzing.
EdfRecording random_recording(Rng& rng) {
  EdfRecording rec;
  rec.patient_id = "fuzz " + std::to_string(rng.below(1000));
  rec.recording_id = "round trip";
  rec.num_records = 1 + rng.below(5);
  rec.record_duration = rng.uniform() < 0.5 ? 30.0 : 1.0;
  const std::size_t ns = 1 + rng.below(4);
  for (std::size_t i = 0; i < ns; ++i) {
    EdfSignal s;
    s.label = "sig" + std::to_string(i);
    s.physical_dimension = "uV";
    s.physical_min = -std::round(rng.uniform(1, 1000));
    s.physical_max = std::round(rng.uniform(1, 1000));
    s.digital_min = -static_cast<int>(rng.below(32769));
    s.digital_max = s.digital_min + 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(32767 - s.digital_min)));
    s.samples_per_record = 1 + rng.below(300);
    for (std::size_t k = 0; k < rec.num_records * s.samples_per_record; ++k)
      s.digital.push_back(static_cast<std::int16_t>(
          s.digital_min + static_cast<int>(rng.below(static_cast<std::uint64_t>(s.digital_max - s.digital_min + 1)))));
    rec.signals.push_back(std::move(s));
  }
  return rec;
}

EdfRecording single_channel(std::size_t records, std::size_t spr, const std::vector<double>& phys) {
  EdfRecording rec;
  rec.num_records = records;
  rec.record_duration = 30;
  EdfSignal s;
  s.label = "EOG";
  s.physical_min = -500;
  s.physical_max = 500;
  s.digital_min = -32768;
  s.digital_max = 32767;
  s.samples_per_record = spr;
  for (double v : phys) s.digital.push_back(s.to_digital(v));
  rec.signals.push_back(std::move(s));
  return rec;
}

Hypnogram hyp_of(const std::vector<Stage>& stages) {
  Hypnogram h;
  for (std::size_t i = 0; i < stages.size(); ++i) h.entries.push_back({i, stages[i], ""});
  return h;
}

// Recording whose epochs carry the given epoch indices (gaps allowed).
RecordingEpochs fake_recording(const std::vector<std::size_t>& indices, const std::string& id) {
  RecordingEpochs r;
  r.subject = id;
  r.recording = id;
  r.samples_per_epoch = 2;
  for (auto i : indices)
    r.epochs.push_back({id, id, i, {static_cast<float>(i), 0.f}, static_cast<Stage>(i % 5)});
  return r;
}

}  // namespace

// ---- EDF ---------------------------------------------------------------------

TEST(Edf, GoldenFixtureHeader) {
  auto exp = expected_edf()["golden"];
  auto rec = read_edf(kFixtures / "golden.edf");
  EXPECT_EQ(rec.version, exp["version"]);
  EXPECT_EQ(rec.patient_id, exp["patient_id"]);
  EXPECT_EQ(rec.recording_id, exp["recording_id"]);
  EXPECT_EQ(rec.start_date, exp["start_date"]);
  EXPECT_EQ(rec.start_time, exp["start_time"]);
  EXPECT_EQ(rec.num_records, exp["num_records"]);
  EXPECT_EQ(rec.record_duration, exp["record_duration"]);
  EXPECT_EQ(rec.header_bytes(), exp["header_bytes"]);
  ASSERT_EQ(rec.signals.size(), exp["signals"].size());
  for (std::size_t i = 0; i < rec.signals.size(); ++i) {
    const auto& s = rec.signals[i];
    const auto& e = exp["signals"][i];
    EXPECT_EQ(s.label, e["label"]);
    EXPECT_EQ(s.transducer, e["transducer"]);
    EXPECT_EQ(s.physical_dimension, e["physical_dimension"]);
    EXPECT_EQ(s.physical_min, e["physical_min"]);
    EXPECT_EQ(s.physical_max, e["physical_max"]);
    EXPECT_EQ(s.digital_min, e["digital_min"]);
    EXPECT_EQ(s.digital_max, e["digital_max"]);
    EXPECT_EQ(s.prefiltering, e["prefiltering"]);
    EXPECT_EQ(s.samples_per_record, e["samples_per_record"]);
    EXPECT_EQ(s.digital.size(), e["total_samples"]);
    long long sum = 0;
    for (auto v : s.digital) sum += v;
    EXPECT_EQ(sum, e["digital_sum"].get<long long>());
    for (const auto& pick : e["picks"]) {
      auto idx = pick[0].get<std::size_t>();
      EXPECT_EQ(s.digital[idx], pick[1].get<int>());
      EXPECT_NEAR(s.to_physical(s.digital[idx]), pick[2].get<double>(), 1e-12);
    }
  }
  EXPECT_DOUBLE_EQ(rec.sampling_rate(1), 100.0);
  EXPECT_EQ(rec.find_signal("EOG horizontal"), 1u);
  EXPECT_EQ(edf_error_kind([&] { rec.find_signal("EOG left"); }), EdfError::Kind::MissingSignal);
}

TEST(Edf, ScalingEndpointsAndHandExample) {
  auto rec = read_edf(kFixtures / "golden.edf");
  const auto& s = rec.signals[0];
  // The fixture forces samples 0, 1, 2 to dig_min, dig_max and 0.
  EXPECT_EQ(s.to_physical(s.digital[0]), -250.0);
  EXPECT_EQ(s.to_physical(s.digital[1]), 250.0);
  EXPECT_NEAR(s.to_physical(s.digital[2]), 2048.0 * 500.0 / 4095.0 - 250.0, 1e-12);
  EXPECT_NEAR(s.to_physical(0), 0.06105, 1e-5);
}

TEST(Edf, DesignatedErrorsForBrokenFixtures) {
  auto exp = expected_edf()["golden"];
  std::size_t offset = 0;
  EXPECT_EQ(edf_error_kind([] { read_edf(kFixtures / "truncated.edf"); }), EdfError::Kind::Truncated);
  EXPECT_EQ(edf_error_kind([] { read_edf(kFixtures / "bad_header.edf"); }, &offset),
            EdfError::Kind::BadField);
  EXPECT_EQ(offset, exp["bad_header_offset"].get<std::size_t>());
  EXPECT_EQ(edf_error_kind([] { read_edf(kFixtures / "bad_range.edf"); }, &offset),
            EdfError::Kind::BadRange);
  EXPECT_EQ(offset, exp["bad_range_offset"].get<std::size_t>());
  std::vector<std::uint8_t> small(100, ' ');
  EXPECT_EQ(edf_error_kind([&] { parse_edf(small); }), EdfError::Kind::TooShort);
}

TEST(Edf, PrefixesAndCorruptionNeverCrash) {
  const auto bytes = io::read_bytes(kFixtures / "golden.edf");
  for (std::size_t n = 0; n < 1200; ++n) {
    std::span<const std::uint8_t> prefix(bytes.data(), n);
    EXPECT_THROW(parse_edf(prefix), EdfError) << n;
  }
  Rng rng(5);
  for (int trial = 0; trial < 2000; ++trial) {
    auto b = bytes;
    const std::size_t k = 1 + rng.below(4);
    for (std::size_t i = 0; i < k; ++i) b[rng.below(1024)] = static_cast<std::uint8_t>(rng.below(256));
    try {
      parse_edf(b);
    } catch (const DataError&) {
    }
  }
}

TEST(Edf, RoundTripIsDigitallyExact) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    auto rec = random_recording(rng);
    auto parsed = parse_edf(write_edf(rec));
    ASSERT_EQ(parsed.signals.size(), rec.signals.size());
    EXPECT_EQ(parsed.num_records, rec.num_records);
    EXPECT_EQ(parsed.record_duration, rec.record_duration);
    EXPECT_EQ(parsed.patient_id, rec.patient_id);
    for (std::size_t i = 0; i < rec.signals.size(); ++i) {
      const auto& a = rec.signals[i];
      const auto& b = parsed.signals[i];
      EXPECT_EQ(a.digital, b.digital);
      EXPECT_EQ(a.physical_min, b.physical_min);
      EXPECT_EQ(a.physical_max, b.physical_max);
      EXPECT_EQ(a.digital_min, b.digital_min);
      EXPECT_EQ(a.digital_max, b.digital_max);
    }
  }
}

TEST(Edf, PhysicalValuesWithinOneQuantisationStep) {
  Rng rng(12);
  std::vector<double> phys(3000);
  for (auto& v : phys) v = rng.uniform(-499, 499);
  auto rec = single_channel(1, 3000, phys);
  auto parsed = parse_edf(write_edf(rec));
  const auto& s = parsed.signals[0];
  const double step = (s.physical_max - s.physical_min) / (s.digital_max - s.digital_min);
  auto back = s.physical();
  for (std::size_t i = 0; i < phys.size(); ++i) EXPECT_LE(std::abs(back[i] - phys[i]), step);
}

TEST(Edf, AnnotationHypnogram) {
  auto exp = expected_edf()["annotations"];
  auto rec = read_edf(kFixtures / "hypnogram_annotations.edf");
  EXPECT_EQ(rec.reserved, "EDF+C");
  auto ann = parse_edf_annotations(rec);
  ASSERT_EQ(ann.size(), 8u);
  EXPECT_EQ(ann[0].label, "Sleep stage W");
  EXPECT_EQ(ann[0].duration, 90.0);
  EXPECT_EQ(ann[3].onset, 180.0);
  auto h = read_hypnogram(kFixtures / "hypnogram_annotations.edf");
  auto labels = exp["labels"].get<std::vector<std::string>>();
  auto stages = exp["stages"].get<std::vector<std::string>>();
  ASSERT_EQ(h.size(), labels.size());
  for (std::size_t i = 0; i < h.size(); ++i) {
    EXPECT_EQ(h.entries[i].epoch_index, i);
    EXPECT_EQ(h.entries[i].original, labels[i]);
    EXPECT_EQ(stage_name(h.entries[i].stage), stages[i]);
  }
}

TEST(Edf, AnnotationDurationsMustBeWholeEpochs) {
  EXPECT_THROW(hypnogram_from_annotations({{0, 45, "Sleep stage W"}}, "x"), DataError);
  EXPECT_THROW(hypnogram_from_annotations({{0, 30, "Sleep stage W"}, {60, 30, "Sleep stage 1"}}, "x"),
               DataError);
  auto h = hypnogram_from_annotations({{30, 60, "Sleep stage 2"}, {0, 30, "Sleep stage W"}}, "x");
  ASSERT_EQ(h.size(), 3u);
  EXPECT_EQ(h.entries[2].stage, Stage::N2);
}

// ---- labels and hypnograms ----------------------------------------------------

TEST(Labels, MappingIsTotalOverTheVocabulary) {
  EXPECT_EQ(map_label("Sleep stage 4"), Stage::N3);
  EXPECT_EQ(map_label("Sleep stage 3"), Stage::N3);
  EXPECT_EQ(map_label("Sleep stage W"), Stage::W);
  EXPECT_EQ(map_label("Sleep stage 1"), Stage::N1);
  EXPECT_EQ(map_label("Sleep stage 2"), Stage::N2);
  EXPECT_EQ(map_label("Sleep stage R"), Stage::REM);
  EXPECT_EQ(map_label("Sleep stage ?"), Stage::Excluded);
  EXPECT_EQ(map_label("Movement time"), Stage::Excluded);
  EXPECT_EQ(map_label("M"), Stage::Excluded);
  EXPECT_EQ(map_label("Unknown"), Stage::Excluded);
  EXPECT_EQ(map_label("rem"), Stage::REM);
  EXPECT_EQ(map_label("sleep STAGE r"), Stage::REM);
  EXPECT_EQ(map_label(" n2 "), Stage::N2);
  EXPECT_EQ(map_label("Wake"), Stage::W);
  for (const char* bad : {"Sleep stage 5", "N5", "", "Sleep stage", "Arousal", "REMS"}) {
    try {
      map_label(bad);
      ADD_FAILURE() << bad;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(std::string("'") + bad + "'"), std::string::npos);
    }
  }
}

TEST(Hypnogram, CsvRows) {
  std::string text = "epoch_index,label\n";
  for (int i = 0; i < 12; ++i) text += std::to_string(i) + ",W\n";
  text += "12,REM\r\n13,Sleep stage 4\n\n";
  auto h = parse_hypnogram_csv(text, "t.csv");
  ASSERT_EQ(h.size(), 14u);
  EXPECT_EQ(h.entries[12].epoch_index, 12u);
  EXPECT_EQ(h.entries[12].stage, Stage::REM);
  EXPECT_EQ(h.entries[12].original, "REM");
  EXPECT_EQ(h.entries[13].stage, Stage::N3);
  EXPECT_EQ(parse_hypnogram_csv("0,N1\n1,N2\n", "x").size(), 2u);  // header optional

  EXPECT_THROW(parse_hypnogram_csv("0,W\n2,W\n", "x"), DataError);
  EXPECT_THROW(parse_hypnogram_csv("0;W\n", "x"), DataError);
  try {
    parse_hypnogram_csv("0,W\n1,Stage X\n", "h.csv");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("Stage X"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("h.csv:2"), std::string::npos);
  }
  auto again = parse_hypnogram_csv(write_hypnogram_csv(h), "y");
  ASSERT_EQ(again.size(), h.size());
  for (std::size_t i = 0; i < h.size(); ++i) EXPECT_EQ(again.entries[i].stage, h.entries[i].stage);
}

// ---- epochs ---------------------------------------------------------------------

TEST(Segment, GoldenRecordingEpochs) {
  auto rec = read_edf(kFixtures / "golden.edf");
  auto hyp = hyp_of({Stage::W, Stage::Excluded, Stage::N2, Stage::REM, Stage::N1});
  auto r = segment_epochs(rec, hyp, "EOG horizontal", "s1", "s1_r1");
  EXPECT_EQ(r.samples_per_epoch, 3000u);
  EXPECT_EQ(r.excluded, 1u);
  ASSERT_EQ(r.epochs.size(), 3u);  // 4 signal epochs, 5 scored, one excluded
  EXPECT_EQ(r.epochs[1].epoch_index, 2u);
  EXPECT_EQ(r.epochs[2].stage, Stage::REM);
  double sum = 0, sq = 0;
  for (const auto& e : r.epochs)
    for (float v : e.signal) {
      sum += v;
      sq += static_cast<double>(v) * v;
    }
  const double n = 3 * 3000.0;
  EXPECT_NEAR(sum / n, 0.0, 1e-5);
  EXPECT_NEAR(sq / n, 1.0, 1e-4);

  // Normalisation uses the retained epochs only: one recomputed sample.
  const auto& s = rec.signals[1];
  double m = 0, v = 0;
  for (std::size_t e : {0, 2, 3})
    for (std::size_t i = 0; i < 3000; ++i) m += s.to_physical(s.digital[e * 3000 + i]);
  m /= n;
  for (std::size_t e : {0, 2, 3})
    for (std::size_t i = 0; i < 3000; ++i) v += std::pow(s.to_physical(s.digital[e * 3000 + i]) - m, 2);
  v /= n;
  EXPECT_NEAR(r.epochs[1].signal[17], (s.to_physical(s.digital[2 * 3000 + 17]) - m) / std::sqrt(v), 1e-5);

  EXPECT_THROW(segment_epochs(rec, hyp, "EOG left", "s", "r"), EdfError);
  EXPECT_THROW(segment_epochs(rec, hyp_of({Stage::Excluded, Stage::Excluded}), "EOG horizontal", "s", "r"),
               DataError);
}

TEST(Segment, EightHoursIs960Epochs) {
  Rng rng(3);
  std::vector<double> phys(960 * 3);
  for (auto& v : phys) v = rng.uniform(-100, 100);
  auto rec = single_channel(960, 3, phys);  // 0.1 Hz keeps the test small
  auto r = segment_epochs(rec, hyp_of(std::vector<Stage>(2000, Stage::N2)), "EOG", "s", "r");
  EXPECT_EQ(r.epochs.size(), 960u);
  EXPECT_EQ(8 * 3600 / 30, 960);
}

TEST(Segment, RateMustGiveWholeEpochs) {
  std::vector<double> ramp(210);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  auto rec = single_channel(30, 7, ramp);
  rec.record_duration = 2.0;  // 3.5 Hz * 30 s = 105 samples: fine
  EXPECT_EQ(segment_epochs(rec, hyp_of({Stage::W, Stage::N1}), "EOG", "s", "r").samples_per_epoch, 105u);
  rec.record_duration = 2.3;  // 91.3 samples per epoch
  EXPECT_THROW(segment_epochs(rec, hyp_of({Stage::W}), "EOG", "s", "r"), DataError);
}

// ---- windows --------------------------------------------------------------------

TEST(Windows, CountFormula) {
  EXPECT_EQ(window_count(100, 9, 1), 92u);
  EXPECT_EQ(window_count(100, 9, 4), 23u);
  EXPECT_EQ(window_count(8, 9, 1), 0u);
  std::vector<std::size_t> idx(100);
  std::iota(idx.begin(), idx.end(), 0);
  auto rec = fake_recording(idx, "a");
  EXPECT_EQ(build_windows(rec, 9, 1).size(), 92u);
  EXPECT_EQ(build_windows(rec, 9, 4).size(), 23u);
  idx.resize(8);
  EXPECT_TRUE(build_windows(fake_recording(idx, "a"), 9, 1).empty());
  EXPECT_THROW(build_windows(rec, 8, 1), ConfigError);
  EXPECT_THROW(build_windows(rec, 9, 0), ConfigError);
}

TEST(Windows, FuzzGridMatchesFormula) {
  for (std::size_t e = 0; e <= 60; ++e)
    for (std::size_t w = 1; w <= 15; w += 2)
      for (std::size_t s = 1; s <= 8; ++s) {
        std::vector<std::size_t> idx(e);
        std::iota(idx.begin(), idx.end(), 0);
        auto got = build_windows(fake_recording(idx, "r"), w, s);
        std::size_t brute = 0;
        for (std::size_t start = 0; start + w <= e; start += s) ++brute;
        ASSERT_EQ(got.size(), brute);
        ASSERT_EQ(got.size(), window_count(e, w, s));
        for (const auto& win : got)
          ASSERT_EQ(win.label, static_cast<Stage>((win.start_epoch + (w - 1) / 2) % 5));
      }
}

TEST(Windows, NeverSpanGapsOrRecordings) {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Dataset ds;
    for (int r = 0; r < 3; ++r) {
      std::vector<std::size_t> idx;
      std::size_t e = 0;
      for (int k = 0; k < 80; ++k) {
        e += rng.uniform() < 0.05 ? 2 + rng.below(3) : 1;  // occasional excluded gap
        idx.push_back(e);
      }
      ds.recordings.push_back(fake_recording(idx, "r" + std::to_string(r)));
    }
    const std::size_t w = 1 + 2 * rng.below(5), stride = 1 + rng.below(4);
    auto wins = ds.windows(w, stride);
    std::size_t expect = 0;
    for (const auto& rec : ds.recordings) {
      std::size_t run = 1;
      for (std::size_t i = 1; i <= rec.epochs.size(); ++i) {
        if (i < rec.epochs.size() && rec.epochs[i].epoch_index == rec.epochs[i - 1].epoch_index + 1) {
          ++run;
          continue;
        }
        expect += window_count(run, w, stride);
        run = 1;
      }
    }
    EXPECT_EQ(wins.size(), expect);
    for (const auto& win : wins) {
      const auto& rec = ds.recordings[win.recording];
      ASSERT_LE(win.first + w, rec.epochs.size());
      for (std::size_t k = 1; k < w; ++k)
        ASSERT_EQ(rec.epochs[win.first + k].epoch_index, rec.epochs[win.first].epoch_index + k);
      EXPECT_EQ(win.label, rec.epochs[win.first + (w - 1) / 2].stage);
    }
    auto [x, labels] = ds.batch({wins.begin(), wins.begin() + std::min<std::size_t>(3, wins.size())}, w);
    for (std::size_t b = 0; b < labels.size(); ++b)
      EXPECT_EQ(x.at({b, 0, 0, 0}), static_cast<float>(ds.recordings[wins[b].recording].epochs[wins[b].first].epoch_index));
  }
}

// ---- folds ------------------------------------------------------------------------

TEST(Folds, PartitionForEveryK) {
  std::vector<std::string> subjects;
  for (int i = 0; i < 13; ++i) subjects.push_back("s" + std::to_string(i));
  for (std::size_t k = 2; k <= subjects.size(); ++k) {
    auto folds = kfold_split(subjects, k, 99);
    ASSERT_EQ(folds.size(), k);
    std::multiset<std::string> all;
    for (const auto& f : folds) {
      EXPECT_FALSE(f.test.empty());
      EXPECT_EQ(f.test.size() + f.train.size(), subjects.size());
      for (const auto& t : f.test) {
        all.insert(t);
        EXPECT_EQ(std::count(f.train.begin(), f.train.end(), t), 0);
      }
    }
    EXPECT_EQ(all, std::multiset<std::string>(subjects.begin(), subjects.end()));
  }
  EXPECT_THROW(kfold_split(subjects, 14, 1), ConfigError);
  EXPECT_THROW(kfold_split(subjects, 1, 1), ConfigError);
}

TEST(Folds, SeededAndLeaveOneOut) {
  std::vector<std::string> subjects;
  for (int i = 0; i < 20; ++i) subjects.push_back(fmt::format("s{:02}", i));
  auto a = kfold_split(subjects, 20, 5), b = kfold_split(subjects, 20, 5);
  for (std::size_t f = 0; f < 20; ++f) {
    EXPECT_EQ(a[f].test, b[f].test);
    EXPECT_EQ(a[f].test.size(), 1u);
  }
  auto c = kfold_split(subjects, 4, 6);
  bool differs = false;
  auto d = kfold_split(subjects, 4, 5);
  for (std::size_t f = 0; f < 4; ++f) differs = differs || c[f].test != d[f].test;
  EXPECT_TRUE(differs);
}

// ---- manifest and synthetic data ---------------------------------------------

TEST(Synth, DatasetIsByteIdenticalAndLoads) {
  TempDir dir;
  SynthConfig c;
  c.subjects = 2;
  c.recordings_per_subject = 2;
  c.epochs_per_recording = 15;
  c.excluded_rate = 0.1;
  auto m1 = synth_dataset(c, 7, dir.path / "a");
  synth_dataset(c, 7, dir.path / "b");
  std::size_t files = 0;
  for (const auto& entry : fs::directory_iterator(dir.path / "a")) {
    ++files;
    EXPECT_EQ(io::read_bytes(entry.path()), io::read_bytes(dir.path / "b" / entry.path().filename()))
        << entry.path();
  }
  EXPECT_EQ(files, 2u * 2 * 2 + 2);
  synth_dataset(c, 8, dir.path / "c");
  EXPECT_NE(io::read_bytes(dir.path / "a" / "s01_r1.edf"), io::read_bytes(dir.path / "c" / "s01_r1.edf"));

  auto manifest = load_manifest(m1);
  EXPECT_EQ(manifest.recordings.size(), 4u);
  EXPECT_EQ(manifest.subjects(), (std::vector<std::string>{"s01", "s02"}));
  for (const auto& r : manifest.recordings) {
    auto edf = read_edf(r.edf);
    EXPECT_EQ(edf.num_records, 15u);
    EXPECT_EQ(edf.signals.size(), 2u);
  }
  auto ds = load_dataset(manifest, {"s02"});
  ASSERT_EQ(ds.recordings.size(), 2u);
  EXPECT_EQ(ds.recordings[0].subject, "s02");
  EXPECT_EQ(ds.samples_per_epoch(), 3000u);
  for (const auto& r : ds.recordings) EXPECT_EQ(r.epochs.size() + r.excluded, 15u);

  // events.csv lists bursts only for REM epochs, inside the epoch.
  auto hyp = read_hypnogram(manifest.recordings[0].hypnogram);
  auto events = io::read_text(dir.path / "a" / "events.csv");
  std::istringstream in(events);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "recording,epoch_index,begin_sample,end_sample");
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
    ASSERT_EQ(f.size(), 4u);
    auto b = std::stoul(f[2]), e = std::stoul(f[3]);
    EXPECT_LT(b, e);
    EXPECT_LE(e, 3000u);
    if (f[0] == manifest.recordings[0].recording)
      EXPECT_EQ(hyp.entries[std::stoul(f[1])].stage, Stage::REM);
  }
}

TEST(Synth, ManifestErrors) {
  TempDir dir;
  io::write_atomic(dir.path / "m.json", std::string(R"({"recordings": [{"subject": "a", "edf": "x.edf", "hypnogram": "x.csv", "channel": "EOG"}]})"));
  EXPECT_THROW(load_manifest(dir.path / "m.json"), DataError);
  io::write_atomic(dir.path / "m.json", std::string(R"({"recordings": []})"));
  EXPECT_THROW(load_manifest(dir.path / "m.json"), ConfigError);
  io::write_atomic(dir.path / "m.json", std::string("{not json"));
  EXPECT_THROW(load_manifest(dir.path / "m.json"), ConfigError);
  EXPECT_THROW(synth_config_from_json({{"subjcts", 3}}), ConfigError);
  EXPECT_THROW(synth_config_from_json({{"sampling_rate", 3.33}}), ConfigError);
}

TEST(Synth, MeanSpectralPeakLandsInDesignedBand) {
  // Direct DFT magnitude over 0.3..20 Hz (1/30 Hz resolution), averaged per
  // class over independently drawn epochs.
  const double rate = 100;
  const std::size_t n = 3000;
  Rng rng(2024);
  for (std::size_t k = 0; k < kNumStages; ++k) {
    const Stage stage = static_cast<Stage>(k);
    const std::size_t lo_bin = 9, hi_bin = 600;
    std::vector<double> mean_mag(hi_bin, 0.0);
    for (int trial = 0; trial < 12; ++trial) {
      auto x = synthesize_epoch(stage, n, rate, rng).signal;
      for (std::size_t bin = lo_bin; bin < hi_bin; ++bin) {
        std::complex<double> acc = 0;
        const double w = -2.0 * std::numbers::pi * static_cast<double>(bin) / n;
        for (std::size_t i = 0; i < n; ++i) acc += x[i] * std::polar(1.0, w * static_cast<double>(i));
        mean_mag[bin] += std::abs(acc);
      }
    }
    auto peak = std::max_element(mean_mag.begin() + lo_bin, mean_mag.end()) - mean_mag.begin();
    const double f = static_cast<double>(peak) * rate / n;
    auto [lo, hi] = designed_band(stage);
    EXPECT_GE(f, lo) << stage_name(stage);
    EXPECT_LE(f, hi) << stage_name(stage);
  }
}

TEST(Synth, ShortEpochsKeepTheirSignatures) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    auto rem = synthesize_epoch(Stage::REM, 64, 32, rng);
    ASSERT_FALSE(rem.bursts.empty());
    for (auto [b, e] : rem.bursts) {
      EXPECT_LT(b, e);
      EXPECT_LE(e, 64u);
      EXPECT_GE(e - b, 12u);  // at least 0.4 s
    }
    auto n1 = synthesize_epoch(Stage::N1, 64, 32, rng);
    EXPECT_TRUE(n1.bursts.empty());
    EXPECT_EQ(n1.signal.size(), 64u);
  }
}

TEST(Synth, HypnogramFollowsPriorsAndExclusionRate) {
  SynthConfig c;
  c.epochs_per_recording = 20000;
  c.class_priors = {0.5, 0.0, 0.5, 0.0, 0.0};
  c.excluded_rate = 0.05;
  Rng rng(1);
  auto stages = synth_hypnogram(c, rng);
  std::map<Stage, double> freq;
  for (auto s : stages) freq[s] += 1.0 / stages.size();
  EXPECT_EQ(freq.count(Stage::N1), 0u);
  EXPECT_EQ(freq.count(Stage::REM), 0u);
  EXPECT_NEAR(freq[Stage::Excluded], 0.05, 0.01);
  EXPECT_NEAR(freq[Stage::W], 0.475, 0.04);
}

TEST(Synth, StrideFourUsesAQuarterOfTheWindows) {
  TempDir dir;
  SynthConfig c;
  c.subjects = 4;
  c.epochs_per_recording = 200;
  auto ds = load_dataset(load_manifest(synth_dataset(c, 3, dir.path)));
  const double ratio = static_cast<double>(ds.windows(9, 4).size()) / ds.windows(9, 1).size();
  EXPECT_GE(ratio, 0.24);
  EXPECT_LE(ratio, 0.26);
}
