// One PASS/FAIL/SKIP line per acceptance criterion. With arguments, only the
// listed criteria run (e.g. `acceptance 1 4 5`). Exit status is 1 when any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <fmt/format.h>

#include "eogstage/cli/cli.hpp"
#include "eogstage/common/io.hpp"
#include "eogstage/common/rng.hpp"
#include "eogstage/data/edf.hpp"
#include "eogstage/data/synth.hpp"
#include "eogstage/interp/tsne.hpp"
#include "eogstage/tensor/grad_check.hpp"
#include "eogstage/tensor/ops.hpp"
#include "eogstage/tensor/tape.hpp"
#include "eogstage/train/crossval.hpp"
#include "eogstage/train/loss.hpp"
#include "harness.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace eogstage;
using T64 = Tensor<double>;

namespace {

const fs::path kFixtures = EOGSTAGE_FIXTURE_DIR;

struct Outcome {
  enum Status { Pass, Fail, Skip } status;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Scratch {
  fs::path root;
  Scratch() {
    root = fs::temp_directory_path() / ("eog_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Scratch() { fs::remove_all(root); }
};

Scratch& scratch() {
  static Scratch s;
  return s;
}

// Ten subjects x 200 epochs at 32 Hz, written once and shared.
const fs::path& synthetic_manifest() {
  static const fs::path path = [] {
    SynthConfig c;
    c.subjects = 10;
    c.epochs_per_recording = 200;
    c.sampling_rate = 32;
    return synth_dataset(c, 7, scratch().root / "synthetic");
  }();
  return path;
}

T64 randn(Shape shape, Rng& rng, double scale = 1.0) {
  T64 t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

T64 weighted_sum(const T64& out, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(out, randn(out.shape(), rng)));
}

// ---- 1 ---------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2024);
  double worst = 0;
  std::string worst_name;
  std::size_t coords = 0;
  auto check = [&](const std::string& name, const std::function<T64()>& f, std::vector<T64> leaves) {
    auto r = grad_check_leaves(f, std::move(leaves), {1e-4, 0, 1});
    coords += r.coordinates_checked;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = name;
    }
  };

  auto x = randn({2, 3, 11}, rng), w = randn({4, 3, 3}, rng), b = randn({4}, rng);
  check("conv1d", [&] { return weighted_sum(ops::conv1d(x, w, b, {2, 1}), 1); }, {x, w, b});
  auto p = randn({2, 2, 9}, rng);
  check("avg_pool", [&] { return weighted_sum(ops::pool1d(p, ops::PoolKind::Avg, 3, 2), 2); }, {p});
  check("global_avg_pool", [&] { return weighted_sum(ops::pool1d(p, ops::PoolKind::GlobalAvg), 3); }, {p});
  check("max_pool", [&] { return weighted_sum(ops::pool1d(p, ops::PoolKind::Max, 2, 2), 4); }, {p});
  auto lx = randn({3, 5}, rng), lw = randn({4, 5}, rng), lb = randn({4}, rng);
  check("linear", [&] { return weighted_sum(ops::linear(lx, lw, lb), 5); }, {lx, lw, lb});
  check("sigmoid", [&] { return weighted_sum(ops::sigmoid(lx), 6); }, {lx});
  auto away = randn({20}, rng);
  for (auto& v : away.data()) v += v > 0 ? 0.1 : -0.1;  // off the kink
  check("relu", [&] { return weighted_sum(ops::activation(away, ops::Activation::Relu), 7); }, {away});
  auto nx = randn({3, 2, 4}, rng), ng = randn({2}, rng), nb = randn({2}, rng);
  check("batch_norm(train)",
        [&] { return weighted_sum(ops::batch_norm1d<double>(nx, ng, nb, nullptr, true, 1e-5), 8); }, {nx, ng, nb});
  ops::RunningStats<double> stats{T64({2}, {0.3, -0.2}), T64({2}, {1.5, 0.7}), 0.1};
  check("batch_norm(eval)",
        [&] { return weighted_sum(ops::batch_norm1d<double>(nx, ng, nb, &stats, false, 1e-5), 9); }, {nx, ng, nb});
  auto y = randn({4, 6}, rng), yg = randn({6}, rng), yb = randn({6}, rng);
  check("layer_norm", [&] { return weighted_sum(ops::layer_norm(y, yg, yb, 1e-5), 10); }, {y, yg, yb});
  check("softmax", [&] { return weighted_sum(ops::softmax(lx), 11); }, {lx});
  check("log_softmax", [&] { return weighted_sum(ops::log_softmax(lx), 12); }, {lx});
  auto q = randn({2, 2, 4, 3}, rng), k = randn({2, 2, 4, 3}, rng), v = randn({2, 2, 4, 3}, rng);
  check("attention", [&] { return weighted_sum(ops::attention(q, k, v), 13); }, {q, k, v});
  auto s = randn({2, 3, 4}, rng), g = randn({2, 3, 1}, rng), r = randn({4}, rng);
  check("permute", [&] { return weighted_sum(ops::permute(s, {2, 0, 1}), 14); }, {s});
  check("select", [&] { return weighted_sum(ops::select(s, 1, 2), 15); }, {s});
  check("reshape", [&] { return weighted_sum(ops::reshape(s, {6, 4}), 16); }, {s});
  check("mul", [&] { return weighted_sum(ops::mul(s, g), 17); }, {s, g});
  check("add/sub", [&] { return weighted_sum(ops::sub(ops::add(s, r), g), 18); }, {s, r, g});
  check("scale", [&] { return weighted_sum(ops::scale(s, 0.7), 19); }, {s});
  check("mean", [&] { return ops::mean(ops::mul(s, s)); }, {s});
  check("dropout", [&] {
    Rng mask(20);  // same mask on every evaluation
    return weighted_sum(ops::dropout(s, 0.3, mask, true), 21);
  }, {s});
  const std::vector<std::size_t> targets{0, 4, 2};
  const std::vector<double> cw{1.0, 2.0, 0.5, 1.0, 3.0};
  check("nll_loss", [&] { return nll_loss(ops::log_softmax(lx), targets, std::span<const double>(cw)); }, {lx});

  // Full tiny model, every coordinate of every parameter and of the input.
  SleepStager<double> model(tiny_config(), 23);
  Rng xr(24);
  auto input = randn({3, 3, 1, 64}, xr);
  const std::vector<std::size_t> labels{0, 3, 4};
  auto f = [&] { return nll_loss(model.forward(input, true), labels); };
  // The attention key bias shifts each softmax row uniformly, so its exact
  // gradient is zero; it is checked for that below instead of by ratio.
  std::vector<T64> leaves{input};
  std::size_t model_params = 0;
  for (const auto& [name, t] : model.parameters()) {
    model_params += t.numel();
    if (!name.ends_with("attn.k.bias")) leaves.push_back(t);
  }
  check("tiny model", f, leaves);
  model.zero_grad();
  autograd::backward(f());
  double kbias = 0;
  for (const auto& [name, t] : model.parameters())
    if (name.ends_with("attn.k.bias"))
      for (double gv : t.grad()) kbias = std::max(kbias, std::abs(gv));
  model.zero_grad();

  const double secs = seconds_since(t0);
  return verdict(worst < 1e-4 && kbias < 1e-12 && secs < 60,
                 fmt::format("max rel err {:.2e} ({}), {} coordinates incl. {} model parameters, "
                             "|key-bias grad| {:.1e}, {:.1f} s (limit 1e-4, 60 s)",
                             worst, worst_name, coords, model_params, kbias, secs));
}

// ---- 2 ---------------------------------------------------------------------

Outcome overfit_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  auto set = harness::overfit_set(7);
  auto result = train_fold(set.data, nullptr, tiny_config(), harness::overfit_train_config(7, 300));
  auto model = restore(result.final_state);
  const auto m = compute_metrics(evaluate(model, set.data, 1).confusion);
  const double loss = result.losses.back().loss;
  const double secs = seconds_since(t0);
  return verdict(m.acc >= 0.99 && loss < 0.05 && result.steps <= 300 && secs < 300,
                 fmt::format("train acc {:.4f}, loss {:.4f} after {} steps on {} windows, {:.1f} s "
                             "(need acc >= 0.99, loss < 0.05, <= 300 steps, < 300 s)",
                             m.acc, loss, result.steps, set.data.windows(3, 1).size(), secs));
}

// ---- 3 ---------------------------------------------------------------------

Outcome generalization() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto manifest = load_manifest(synthetic_manifest());
  TrainConfig tc;
  tc.seed = 7;
  tc.batch_size = 16;
  tc.max_epochs = 15;
  tc.patience = 5;
  auto mc = desk_config();
  const auto r = cross_validate(manifest, 2, mc, tc, scratch().root / "crossval");
  std::size_t epochs = 0;
  for (const auto& rec : load_dataset(manifest).recordings) epochs += rec.epochs.size();
  const double secs = seconds_since(t0);
  const auto& p = r.pooled_metrics;
  const auto& a = r.averaged_metrics;
  return verdict(p.mf1 >= 0.80 && p.kappa >= 0.75 && a.mf1 >= 0.80 && a.kappa >= 0.75 && secs < 1200,
                 fmt::format("2-fold test MF1 {:.4f} kappa {:.4f} pooled, {:.4f} / {:.4f} fold-averaged, "
                             "{} usable epochs, {:.0f} s (need MF1 >= 0.80, kappa >= 0.75, < 1200 s)",
                             p.mf1, p.kappa, a.mf1, a.kappa, epochs, secs));
}

// ---- 4 ---------------------------------------------------------------------

struct Brute {
  double acc, mf1, kappa;
  std::array<double, kClasses> f1;
};

// Textbook definitions straight from the prediction list.
Brute brute_force(const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
  const double n = static_cast<double>(pairs.size());
  Brute b{};
  double hits = 0;
  std::array<double, kClasses> t{}, pr{};
  for (auto [a, p] : pairs) {
    hits += a == p;
    t[a] += 1;
    pr[p] += 1;
  }
  b.acc = hits / n;
  double pe = 0;
  for (std::size_t c = 0; c < kClasses; ++c) pe += (t[c] / n) * (pr[c] / n);
  b.kappa = pe == 1.0 ? 1.0 : (b.acc - pe) / (1 - pe);
  double sum = 0;
  int supported = 0;
  for (std::size_t c = 0; c < kClasses; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (auto [a, p] : pairs) {
      tp += a == c && p == c;
      fp += a != c && p == c;
      fn += a == c && p != c;
    }
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0;
    b.f1[c] = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0;
    if (tp + fn > 0) {
      sum += b.f1[c];
      ++supported;
    }
  }
  b.mf1 = sum / supported;
  return b;
}

Outcome metric_oracle() {
  Rng rng(404);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(trial % 10 == 0 ? 8 : 2000);
    // Skewed label distributions so that empty rows and columns occur.
    std::array<double, kClasses> bias{};
    for (auto& x : bias) x = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
    bias[rng.below(kClasses)] += 0.1;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < n; ++i) {
      double u = rng.uniform() * std::accumulate(bias.begin(), bias.end(), 0.0);
      std::size_t a = 0;
      while (a + 1 < kClasses && u >= bias[a]) u -= bias[a++];
      const std::size_t p = rng.uniform() < 0.6 ? a : rng.below(kClasses);
      pairs.emplace_back(a, p);
      cm.accumulate(a, p);
    }
    const auto m = compute_metrics(cm);
    const auto b = brute_force(pairs);
    worst = std::max({worst, std::abs(m.acc - b.acc), std::abs(m.mf1 - b.mf1), std::abs(m.kappa - b.kappa)});
    for (std::size_t c = 0; c < kClasses; ++c) worst = std::max(worst, std::abs(m.f1[c] - b.f1[c]));
  }
  ConfusionMatrix hand;
  hand.counts[0][0] = 40;
  hand.counts[0][1] = 10;
  hand.counts[1][0] = 20;
  hand.counts[1][1] = 30;
  const double kappa = compute_metrics(hand).kappa;
  return verdict(worst <= 1e-12 && kappa == 0.4,
                 fmt::format("max |diff| {:.2e} over 1000 matrices (limit 1e-12); [[40,10],[20,30]] kappa = {:.17g}",
                             worst, kappa));
}

// ---- 5 ---------------------------------------------------------------------

RecordingEpochs contiguous(std::size_t epochs) {
  RecordingEpochs rec;
  rec.samples_per_epoch = 4;
  for (std::size_t e = 0; e < epochs; ++e) rec.epochs.push_back({"s", "r", e, std::vector<float>(4), Stage::N2});
  return rec;
}

Outcome windowing() {
  std::size_t cases = 0, bad = 0;
  for (std::size_t e = 0; e <= 80; ++e)
    for (std::size_t w = 1; w <= 21; w += 2)
      for (std::size_t s = 1; s <= 9; ++s) {
        const std::size_t expected = e >= w ? (e - w) / s + 1 : 0;
        ++cases;
        if (window_count(e, w, s) != expected || build_windows(contiguous(e), w, s).size() != expected) ++bad;
      }
  const auto data = load_dataset(load_manifest(synthetic_manifest()));
  const double n1 = static_cast<double>(data.windows(9, 1).size());
  const double n4 = static_cast<double>(data.windows(9, 4).size());
  const double ratio = n4 / n1;
  return verdict(bad == 0 && ratio >= 0.24 && ratio <= 0.26,
                 fmt::format("{} / {} (E, W, stride) cases match floor((E-W)/stride)+1; stride 4 keeps "
                             "{:.0f} of {:.0f} windows = {:.2f}% (need 24-26%)",
                             cases - bad, cases, n4, n1, 100 * ratio));
}

// ---- 6 ---------------------------------------------------------------------

EdfRecording random_recording(Rng& rng) {
  EdfRecording rec;
  rec.patient_id = "fuzz " + std::to_string(rng.below(1000));
  rec.recording_id = "acceptance";
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

std::optional<EdfError::Kind> error_kind(const std::function<void()>& fn, std::size_t* offset = nullptr) {
  try {
    fn();
  } catch (const EdfError& e) {
    if (offset) *offset = e.offset();
    return e.kind();
  }
  return std::nullopt;
}

Outcome edf_parser() {
  Rng rng(11);
  std::size_t exact = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto rec = random_recording(rng);
    const auto back = parse_edf(write_edf(rec));
    bool same = back.signals.size() == rec.signals.size() && back.num_records == rec.num_records;
    for (std::size_t i = 0; same && i < rec.signals.size(); ++i) same = back.signals[i].digital == rec.signals[i].digital;
    exact += same;
  }

  const auto expected = nlohmann::json::parse(io::read_text(kFixtures / "edf_expected.json")).at("golden");
  const auto golden = read_edf(kFixtures / "golden.edf");
  bool header = golden.version == expected.at("version") && golden.patient_id == expected.at("patient_id") &&
                golden.recording_id == expected.at("recording_id") &&
                golden.start_date == expected.at("start_date") && golden.start_time == expected.at("start_time") &&
                golden.num_records == expected.at("num_records") &&
                golden.record_duration == expected.at("record_duration") &&
                golden.header_bytes() == expected.at("header_bytes") &&
                golden.signals.size() == expected.at("signals").size();
  for (std::size_t i = 0; header && i < golden.signals.size(); ++i) {
    const auto& s = golden.signals[i];
    const auto& e = expected.at("signals")[i];
    header = s.label == e.at("label") && s.samples_per_record == e.at("samples_per_record") &&
             s.physical_min == e.at("physical_min") && s.physical_max == e.at("physical_max") &&
             s.digital_min == e.at("digital_min") && s.digital_max == e.at("digital_max");
  }

  std::size_t bad_header_offset = 0, bad_range_offset = 0;
  const bool designated =
      error_kind([] { read_edf(kFixtures / "truncated.edf"); }) == EdfError::Kind::Truncated &&
      error_kind([] { read_edf(kFixtures / "bad_header.edf"); }, &bad_header_offset) == EdfError::Kind::BadField &&
      bad_header_offset == expected.at("bad_header_offset").get<std::size_t>() &&
      error_kind([] { read_edf(kFixtures / "bad_range.edf"); }, &bad_range_offset) == EdfError::Kind::BadRange &&
      bad_range_offset == expected.at("bad_range_offset").get<std::size_t>();

  // Every prefix and 500 single-byte corruptions: parse or EdfError, nothing else.
  const auto bytes = io::read_bytes(kFixtures / "golden.edf");
  std::size_t stray = 0;
  auto probe = [&](std::span<const std::uint8_t> b) {
    try {
      parse_edf(b);
    } catch (const EdfError&) {
    } catch (...) {
      ++stray;
    }
  };
  for (std::size_t len = 0; len < bytes.size(); len += 7) probe(std::span(bytes).first(len));
  Rng crng(12);
  for (int i = 0; i < 500; ++i) {
    auto copy = bytes;
    copy[crng.below(std::min<std::size_t>(copy.size(), golden.header_bytes()))] =
        static_cast<std::uint8_t>(crng.below(256));
    probe(copy);
  }
  return verdict(exact == 100 && header && designated && stray == 0,
                 fmt::format("{}/100 fuzzed round trips bit-exact; golden header {}; truncated/bad-header/bad-range "
                             "errors {}; {} non-EDF exceptions from prefixes and corruptions",
                             exact, header ? "matches" : "differs", designated ? "as designated" : "WRONG", stray));
}

// ---- 7 ---------------------------------------------------------------------

Outcome gradcam_localization() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = harness::gradcam_localization(7, 20);
  return verdict(r.windows == 20 && r.mean_mass >= 0.5,
                 fmt::format("mean saliency mass inside REM bursts {:.3f} over {} windows (need >= 0.5); "
                             "final train loss {:.4f}, {:.0f} s",
                             r.mean_mass, r.windows, r.final_loss, seconds_since(t0)));
}

// ---- 8 ---------------------------------------------------------------------

FeatureMatrix blobs(std::size_t n, std::size_t dims, double separation, std::uint64_t seed) {
  Rng rng(seed);
  FeatureMatrix f;
  f.rows = n;
  f.dims = dims;
  for (std::size_t i = 0; i < n; ++i) {
    const bool second = i % 2 == 1;
    for (std::size_t d = 0; d < dims; ++d) f.values.push_back(rng.normal() + (second && d == 0 ? separation : 0.0));
    f.labels.push_back(second ? Stage::N3 : Stage::W);
  }
  return f;
}

Outcome tsne_checks() {
  const auto f = blobs(200, 16, 10.0, 1);
  TsneConfig cfg;
  cfg.seed = 3;
  const auto p = tsne_joint_probabilities(f.values, f.rows, f.dims, cfg);
  double total = 0;
  for (double v : p) total += v;
  const auto a = tsne(f, cfg);
  const auto b = tsne(f, cfg);
  const double nn = nearest_neighbor_accuracy(a.points, a.labels);
  const bool same = a.points == b.points && a.kl == b.kl;
  return verdict(nn >= 0.95 && std::abs(total - 1) <= 1e-9 && same,
                 fmt::format("1-NN label accuracy {:.3f} (need >= 0.95); sum P - 1 = {:.1e} (limit 1e-9); "
                             "repeat run {}",
                             nn, total - 1, same ? "bit-identical" : "DIFFERS"));
}

// ---- 9 ---------------------------------------------------------------------

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run_cli(args, out, err);
  if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
  return code;
}

Outcome determinism() {
  const fs::path root = scratch().root / "determinism";
  io::write_atomic(root / "train.json",
                   std::string(R"({"training": {"batch_size": 16, "max_epochs": 3, "validation_fraction": 0.25}})"));
  std::vector<std::string> files;
  for (int run = 0; run < 2; ++run) {
    const fs::path dir = root / fmt::format("run{}", run);
    const auto data = (dir / "data").string();
    if (cli({"synth", "--out", data, "--seed", "11", "--num-subjects", "4", "--epochs", "60", "--rate", "32"}) ||
        cli({"train", "--out", (dir / "train").string(), "--manifest", data + "/manifest.json", "--preset", "tiny",
             "--config", (root / "train.json").string(), "--seed", "5"}) ||
        cli({"evaluate", "--out", (dir / "eval").string(), "--manifest", data + "/manifest.json", "--checkpoint",
             (dir / "train" / "best.eogs").string()}))
      return verdict(false, "a pipeline step failed");
  }
  std::size_t compared = 0, differ = 0;
  for (const auto* rel : {"eval/metrics.csv", "eval/confusion.csv", "eval/predictions.csv", "train/final.eogs",
                          "train/best.eogs", "train/loss.csv"}) {
    ++compared;
    if (io::read_bytes(root / "run0" / rel) != io::read_bytes(root / "run1" / rel)) ++differ;
  }
  return verdict(differ == 0, fmt::format("synth -> train -> evaluate twice: {} of {} artifacts byte-identical "
                                          "(metrics CSVs, checkpoints, loss log)",
                                          compared - differ, compared));
}

// ---- 10 --------------------------------------------------------------------

// EOG_STAGER_SLEEPEDF points at a directory holding Sleep-EDF recordings
// (*-PSG.edf with matching *-Hypnogram.edf, e.g. both nights of one subject).
// The last night is the test set, the others train the model.
Outcome real_data() {
  const char* env = std::getenv("EOG_STAGER_SLEEPEDF");
  if (!env || !*env) return {Outcome::Skip, "set EOG_STAGER_SLEEPEDF to a Sleep-EDF directory to run"};
  const fs::path dir = fs::absolute(env);
  if (!fs::is_directory(dir)) return verdict(false, dir.string() + " is not a directory");
  std::map<std::string, fs::path> psg, hyp;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.size() < 7) continue;
    if (name.ends_with("-PSG.edf")) psg[name.substr(0, 6)] = e.path();
    if (name.ends_with("-Hypnogram.edf")) hyp[name.substr(0, 6)] = e.path();
  }
  nlohmann::json recs = nlohmann::json::array();
  const fs::path work = scratch().root / "sleepedf";
  fs::create_directories(work);
  std::vector<std::string> nights;
  for (const auto& [id, path] : psg)
    if (hyp.count(id)) {
      nights.push_back(id);
      recs.push_back({{"subject", id},
                      {"recording", id},
                      {"edf", fs::relative(path, work).string()},
                      {"hypnogram", fs::relative(hyp.at(id), work).string()},
                      {"channel", "EOG horizontal"}});
    }
  if (nights.size() < 2) return verdict(false, "need at least two PSG/Hypnogram pairs (train and test night)");
  nlohmann::json manifest{{"sampling_rate", 100},
                          {"windowing", {{"window_size", 9}, {"train_stride", 4}, {"eval_stride", 1}}},
                          {"recordings", recs}};
  io::write_atomic(work / "manifest.json", manifest.dump(2));
  io::write_atomic(work / "config.json",
                   std::string(R"({"training": {"batch_size": 16, "max_epochs": 10, "validation_fraction": 0}})"));
  std::string train_subjects;
  for (std::size_t i = 0; i + 1 < nights.size(); ++i) train_subjects += (i ? "," : "") + nights[i];
  const auto m = (work / "manifest.json").string();
  const auto t0 = std::chrono::steady_clock::now();
  if (int code = cli({"train", "--out", (work / "train").string(), "--manifest", m, "--preset", "desk", "--config",
                      (work / "config.json").string(), "--subjects", train_subjects, "--seed", "1"}))
    return verdict(false, fmt::format("train exited with {}", code));
  if (int code = cli({"evaluate", "--out", (work / "eval").string(), "--manifest", m, "--checkpoint",
                      (work / "train" / "best.eogs").string(), "--subjects", nights.back()}))
    return verdict(false, fmt::format("evaluate exited with {}", code));
  const auto j = nlohmann::json::parse(io::read_text(work / "eval" / "metrics.json"));
  double n = 0, top = 0;
  for (const auto& [name, count] : j.at("support").items()) {
    n += count.get<double>();
    top = std::max(top, count.get<double>());
  }
  const double acc = j.at("acc").get<double>();
  return verdict(acc > top / n, fmt::format("test night {}: acc {:.4f} vs majority baseline {:.4f}, mf1 {:.4f}, "
                                            "kappa {:.4f}, {:.0f} s",
                                            nights.back(), acc, top / n, j.at("mf1").get<double>(),
                                            j.at("kappa").get<double>(), seconds_since(t0)));
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"gradient correctness", gradient_correctness},
      {"overfit convergence", overfit_convergence},
      {"generalization (2-fold CV)", generalization},
      {"metric oracle equivalence", metric_oracle},
      {"windowing arithmetic", windowing},
      {"EDF parser", edf_parser},
      {"GradCAM localization", gradcam_localization},
      {"t-SNE", tsne_checks},
      {"determinism", determinism},
      {"real-data smoke test", real_data},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Outcome::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.status == Outcome::Pass ? "PASS" : o.status == Outcome::Fail ? "FAIL" : "SKIP";
    failures += o.status == Outcome::Fail;
    std::printf("[%s] %2d %s: %s\n", tag, id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
