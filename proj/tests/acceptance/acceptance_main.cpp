// Acceptance suite: runs every acceptance criterion at its stated tolerance
// and prints one pass/fail line per criterion. Exit code 0 iff all pass.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "abed/abft_gemm.hpp"
#include "abed/checksum.hpp"
#include "abed/convolution.hpp"
#include "abed/cost_model.hpp"
#include "abed/faults.hpp"
#include "abed/network_config.hpp"
#include "abed/rng.hpp"
#include "abed/tensor.hpp"

using namespace abed;

namespace {

struct CriterionResult {
  bool pass = true;
  std::string detail;
};

int worker_count() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 2;
}

template <typename Fn>
void parallel_for(std::int64_t count, Fn&& fn) {
  std::atomic<std::int64_t> next{0};
  auto body = [&] {
    for (;;) {
      const std::int64_t i = next.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      fn(i);
    }
  };
  const int jobs = static_cast<int>(std::min<std::int64_t>(worker_count(), count));
  std::vector<std::thread> pool;
  for (int t = 1; t < jobs; ++t) pool.emplace_back(body);
  body();
  for (auto& th : pool) th.join();
}

// --------------------------------------------------------------------------
// 1. Fault-free exactness of FC, IC (both variants), and FIC on every layer
//    of every builtin config, 20 seeds each, 1080p spatial extents capped.
// --------------------------------------------------------------------------
CriterionResult criterion1() {
  constexpr int kSeeds = 20;
  constexpr std::int64_t kCap = 64;
  const auto configs = builtin_configs();

  struct Unit {
    LayerShape shape;
    std::uint64_t seed;
    std::string label;
  };
  std::vector<Unit> units;
  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    const bool cap = configs[ci].name.find("1080p") != std::string::npos;
    for (std::size_t li = 0; li < configs[ci].layers.size(); ++li) {
      const LayerShape shape = cap ? capped_spatial(configs[ci].layers[li].shape, kCap)
                                   : configs[ci].layers[li].shape;
      for (int s = 0; s < kSeeds; ++s)
        units.push_back({shape, derive_seed(0xC1, (ci * 1000 + li) * 100 + static_cast<std::uint64_t>(s)),
                         configs[ci].name + "/" + configs[ci].layers[li].id + "#" +
                             std::to_string(s)});
    }
  }

  // largest units first so the worker pool drains evenly
  std::sort(units.begin(), units.end(), [](const Unit& a, const Unit& b) {
    const auto cost = [](const LayerShape& ls) { return ls.nkpq() * ls.crs(); };
    return cost(a.shape) > cost(b.shape);
  });

  std::atomic<std::int64_t> checked{0};
  std::mutex failures_mutex;
  std::vector<std::string> failures;
  parallel_for(static_cast<std::int64_t>(units.size()), [&](std::int64_t i) {
    const Unit& unit = units[static_cast<std::size_t>(i)];
    const LayerShape& ls = unit.shape;
    SplitMix64 rng(unit.seed);
    Tensor4D input(ls.input_dims(), ElemKind::I8);
    Tensor4D filters(ls.filter_dims(), ElemKind::I8);
    fill_random_i8(input, rng);
    fill_random_i8(filters, rng);

    std::vector<std::int8_t> patches;
    detail::im2col_rows<std::int8_t>(input, ls, patches);
    const Tensor4D convout = detail::conv_rows_i8(patches, filters, ls);

    const FilterChecksum fc = gen_filter_checksum_decomposed(filters);
    const Tensor4D extra =
        recombine_extra_fmaps(detail::conv_planes_rows(patches, ls, *fc.decomposed));
    const InputChecksum ic = gen_input_checksum(input, ls);
    const Tensor4D batch_out = conv_batch_checksum(ic_batch_checksum(input), filters, ls);

    const bool ok = fc_verify(convout, extra).pass() &&
                    ic_verify_k(convout, filters, ic).pass() &&
                    ic_batch_verify(convout, batch_out).pass() &&
                    fic_verify(convout, fic_dot(fc, ic)).pass();
    if (!ok) {
      std::lock_guard<std::mutex> lock(failures_mutex);
      failures.push_back(unit.label);
    }
    checked.fetch_add(1, std::memory_order_relaxed);
  });

  CriterionResult result;
  result.pass = failures.empty();
  std::ostringstream os;
  os << checked.load() << " layer/seed combinations x 4 schemes, all exact";
  if (!failures.empty()) os << "; FAILED at " << failures.size() << " (first: " << failures[0] << ")";
  result.detail = os.str();
  return result;
}

// --------------------------------------------------------------------------
// 2. Injection campaigns on the ResNet18 second conv, all-ones data, 1000
//    trials per (scheme, target); exact detection counts.
// --------------------------------------------------------------------------
CriterionResult criterion2() {
  const NetworkConfig r18 = builtin_network("resnet18", "224");
  const LayerShape shape = r18.layers[1].shape;  // second convolution layer

  struct Expectation {
    Scheme scheme;
    InjectionTarget target;
    std::int64_t want_detected;  // detections out of 1000
  };
  const Expectation expectations[] = {
      {Scheme::FC, InjectionTarget::Filter, 1000}, {Scheme::FC, InjectionTarget::ConvOut, 1000},
      {Scheme::FC, InjectionTarget::InputFmap, 0}, {Scheme::FIC, InjectionTarget::InputFmap, 1000},
      {Scheme::FIC, InjectionTarget::Filter, 1000}, {Scheme::FIC, InjectionTarget::ConvOut, 1000},
  };

  CriterionResult result;
  std::ostringstream os;
  std::int64_t fic_sdc = 0;
  int idx = 0;
  for (const auto& expect : expectations) {
    CampaignConfig config;
    config.shape = shape;
    config.scheme = expect.scheme;
    config.target = expect.target;
    config.trials = 1000;
    config.root_seed = 0xC2 + static_cast<std::uint64_t>(idx++);
    config.mode = DataMode::Ones;
    config.epilog.scale = 0.05f;
    const CampaignReport report = run_campaign(config);
    const std::int64_t got = report.detected + report.detected_benign;
    if (expect.scheme == Scheme::FIC) fic_sdc += report.sdc;
    if (got != expect.want_detected) {
      result.pass = false;
      os << " [" << to_string(expect.scheme) << "/" << to_string(expect.target) << " detected "
         << got << " want " << expect.want_detected << "]";
    }
  }
  if (fic_sdc != 0) {
    result.pass = false;
    os << " [fic sdc " << fic_sdc << " want 0]";
  }
  result.detail = "fc/filter=100% fc/convout=100% fc/input=0% fic/{input,filter,convout}=100% "
                  "fic sdc=0, 1000 trials each" +
                  os.str();
  return result;
}

// --------------------------------------------------------------------------
// 3. Cost model: aggregate 1080p op overheads below the published ceilings.
// --------------------------------------------------------------------------
CriterionResult criterion3() {
  CriterionResult result;
  std::ostringstream os;
  for (const char* name : {"vgg16", "resnet18", "resnet50"}) {
    const NetworkConfig cfg = builtin_network(name, "1080p");
    const double fic = aggregate_network(cfg, Scheme::FIC, ImplOption::FR).op_overhead_pct();
    const double fc = aggregate_network(cfg, Scheme::FC, ImplOption::FR).op_overhead_pct();
    os << " " << name << ": fic=" << fic << "% fc=" << fc << "%";
    if (!(fic < 1.0 && fic > 0.0 && fc < 7.0 && fc > 0.0)) {
      result.pass = false;
      os << " OUT OF BOUNDS";
    }
  }
  result.detail = "1080p op overheads, first layer excluded:" + os.str();
  return result;
}

// --------------------------------------------------------------------------
// 4. Precision planner: adversarial extremes pass under planned widths; the
//    forced 32-bit FIC reduction misreports on a fault-free layer.
// --------------------------------------------------------------------------
CriterionResult criterion4() {
  const LayerShape ls = LayerShape::make(1, 64, 16, 16, 64, 3, 3, 1, 1, 1, 1);  // CRS=576, K=64
  const PrecisionPlan plan = plan_precision(ls, 8);

  CriterionResult result;
  std::ostringstream os;
  os << "CRS=576 K=64, reduced-fic width " << plan.bits_reduced_fic << " bits ("
     << to_string(plan.reduced_fic_kind) << ")";
  if (plan.bits_output_fmap != 26 || plan.bits_reduced_fic <= 32) {
    result.pass = false;
    os << " [unexpected plan]";
  }

  SplitMix64 rng(0xC4);
  Tensor4D input(ls.input_dims(), ElemKind::I8);
  Tensor4D filters(ls.filter_dims(), ElemKind::I8);
  fill_random_extreme(input, rng);
  fill_random_extreme(filters, rng);
  const Tensor4D convout = detail::conv_fast_i8(input, filters, ls);
  const FilterChecksum fc = gen_filter_checksum_decomposed(filters);
  const InputChecksum ic = gen_input_checksum(input, ls);
  const Tensor4D extra = recombine_extra_fmaps(conv_checksum_planes(input, ls, *fc.decomposed));
  if (!fc_verify(convout, extra).pass() || !ic_verify_k(convout, filters, ic).pass() ||
      !fic_verify(convout, fic_dot(fc, ic)).pass()) {
    result.pass = false;
    os << " [extreme-value verification failed under planned widths]";
  }

  const Tensor4D max_in = Tensor4D::filled(ls.input_dims(), ElemKind::I8, 127);
  const Tensor4D max_ft = Tensor4D::filled(ls.filter_dims(), ElemKind::I8, 127);
  const Tensor4D max_out = detail::conv_fast_i8(max_in, max_ft, ls);
  const std::int64_t expected =
      fic_dot(gen_filter_checksum(max_ft), gen_input_checksum(max_in, ls));
  const bool wide_ok = fic_verify(max_out, expected).pass();
  const bool forced_misreports = !fic_verify_forced32(max_out, expected).pass();
  if (!wide_ok || !forced_misreports) {
    result.pass = false;
    os << " [negative control did not demonstrate the wraparound]";
  } else {
    os << "; extremes pass, forced 32-bit reduction falsely mismatches (true sum " << expected
       << ")";
  }
  result.detail = os.str();
  return result;
}

// --------------------------------------------------------------------------
// 5. Decomposition losslessness: exhaustive over all int32 values (a
//    superset of the random corpus and the power-of-two bands), threaded.
// --------------------------------------------------------------------------
CriterionResult criterion5() {
  const std::int64_t lo = std::numeric_limits<std::int32_t>::min();
  const std::int64_t hi = std::numeric_limits<std::int32_t>::max();
  const int jobs = worker_count();
  std::atomic<std::int64_t> bad{0};
  const std::int64_t span = (hi - lo + 1 + jobs - 1) / jobs;
  parallel_for(jobs, [&](std::int64_t t) {
    const std::int64_t begin = lo + t * span;
    const std::int64_t end = std::min<std::int64_t>(hi, begin + span - 1);
    std::int64_t local_bad = 0;
    for (std::int64_t v = begin; v <= end; ++v) {
      const auto value = static_cast<std::int32_t>(v);
      if (recombine_value(decompose_value(value)) != v) ++local_bad;
    }
    bad.fetch_add(local_bad, std::memory_order_relaxed);
  });

  CriterionResult result;
  result.pass = bad.load() == 0;
  std::ostringstream os;
  os << "all 2^32 int32 values round-trip bit-exactly (superset of the 10^6 random + "
        "power-of-two bands + extremes)";
  if (bad.load()) os << "; " << bad.load() << " FAILURES";
  result.detail = os.str();
  return result;
}

// --------------------------------------------------------------------------
// 6. conv_via_gemm vs conv_direct on 200 random shapes.
// --------------------------------------------------------------------------
CriterionResult criterion6() {
  SplitMix64 rng(0xC6);
  int checked = 0;
  int failed = 0;
  while (checked < 200) {
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t c = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t k = 1 + static_cast<std::int64_t>(rng.below(4));
    const std::int64_t h = 1 + static_cast<std::int64_t>(rng.below(8));
    const std::int64_t w = 1 + static_cast<std::int64_t>(rng.below(8));
    const std::int64_t r = rng.below(2) ? 3 : 1;
    const std::int64_t s = rng.below(2) ? 3 : 1;
    const std::int64_t stride = 1 + static_cast<std::int64_t>(rng.below(2));
    const std::int64_t pad = static_cast<std::int64_t>(rng.below(2));
    if (r > h + 2 * pad || s > w + 2 * pad) continue;
    const LayerShape ls = LayerShape::make(n, c, h, w, k, r, s, stride, stride, pad, pad);
    Tensor4D input(ls.input_dims(), ElemKind::I8);
    Tensor4D filters(ls.filter_dims(), ElemKind::I8);
    fill_random_i8(input, rng);
    fill_random_i8(filters, rng);
    if (!(conv_via_gemm(input, filters, ls) == conv_direct(input, filters, ls))) ++failed;
    ++checked;
  }
  CriterionResult result;
  result.pass = failed == 0;
  result.detail = "conv_via_gemm == conv_direct on 200 random shapes, exact" +
                  (failed ? " (" + std::to_string(failed) + " FAILURES)" : std::string());
  return result;
}

// --------------------------------------------------------------------------
// 7. ABFT GEMM: fault-free invariant, exhaustive single-corruption
//    detection, closed-form copy accounting.
// --------------------------------------------------------------------------
CriterionResult criterion7() {
  std::atomic<std::int64_t> faultfree_failures{0};
  std::atomic<std::int64_t> missed_detections{0};
  std::atomic<std::int64_t> cost_mismatches{0};
  parallel_for(1000, [&](std::int64_t t) {
    SplitMix64 rng(derive_seed(0xC7, static_cast<std::uint64_t>(t)));
    const std::int64_t m = 1 + static_cast<std::int64_t>(rng.below(64));
    const std::int64_t k = 1 + static_cast<std::int64_t>(rng.below(64));
    const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(64));
    Matrix a(m, k, ElemKind::I8);
    Matrix b(k, n, ElemKind::I8);
    for (auto& v : a.view<std::int8_t>()) v = rng.next_i8();
    for (auto& v : b.view<std::int8_t>()) v = rng.next_i8();
    AbftResult result = abft_gemm(a, b);
    if (!result.pass()) faultfree_failures.fetch_add(1);
    if (result.costs.copy_elements() != m * k + k * n + 2 * m * n) cost_mismatches.fetch_add(1);
    const std::int64_t i = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(m)));
    const std::int64_t j = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(n)));
    result.c_aug.at<std::int64_t>(i, j) ^= std::int64_t{1} << rng.below(63);
    const auto [row_check, col_check] = abft_check(result.c_aug);
    if (row_check.pass() && col_check.pass()) missed_detections.fetch_add(1);
  });
  CriterionResult result;
  result.pass =
      faultfree_failures.load() == 0 && missed_detections.load() == 0 && cost_mismatches.load() == 0;
  std::ostringstream os;
  os << "1000 random GEMMs (dims <= 64): fault-free invariant holds, 1000/1000 injected "
        "corruptions detected, copy accounting == m*k + k*n + 2*m*n";
  if (!result.pass)
    os << " [faultfree_failures=" << faultfree_failures.load()
       << " missed=" << missed_detections.load() << " cost_mismatch=" << cost_mismatches.load()
       << "]";
  result.detail = os.str();
  return result;
}

// --------------------------------------------------------------------------
// 8. Statement of what the suite does not reproduce.
// --------------------------------------------------------------------------
CriterionResult criterion8() {
  CriterionResult result;
  result.detail =
      "not reproducible at desk scale: GPU wall-clock overheads (6-23%) and beam-test FIT "
      "improvements; replaced by the identity, detection, and counting checks of criteria 1-7 "
      "plus the analytic op/byte model";
  return result;
}

}  // namespace

int main() {
  struct Entry {
    const char* name;
    CriterionResult (*fn)();
  };
  const Entry entries[] = {
      {"criterion 1 fault-free exactness", criterion1},
      {"criterion 2 injection campaigns", criterion2},
      {"criterion 3 cost-model ceilings", criterion3},
      {"criterion 4 overflow planner", criterion4},
      {"criterion 5 decomposition losslessness", criterion5},
      {"criterion 6 conv/GEMM equivalence", criterion6},
      {"criterion 7 ABFT GEMM", criterion7},
      {"criterion 8 out-of-scope statement", criterion8},
  };

  bool all_pass = true;
  for (const Entry& entry : entries) {
    const auto start = std::chrono::steady_clock::now();
    const CriterionResult result = entry.fn();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %s: %s (%.1fs)\n", result.pass ? "PASS" : "FAIL", entry.name,
                result.detail.c_str(), secs);
    std::fflush(stdout);
    all_pass = all_pass && result.pass;
  }
  std::printf("%s\n", all_pass ? "acceptance: ALL CRITERIA PASS" : "acceptance: FAILURES PRESENT");
  return all_pass ? 0 : 1;
}
