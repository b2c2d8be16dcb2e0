// abed: checksum-verified integer convolutions, fault-injection campaigns,
// the ABFT-GEMM comparison, and the analytic cost model, behind one CLI.
//
// Exit codes: 0 success, 1 usage/config/IO error, 2 verification mismatch.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>

#include "abed/abft_gemm.hpp"
#include "abed/checksum.hpp"
#include "abed/convolution.hpp"
#include "abed/cost_model.hpp"
#include "abed/faults.hpp"
#include "abed/network_config.hpp"
#include "abed/rng.hpp"
#include "abed/tensor.hpp"

namespace {

using namespace abed;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitMismatch = 2;

struct OutputOptions {
  bool json = false;
  std::string out_path;
};

void emit(const OutputOptions& opts, const std::string& csv, const nlohmann::json& doc) {
  const std::string text = opts.json ? doc.dump(2) + "\n" : csv;
  if (opts.out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(opts.out_path);
  if (!f) throw std::runtime_error("cannot open output file " + opts.out_path);
  f << text;
}

struct LayerSelection {
  std::string config_path;
  std::string network;
  std::string image = "224";
  std::string layer_id;
  std::int64_t cap_hw = 0;
};

void add_layer_options(CLI::App* cmd, LayerSelection& sel, bool need_layer) {
  auto* config = cmd->add_option("--config", sel.config_path, "network config JSON file");
  auto* network =
      cmd->add_option("--network", sel.network, "builtin network: vgg16|resnet18|resnet50");
  cmd->add_option("--image", sel.image, "builtin input size: 224|1080p")->needs(network);
  config->excludes(network);
  auto* layer = cmd->add_option("--layer", sel.layer_id, "layer id (or zero-based index)");
  if (need_layer) layer->required();
  cmd->add_option("--cap-hw", sel.cap_hw,
                  "cap input H,W at this size for the functional run (0 = off)");
}

NetworkConfig resolve_network(const LayerSelection& sel) {
  if (!sel.config_path.empty()) return load_network(sel.config_path);
  if (!sel.network.empty()) return builtin_network(sel.network, sel.image);
  throw std::invalid_argument("one of --config or --network is required");
}

LayerConfig resolve_layer(const LayerSelection& sel) {
  const NetworkConfig cfg = resolve_network(sel);
  LayerConfig layer;
  if (cfg.has_layer(sel.layer_id)) {
    layer = cfg.layer(sel.layer_id);
  } else {
    try {
      const std::size_t index = std::stoul(sel.layer_id);
      if (index >= cfg.layers.size()) throw std::out_of_range("index");
      layer = cfg.layers[index];
    } catch (const std::exception&) {
      throw std::invalid_argument("no layer '" + sel.layer_id + "' in " + cfg.name);
    }
  }
  if (sel.cap_hw > 0) layer.shape = capped_spatial(layer.shape, sel.cap_hw);
  return layer;
}

Scheme parse_scheme(const std::string& s) {
  if (s == "fc") return Scheme::FC;
  if (s == "ic") return Scheme::IC;
  if (s == "icbatch") return Scheme::ICBatch;
  if (s == "fic") return Scheme::FIC;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

InjectionTarget parse_target(const std::string& s) {
  if (s == "input") return InjectionTarget::InputFmap;
  if (s == "filter") return InjectionTarget::Filter;
  if (s == "convout") return InjectionTarget::ConvOut;
  throw std::invalid_argument("unknown target '" + s + "'");
}

ImplOption parse_option(const std::string& s) {
  if (s == "uf") return ImplOption::UF;
  if (s == "fr") return ImplOption::FR;
  if (s == "af") return ImplOption::AF;
  throw std::invalid_argument("unknown option '" + s + "'");
}

std::string locus_string(const VerifyOutcome& outcome) {
  if (!outcome.locus) return "";
  std::ostringstream os;
  const auto& l = *outcome.locus;
  os << l[0];
  if (l[1] >= 0) os << ":" << l[1] << ":" << l[2];
  return os.str();
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

struct VerifyArgs {
  LayerSelection sel;
  std::string scheme = "fic";
  std::uint64_t seed = 1;
  std::string data = "random";
  bool use_float = false;
  double tau = 0.0;
  bool force_reduce32 = false;
  int operand_bits = 8;
  std::string dump_dir;
  std::string load_input;
  std::string load_filters;
  OutputOptions out;
};

Tensor4D make_data_tensor(const LayerShape& ls, const std::string& data, bool use_float,
                          std::uint64_t seed, bool filters) {
  const Dims4 dims = filters ? ls.filter_dims() : ls.input_dims();
  SplitMix64 rng(derive_seed(seed, filters ? 2 : 1));
  if (use_float) {
    if (data == "ones") return Tensor4D::filled(dims, ElemKind::F32, 1.0);
    if (data == "max") return Tensor4D::filled(dims, ElemKind::F32, 127.0);
    Tensor4D t(dims, ElemKind::F32);
    if (data == "extreme")
      fill_random_f32(t, rng, -128.0f, 127.0f);
    else
      fill_random_f32_integers(t, rng);
    return t;
  }
  if (data == "ones") return Tensor4D::filled(dims, ElemKind::I8, 1);
  if (data == "max") return Tensor4D::filled(dims, ElemKind::I8, 127);
  Tensor4D t(dims, ElemKind::I8);
  if (data == "extreme")
    fill_random_extreme(t, rng);
  else
    fill_random_i8(t, rng);
  return t;
}

int run_verify(const VerifyArgs& args) {
  const LayerConfig layer = resolve_layer(args.sel);
  const LayerShape& ls = layer.shape;
  const Scheme scheme = parse_scheme(args.scheme);
  if (args.use_float && (scheme == Scheme::ICBatch || args.force_reduce32))
    throw std::invalid_argument("--float supports fc|ic|fic without --force-reduce32");
  if (args.force_reduce32 && scheme != Scheme::FIC)
    throw std::invalid_argument("--force-reduce32 applies to the fic scheme");

  Tensor4D input = args.load_input.empty()
                       ? make_data_tensor(ls, args.data, args.use_float, args.seed, false)
                       : load_tensor(args.load_input);
  Tensor4D filters = args.load_filters.empty()
                         ? make_data_tensor(ls, args.data, args.use_float, args.seed, true)
                         : load_tensor(args.load_filters);
  if (input.dims() != ls.input_dims() || filters.dims() != ls.filter_dims())
    throw std::invalid_argument("loaded tensor dims do not match the selected layer");

  VerifyOutcome outcome;
  std::optional<PrecisionPlan> plan;
  Tensor4D convout;

  if (args.use_float) {
    convout = conv_direct_f32(input, filters, ls);
    if (scheme == Scheme::FC) {
      const auto sums = filter_checksum_f64(filters);
      Tensor4D cs_filter({1, ls.c, ls.r, ls.s}, ElemKind::F32);
      for (std::size_t i = 0; i < sums.size(); ++i)
        cs_filter.view<float>()[i] = static_cast<float>(sums[i]);
      LayerShape cs_shape = ls;
      cs_shape.k = 1;
      outcome = fc_verify_f32(convout, conv_direct_f32(input, cs_filter, cs_shape), args.tau);
    } else if (scheme == Scheme::IC) {
      outcome = ic_verify_k_f32(convout, filters, input_checksum_f64(input, ls), args.tau);
    } else {
      outcome = fic_verify_f32(
          convout, fic_dot_f64(filter_checksum_f64(filters), input_checksum_f64(input, ls)),
          args.tau);
    }
  } else {
    plan = plan_precision(ls, args.operand_bits);
    convout = detail::conv_fast_i8(input, filters, ls);
    switch (scheme) {
      case Scheme::FC: {
        const FilterChecksum fc = gen_filter_checksum_decomposed(filters);
        const Tensor4D extra =
            recombine_extra_fmaps(conv_checksum_planes(input, ls, *fc.decomposed));
        outcome = fc_verify(convout, extra);
        break;
      }
      case Scheme::IC:
        outcome = ic_verify_k(convout, filters, gen_input_checksum(input, ls));
        break;
      case Scheme::ICBatch: {
        const Tensor4D batch = ic_batch_checksum(input);
        outcome = ic_batch_verify(convout, conv_batch_checksum(batch, filters, ls));
        break;
      }
      case Scheme::FIC: {
        const std::int64_t expected =
            fic_dot(gen_filter_checksum(filters), gen_input_checksum(input, ls));
        outcome = args.force_reduce32 ? fic_verify_forced32(convout, expected)
                                      : fic_verify(convout, expected);
        break;
      }
    }
  }

  if (!args.dump_dir.empty()) {
    const std::filesystem::path dir(args.dump_dir);
    std::filesystem::create_directories(dir);
    save_tensor(dir / "input.abed", input);
    save_tensor(dir / "filters.abed", filters);
    save_tensor(dir / "convout.abed", convout);
  }

  const bool pass = outcome.pass();
  std::ostringstream csv;
  csv << "layer,scheme,mode,status,lhs,rhs,locus,seed\n";
  csv << layer.id << "," << args.scheme << "," << (args.use_float ? "float" : "int") << ","
      << (pass ? "pass" : "mismatch") << ",";
  if (args.use_float)
    csv << outcome.lhs_f << "," << outcome.rhs_f;
  else
    csv << outcome.lhs << "," << outcome.rhs;
  csv << "," << locus_string(outcome) << "," << args.seed << "\n";
  if (plan) {
    csv << "plan,b,output_fmap,reduced_fc,reduced_fic,filter_checksum,input_checksum\n";
    csv << "bits," << plan->operand_bits << "," << plan->bits_output_fmap << ","
        << plan->bits_reduced_fc << "," << plan->bits_reduced_fic << ","
        << plan->bits_filter_checksum << "," << plan->bits_input_checksum << "\n";
    csv << "kinds,," << to_string(plan->output_fmap_kind) << "," << to_string(plan->reduced_fc_kind)
        << "," << to_string(plan->reduced_fic_kind) << "," << to_string(plan->filter_checksum_kind)
        << "," << to_string(plan->input_checksum_kind) << "\n";
  }

  nlohmann::json doc{{"layer", layer.id},
                     {"scheme", args.scheme},
                     {"mode", args.use_float ? "float" : "int"},
                     {"status", pass ? "pass" : "mismatch"},
                     {"seed", args.seed}};
  if (args.use_float) {
    doc["lhs"] = outcome.lhs_f;
    doc["rhs"] = outcome.rhs_f;
    doc["tau"] = args.tau;
  } else {
    doc["lhs"] = outcome.lhs;
    doc["rhs"] = outcome.rhs;
  }
  if (outcome.locus) doc["locus"] = locus_string(outcome);
  if (plan) {
    doc["plan"] = {{"b", plan->operand_bits},
                   {"bits_output_fmap", plan->bits_output_fmap},
                   {"bits_reduced_fc", plan->bits_reduced_fc},
                   {"bits_reduced_fic", plan->bits_reduced_fic},
                   {"bits_filter_checksum", plan->bits_filter_checksum},
                   {"bits_input_checksum", plan->bits_input_checksum},
                   {"output_fmap_kind", to_string(plan->output_fmap_kind)},
                   {"reduced_fic_kind", to_string(plan->reduced_fic_kind)}};
  }
  emit(args.out, csv.str(), doc);
  return pass ? kExitOk : kExitMismatch;
}

// ---------------------------------------------------------------------------
// inject
// ---------------------------------------------------------------------------

struct InjectArgs {
  LayerSelection sel;
  std::string scheme = "fic";
  std::string target = "convout";
  std::int64_t trials = 1000;
  std::uint64_t seed = 1;
  std::string mode = "ones";
  int jobs = 0;
  float scale = 0.05f;
  OutputOptions out;
};

int run_inject(const InjectArgs& args) {
  const LayerConfig layer = resolve_layer(args.sel);
  CampaignConfig config;
  config.shape = layer.shape;
  config.scheme = parse_scheme(args.scheme);
  if (config.scheme == Scheme::ICBatch)
    throw std::invalid_argument("inject supports fc|ic|fic");
  config.target = parse_target(args.target);
  config.trials = args.trials;
  config.root_seed = args.seed;
  config.mode = args.mode == "random" ? DataMode::RandomI8 : DataMode::Ones;
  config.jobs = args.jobs;
  config.epilog.scale = args.scale;
  config.epilog.activation = layer.activation ? Activation::ReLU : Activation::Identity;

  const CampaignReport report = run_campaign(config);

  std::ostringstream csv;
  csv << "scheme,target,trials,detected,detected_benign,sdc,masked,detection_rate,sdc_rate,seed\n";
  csv << to_string(report.scheme) << "," << to_string(report.target) << "," << report.trials << ","
      << report.detected << "," << report.detected_benign << "," << report.sdc << ","
      << report.masked << "," << report.detection_rate() << "," << report.sdc_rate() << ","
      << report.seed << "\n";

  const nlohmann::json doc{{"scheme", to_string(report.scheme)},
                           {"target", to_string(report.target)},
                           {"layer", layer.id},
                           {"trials", report.trials},
                           {"detected", report.detected},
                           {"detected_benign", report.detected_benign},
                           {"sdc", report.sdc},
                           {"masked", report.masked},
                           {"detection_rate", report.detection_rate()},
                           {"sdc_rate", report.sdc_rate()},
                           {"seed", report.seed}};
  emit(args.out, csv.str(), doc);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// cost
// ---------------------------------------------------------------------------

struct CostArgs {
  LayerSelection sel;
  std::string scheme = "fic";
  std::string option = "fr";
  std::string pruned_path;
  bool fc_pad8 = false;
  int fc_planes = 4;
  OutputOptions out;
};

int run_cost(const CostArgs& args) {
  NetworkConfig cfg = resolve_network(args.sel);
  const Scheme scheme = parse_scheme(args.scheme);
  const ImplOption option = parse_option(args.option);
  CostOptions opts;
  opts.fc_planes = args.fc_planes;
  opts.fc_pad_to_8 = args.fc_pad8;

  const NetworkConfig baseline = cfg;
  const NetworkConfig* baseline_ptr = nullptr;
  if (!args.pruned_path.empty()) {
    cfg = load_pruned(cfg, args.pruned_path);
    baseline_ptr = &baseline;
  }
  const CostReport report = aggregate_network(cfg, scheme, option, opts, baseline_ptr);

  std::ostringstream csv;
  csv << "network,layer,scheme,option,fma,add,mul,act,cast,read_bytes,write_bytes,"
         "op_overhead_pct,byte_overhead_pct\n";
  const auto row_line = [&](const std::string& layer_id, const OpCounts& ops,
                            const ByteCounts& bytes, double op_pct, double byte_pct) {
    csv << report.network << "," << layer_id << "," << to_string(scheme) << ","
        << to_string(option) << "," << ops.fma << "," << ops.add << "," << ops.mul << ","
        << ops.activation_eval << "," << ops.cast << "," << bytes.read_bytes << ","
        << bytes.write_bytes << "," << op_pct << "," << byte_pct << "\n";
  };
  for (const auto& row : report.rows)
    row_line(row.layer + (row.excluded ? " (excluded)" : ""), row.ops, row.bytes,
             row.op_overhead_pct(), row.byte_overhead_pct());
  row_line("TOTAL", report.total_ops, report.total_bytes, report.op_overhead_pct(),
           report.byte_overhead_pct());

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"layer", row.layer},
                    {"excluded", row.excluded},
                    {"fma", row.ops.fma},
                    {"add", row.ops.add},
                    {"mul", row.ops.mul},
                    {"act", row.ops.activation_eval},
                    {"cast", row.ops.cast},
                    {"read_bytes", row.bytes.read_bytes},
                    {"write_bytes", row.bytes.write_bytes},
                    {"op_overhead_pct", row.op_overhead_pct()},
                    {"byte_overhead_pct", row.byte_overhead_pct()}});
  }
  const nlohmann::json doc{{"network", report.network},
                           {"scheme", to_string(scheme)},
                           {"option", to_string(option)},
                           {"layers", rows},
                           {"total",
                            {{"fma", report.total_ops.fma},
                             {"add", report.total_ops.add},
                             {"mul", report.total_ops.mul},
                             {"act", report.total_ops.activation_eval},
                             {"cast", report.total_ops.cast},
                             {"read_bytes", report.total_bytes.read_bytes},
                             {"write_bytes", report.total_bytes.write_bytes},
                             {"op_overhead_pct", report.op_overhead_pct()},
                             {"byte_overhead_pct", report.byte_overhead_pct()}}}};
  emit(args.out, csv.str(), doc);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// abft
// ---------------------------------------------------------------------------

struct AbftArgs {
  std::int64_t m = 64, n = 64, k = 64;
  std::int64_t trials = 1000;
  std::uint64_t seed = 1;
  bool single_pass = false;
  OutputOptions out;
};

int run_abft(const AbftArgs& args) {
  std::int64_t faultfree_pass = 0;
  std::int64_t detected = 0;
  for (std::int64_t t = 0; t < args.trials; ++t) {
    SplitMix64 rng(derive_seed(args.seed, static_cast<std::uint64_t>(t)));
    Matrix a(args.m, args.k, ElemKind::I8);
    Matrix b(args.k, args.n, ElemKind::I8);
    for (auto& v : a.view<std::int8_t>()) v = rng.next_i8();
    for (auto& v : b.view<std::int8_t>()) v = rng.next_i8();
    AbftResult result = abft_gemm(a, b, args.single_pass);
    if (result.pass()) ++faultfree_pass;
    const std::int64_t i = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(args.m)));
    const std::int64_t j = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(args.n)));
    const int bit = static_cast<int>(rng.below(63));
    result.c_aug.at<std::int64_t>(i, j) ^= std::int64_t{1} << bit;
    const auto [row_check, col_check] = abft_check(result.c_aug);
    if (!row_check.pass() || !col_check.pass()) ++detected;
  }

  const AbftCosts costs = abft_costs(args.m, args.n, args.k, args.single_pass);

  std::ostringstream csv;
  csv << "m,n,k,trials,faultfree_pass,detected,detection_rate,copy_elements,seed\n";
  csv << args.m << "," << args.n << "," << args.k << "," << args.trials << "," << faultfree_pass
      << "," << detected << "," << static_cast<double>(detected) / static_cast<double>(args.trials)
      << "," << costs.copy_elements() << "," << args.seed << "\n";
  csv << "task,ops,read_bytes,write_bytes,elements_moved\n";
  for (const auto& task : costs.tasks)
    csv << task.name << "," << task.ops << "," << task.read_bytes << "," << task.write_bytes << ","
        << task.elements_moved << "\n";

  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& task : costs.tasks)
    tasks.push_back({{"task", std::string(task.name)},
                     {"ops", task.ops},
                     {"read_bytes", task.read_bytes},
                     {"write_bytes", task.write_bytes},
                     {"elements_moved", task.elements_moved}});
  const nlohmann::json doc{
      {"m", args.m},
      {"n", args.n},
      {"k", args.k},
      {"trials", args.trials},
      {"faultfree_pass", faultfree_pass},
      {"detected", detected},
      {"detection_rate", static_cast<double>(detected) / static_cast<double>(args.trials)},
      {"copy_elements", costs.copy_elements()},
      {"tasks", tasks},
      {"seed", args.seed}};
  emit(args.out, csv.str(), doc);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"algorithm-based error detection for integer convolutions"};
  app.require_subcommand(1);

  VerifyArgs verify_args;
  CLI::App* verify = app.add_subcommand("verify", "run one checksum-verified convolution");
  add_layer_options(verify, verify_args.sel, true);
  verify->add_option("--scheme", verify_args.scheme, "fc|ic|icbatch|fic")->required();
  verify->add_option("--seed", verify_args.seed, "data seed");
  verify->add_option("--data", verify_args.data, "random|ones|extreme|max");
  verify->add_flag("--float", verify_args.use_float, "f32 operands, thresholded comparison");
  verify->add_option("--tau", verify_args.tau, "float-mode comparison threshold");
  verify->add_flag("--force-reduce32", verify_args.force_reduce32,
                   "negative control: wrap the fic reduction in 32 bits");
  verify->add_option("--operand-bits", verify_args.operand_bits, "planner operand width (4|8)");
  verify->add_option("--dump-dir", verify_args.dump_dir, "dump input/filters/convout here");
  verify->add_option("--load-input", verify_args.load_input, "load the input tensor");
  verify->add_option("--load-filters", verify_args.load_filters, "load the filter tensor");
  verify->add_flag("--json", verify_args.out.json, "emit a JSON document");
  verify->add_option("--out", verify_args.out.out_path, "write the report to a file");

  InjectArgs inject_args;
  CLI::App* inject = app.add_subcommand("inject", "run a bit-flip injection campaign");
  add_layer_options(inject, inject_args.sel, true);
  inject->add_option("--scheme", inject_args.scheme, "fc|ic|fic")->required();
  inject->add_option("--target", inject_args.target, "input|filter|convout")->required();
  inject->add_option("--trials", inject_args.trials, "trial count")->check(CLI::PositiveNumber);
  inject->add_option("--seed", inject_args.seed, "campaign root seed");
  inject->add_option("--mode", inject_args.mode, "ones|random data");
  inject->add_option("--jobs", inject_args.jobs, "worker threads (0 = all cores)");
  inject->add_option("--scale", inject_args.scale, "epilog scale factor");
  inject->add_flag("--json", inject_args.out.json, "emit a JSON document");
  inject->add_option("--out", inject_args.out.out_path, "write the report to a file");

  CostArgs cost_args;
  CLI::App* cost = app.add_subcommand("cost", "op and byte accounting for a network");
  add_layer_options(cost, cost_args.sel, false);
  cost->add_option("--scheme", cost_args.scheme, "fc|ic|fic")->required();
  cost->add_option("--option", cost_args.option, "uf|fr|af");
  cost->add_option("--pruned", cost_args.pruned_path, "per-layer k override JSON");
  cost->add_flag("--fc-pad8", cost_args.fc_pad8, "model pad-to-multiple-of-8 filter counts");
  cost->add_option("--fc-planes", cost_args.fc_planes, "checksum filter planes (1..4)");
  cost->add_flag("--json", cost_args.out.json, "emit a JSON document");
  cost->add_option("--out", cost_args.out.out_path, "write the report to a file");

  AbftArgs abft_args;
  CLI::App* abft = app.add_subcommand("abft", "row/column-checksum ABFT GEMM comparison");
  abft->add_option("--m", abft_args.m, "rows of A")->check(CLI::PositiveNumber);
  abft->add_option("--n", abft_args.n, "cols of B")->check(CLI::PositiveNumber);
  abft->add_option("--k", abft_args.k, "inner dimension")->check(CLI::PositiveNumber);
  abft->add_option("--trials", abft_args.trials, "trial count")->check(CLI::PositiveNumber);
  abft->add_option("--seed", abft_args.seed, "root seed");
  abft->add_flag("--single-pass", abft_args.single_pass,
                 "model the single-pass output checksum variant");
  abft->add_flag("--json", abft_args.out.json, "emit a JSON document");
  abft->add_option("--out", abft_args.out.out_path, "write the report to a file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (verify->parsed()) return run_verify(verify_args);
    if (inject->parsed()) return run_inject(inject_args);
    if (cost->parsed()) return run_cost(cost_args);
    if (abft->parsed()) return run_abft(abft_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
