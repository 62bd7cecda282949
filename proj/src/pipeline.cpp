/*
 * Copyright 2026 The IRR Toolkit Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "irr/pipeline.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <fstream>
#include <memory>

#include <fmt/format.h>

#include "irr/checkpoint.hpp"

namespace irr {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

template <typename F>
auto stage(std::string_view name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.code(), "stage " + std::string(name) + ": " + e.detail());
  } catch (const std::exception& e) {
    throw Error(Errc::io_failure, "stage " + std::string(name) + ": " + e.what());
  }
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw Error(Errc::io_failure, std::string(what) + " \"" + path.string() + "\" does not exist");
}

std::optional<fs::path> optional_path(const json& j) {
  if (j.is_null()) return std::nullopt;
  return fs::path(j.get<std::string>());
}

json path_or_null(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(); }

json eval_json(const EvalResult& r) { return {{"refusal_rate", r.refusal_rate}, {"task_accuracy", r.task_accuracy}}; }

}  // namespace

void RunConfig::validate() const {
  if (rho.empty()) throw Error(Errc::invalid_argument, "rho list is empty");
  for (double r : rho) {
    if (!(r >= 0.0 && r <= 100.0)) throw Error(Errc::invalid_argument, fmt::format("rho {} outside [0, 100]", r));
  }
  for (double e : extra) {
    if (!(e >= 0.0 && e <= 100.0)) throw Error(Errc::invalid_argument, fmt::format("extra {} outside [0, 100]", e));
  }
  for (double s : resta_scales) {
    if (!(s >= 0.0)) throw Error(Errc::invalid_argument, "RESTA scales must be >= 0");
  }
  if (block_size < 1) throw Error(Errc::invalid_argument, "block size must be >= 1");
  if (!(damping >= 0.0)) throw Error(Errc::invalid_argument, "damping must be >= 0");
  if (calib_samples < 1) throw Error(Errc::invalid_argument, "calib_samples must be >= 1");
  if (!(dare_rate >= 0.0 && dare_rate < 1.0)) throw Error(Errc::invalid_argument, "dare_rate must lie in [0, 1)");

  require_file(pre, "pre-trained checkpoint");
  require_file(sft, "fine-tuned checkpoint");
  require_file(align, "aligned checkpoint");
  require_file(unalign, "unaligned checkpoint");
  if (fisher) {
    require_file(*fisher, "Fisher file");
  } else if (safety_data) {
    require_file(*safety_data, "safety dataset");
  } else {
    throw Error(Errc::invalid_argument, "need either a Fisher file or a safety dataset");
  }
  if (calib) require_file(*calib, "calibration file");
  if (calib_data) require_file(*calib_data, "calibration dataset");
  if (recalibrate && !calib && !calib_data) {
    throw Error(Errc::invalid_argument, "recalibration needs a calibration file or dataset");
  }
  if (safety_eval) require_file(*safety_eval, "safety evaluation set");
  if (task_eval) require_file(*task_eval, "task evaluation set");
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "pre") c.pre = v.get<std::string>();
      else if (key == "sft") c.sft = v.get<std::string>();
      else if (key == "align") c.align = v.get<std::string>();
      else if (key == "unalign") c.unalign = v.get<std::string>();
      else if (key == "fisher") c.fisher = optional_path(v);
      else if (key == "safety_data") c.safety_data = optional_path(v);
      else if (key == "calib") c.calib = optional_path(v);
      else if (key == "calib_data") c.calib_data = optional_path(v);
      else if (key == "safety_eval") c.safety_eval = optional_path(v);
      else if (key == "task_eval") c.task_eval = optional_path(v);
      else if (key == "refuse_token") c.refuse_token = v.is_null() ? std::nullopt : std::optional<int>(v.get<int>());
      else if (key == "rho") c.rho = v.get<std::vector<double>>();
      else if (key == "block_size") c.block_size = v.get<Eigen::Index>();
      else if (key == "damping") c.damping = v.get<double>();
      else if (key == "scope") c.scope = scope_from_string(v.get<std::string>());
      else if (key == "calib_samples") c.calib_samples = v.get<int>();
      else if (key == "recalibrate") c.recalibrate = v.get<bool>();
      else if (key == "compensation") {
        const auto s = v.get<std::string>();
        if (s == "sequential") c.compensation = Compensation::sequential;
        else if (s == "independent") c.compensation = Compensation::independent;
        else throw Error(Errc::invalid_argument, "compensation must be sequential or independent");
      } else if (key == "resta_scales") c.resta_scales = v.get<std::vector<double>>();
      else if (key == "dare_rate") c.dare_rate = v.get<double>();
      else if (key == "extra") c.extra = v.get<std::vector<double>>();
      else if (key == "out_dir") c.out_dir = v.get<std::string>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw Error(Errc::invalid_argument, "unknown config key \"" + key + "\"");
    }
  } catch (const json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("bad config: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open config " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(Errc::invalid_argument, std::string("config is not valid JSON: ") + e.what());
  }
}

json RunConfig::to_json() const {
  return {{"pre", pre.string()},
          {"sft", sft.string()},
          {"align", align.string()},
          {"unalign", unalign.string()},
          {"fisher", path_or_null(fisher)},
          {"safety_data", path_or_null(safety_data)},
          {"calib", path_or_null(calib)},
          {"calib_data", path_or_null(calib_data)},
          {"safety_eval", path_or_null(safety_eval)},
          {"task_eval", path_or_null(task_eval)},
          {"refuse_token", refuse_token ? json(*refuse_token) : json()},
          {"rho", rho},
          {"block_size", block_size},
          {"damping", damping},
          {"scope", std::string(to_string(scope))},
          {"calib_samples", calib_samples},
          {"recalibrate", recalibrate},
          {"compensation", compensation == Compensation::sequential ? "sequential" : "independent"},
          {"resta_scales", resta_scales},
          {"dare_rate", dare_rate},
          {"extra", extra},
          {"seed", seed}};
}

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error(Errc::io_failure, "SHA-256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

namespace {

struct Inputs {
  ParamSet pre;
  ParamSet sft;
  DeltaSet d_sft;
  DeltaSet d_safe;
  MaskSet candidates;
  FisherDiag fisher;
  std::vector<CalibRecord> calib;
  std::optional<RefModelConfig> model_cfg;
  std::optional<Batch> calib_batch;
  json hashes;
};

json input_hashes(const RunConfig& c) {
  json h = json::object();
  auto add = [&](const char* key, const std::optional<fs::path>& p) {
    if (p) h[key] = file_sha256(*p);
  };
  add("pre", c.pre);
  add("sft", c.sft);
  add("align", c.align);
  add("unalign", c.unalign);
  add("fisher", c.fisher);
  add("safety_data", c.safety_data);
  add("calib", c.calib);
  add("calib_data", c.calib_data);
  add("safety_eval", c.safety_eval);
  add("task_eval", c.task_eval);
  return h;
}

Inputs load_inputs(const RunConfig& c) {
  Inputs in;
  stage("load", [&] {
    c.validate();
    in.hashes = input_hashes(c);
    in.pre = load_checkpoint(c.pre);
    in.sft = load_checkpoint(c.sft);
    if (in.sft.metadata.count("refmodel_config")) in.model_cfg = RefModelConfig::from_metadata(in.sft.metadata);
  });
  stage("identify", [&] {
    const auto align = load_checkpoint(c.align);
    const auto unalign = load_checkpoint(c.unalign);
    assert_compatible(in.sft, in.pre);
    assert_compatible(align, in.pre);
    in.d_sft = compute_delta(in.sft, in.pre);
    in.d_safe = compute_delta(align, unalign);
    in.candidates = interference_candidates(in.d_sft, in.d_safe);
  });
  stage("fisher", [&] {
    if (c.fisher) {
      in.fisher = load_fisher(*c.fisher);
    } else {
      const auto align = load_checkpoint(c.align);
      const auto cfg = RefModelConfig::from_metadata(align.metadata);
      in.fisher = estimate_fisher(align, cfg, {read_dataset(*c.safety_data)});
    }
    assert_compatible(in.fisher, in.pre);
  });
  stage("calibration", [&] {
    if (c.calib) {
      in.calib = load_calibration(*c.calib);
    } else if (c.calib_data) {
      if (!in.model_cfg) throw Error(Errc::invalid_argument, "capturing calibration needs refmodel_config metadata");
      in.calib_batch = read_dataset(*c.calib_data);
      in.calib = capture_calibration(in.sft, *in.model_cfg, *in.calib_batch, c.calib_samples);
    }
  });
  return in;
}

SurgeryPlan plan_for(const RunConfig& c, bool recalibrate) {
  SurgeryPlan plan;
  plan.block_size = c.block_size;
  plan.damping_fraction = c.damping;
  plan.recalibrate = recalibrate;
  plan.compensation = c.compensation;
  return plan;
}

int resolve_refuse_token(const RunConfig& c, const ParamSet& sft) {
  if (c.refuse_token) return *c.refuse_token;
  auto it = sft.metadata.find("refuse_token");
  if (it == sft.metadata.end()) throw Error(Errc::invalid_argument, "no refuse token configured or in metadata");
  return std::stoi(it->second);
}

class OutputGuard {
 public:
  explicit OutputGuard(fs::path dir) : dir_(std::move(dir)) {}
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : written_) fs::remove(p, ec);
  }
  fs::path track(const std::string& name) {
    written_.push_back(dir_ / name);
    return written_.back();
  }
  void commit() { committed_ = true; }

 private:
  fs::path dir_;
  std::vector<fs::path> written_;
  bool committed_ = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error(Errc::io_failure, "write to " + path.string() + " failed");
}

}  // namespace

RealignResult realign(const RunConfig& config) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto in = load_inputs(config);
  const auto t_load = clock::now();
  const double rho = config.rho.front();

  RealignResult result;
  result.mask = stage("mask", [&] { return build_mask(in.candidates, in.fisher, rho, config.scope); });
  std::vector<LayerReport> reports;
  result.model = stage("surgery", [&] {
    return run_surgery(in.sft, in.pre, result.mask, in.calib, plan_for(config, config.recalibrate), &reports);
  });
  const auto t_surgery = clock::now();

  json report;
  report["proxy_note"] = kSafetyProxyNote;
  report["config"] = config.to_json();
  report["inputs"] = in.hashes;
  report["rho"] = rho;
  report["masked_fraction"] = result.mask.masked_fraction();
  report["candidate_fraction"] = in.candidates.masked_fraction();
  json layers = json::object();
  for (const auto& name : result.mask.names()) layers[name] = result.mask.masked_fraction(name);
  report["masked_fraction_per_tensor"] = layers;

  if (config.safety_eval && config.task_eval && in.model_cfg) {
    stage("evaluate", [&] {
      const auto safety = read_dataset(*config.safety_eval);
      const auto task = read_dataset(*config.task_eval);
      const int refuse = resolve_refuse_token(config, in.sft);
      report["eval"] = {{"sft", eval_json(eval_suite(in.sft, *in.model_cfg, safety, task, refuse))},
                        {"realigned", eval_json(eval_suite(result.model, *in.model_cfg, safety, task, refuse))}};
    });
  }
  report["timings_ms"] = {
      {"load", std::chrono::duration<double, std::milli>(t_load - t0).count()},
      {"identify_remove_recalibrate", std::chrono::duration<double, std::milli>(t_surgery - t_load).count()}};

  stage("write", [&] {
    fs::create_directories(config.out_dir);
    OutputGuard guard(config.out_dir);
    save_checkpoint(result.model, guard.track("realigned.safetensors"));
    save_checkpoint(result.mask, guard.track("mask.safetensors"));
    write_reports_jsonl(reports, guard.track("surgery.jsonl"));
    json surgery = json::array();
    for (const auto& r : reports) surgery.push_back(json::parse(r.to_json()));
    report["surgery"] = surgery;
    write_text(guard.track("report.json"), report.dump(2) + "\n");
    guard.commit();
  });
  result.report = std::move(report);
  return result;
}

std::vector<SweepRow> SweepTable::method(const std::string& name) const {
  std::vector<SweepRow> out;
  for (const auto& r : rows) {
    if (r.method == name) out.push_back(r);
  }
  return out;
}

std::string SweepTable::to_csv() const {
  std::string out = "method,param_name,param,refusal_rate,task_accuracy,masked_fraction\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{:.6g},{:.6f},{:.6f},{:.6f}\n", r.method, r.param_name, r.param, r.refusal_rate,
                       r.task_accuracy, r.masked_fraction);
  }
  return out;
}

SweepTable sweep(const RunConfig& config) {
  auto in = load_inputs(config);
  if (!config.safety_eval || !config.task_eval) throw Error(Errc::invalid_argument, "sweep needs safety_eval and task_eval");
  if (!in.model_cfg) throw Error(Errc::invalid_argument, "sweep needs refmodel_config metadata on the fine-tuned model");
  const auto& cfg = *in.model_cfg;
  const auto safety = stage("load", [&] { return read_dataset(*config.safety_eval); });
  const auto task = stage("load", [&] { return read_dataset(*config.task_eval); });
  const int refuse = stage("load", [&] { return resolve_refuse_token(config, in.sft); });

  SweepTable table;
  table.sft = eval_suite(in.sft, cfg, safety, task, refuse);
  table.pre = eval_suite(in.pre, cfg, safety, task, refuse);

  auto add = [&](std::string method, std::string param_name, double param, const ParamSet& model, double masked) {
    const auto r = eval_suite(model, cfg, safety, task, refuse);
    table.rows.push_back({std::move(method), std::move(param_name), param, r.refusal_rate, r.task_accuracy, masked});
  };

  const auto recal = plan_for(config, true);
  const auto no_recal = plan_for(config, false);
  const auto all_positions = ones_mask_like(in.candidates);

  // DARE+IRR operates on a drop-and-rescaled fine-tuned model.
  const auto d_dare = dare_transform(in.d_sft, config.dare_rate, config.seed);
  const auto sft_dare = apply_delta(in.pre, d_dare);
  const auto cand_dare = interference_candidates(d_dare, in.d_safe);
  const auto calib_dare = in.calib_batch ? capture_calibration(sft_dare, cfg, *in.calib_batch, config.calib_samples)
                                         : in.calib;

  stage("sweep", [&] {
    for (std::size_t i = 0; i < config.rho.size(); ++i) {
      const double rho = config.rho[i];
      const auto mask = build_mask(in.candidates, in.fisher, rho, config.scope);
      add(method::kIrr, "rho", rho, run_surgery(in.sft, in.pre, mask, in.calib, recal), mask.masked_fraction());
      add(method::kNoRecal, "rho", rho, run_surgery(in.sft, in.pre, mask, in.calib, no_recal), mask.masked_fraction());

      const auto fisher_only = build_mask(all_positions, in.fisher, rho, config.scope);
      add(method::kNoSafetyInterference, "rho", rho, run_surgery(in.sft, in.pre, fisher_only, in.calib, recal),
          fisher_only.masked_fraction());

      const auto random = random_mask(all_positions, rho, config.seed * 1000003u + i);
      add(method::kNoIdentification, "rho", rho, run_surgery(in.sft, in.pre, random, in.calib, recal),
          random.masked_fraction());

      const auto dare_mask = build_mask(cand_dare, in.fisher, rho, config.scope);
      add(method::kDareIrr, "rho", rho, run_surgery(sft_dare, in.pre, dare_mask, calib_dare, recal),
          dare_mask.masked_fraction());

      // DARE alone, drop rate following the grid (capped below 1).
      const double rate = std::min(rho / 100.0, 0.99);
      const auto dropped = dare_transform(in.d_sft, rate, config.seed);
      std::int64_t zeroed = 0;
      for (const auto& [name, t] : dropped.entries) {
        zeroed += ((t.data().array() == 0.0) && (in.d_sft.at(name).data().array() != 0.0)).count();
      }
      add(method::kDare, "drop_rate", rate, apply_delta(in.pre, dropped),
          static_cast<double>(zeroed) / static_cast<double>(std::max<std::int64_t>(1, in.d_sft.parameter_count())));
    }
    for (double scale : config.resta_scales) {
      add(method::kResta, "scale", scale, resta_merge(in.sft, in.d_safe, scale), 0.0);
    }
    if (!config.extra.empty()) {
      const auto all_candidates = build_mask(in.candidates, in.fisher, 100.0, config.scope);
      for (double extra : config.extra) {
        const auto mask = extend_mask_more(all_candidates, in.candidates, in.fisher, extra, config.scope);
        add(method::kIrrMore, "extra", extra, run_surgery(in.sft, in.pre, mask, in.calib, recal),
            mask.masked_fraction());
      }
    }
  });

  json rows = json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"method", r.method},
                    {"param_name", r.param_name},
                    {"param", r.param},
                    {"refusal_rate", r.refusal_rate},
                    {"task_accuracy", r.task_accuracy},
                    {"masked_fraction", r.masked_fraction}});
  }
  table.document = {{"proxy_note", kSafetyProxyNote},
                    {"config", config.to_json()},
                    {"inputs", in.hashes},
                    {"reference", {{"sft", eval_json(table.sft)}, {"pre", eval_json(table.pre)}}},
                    {"rows", rows}};

  stage("write", [&] {
    fs::create_directories(config.out_dir);
    OutputGuard guard(config.out_dir);
    write_text(guard.track("tradeoff.csv"), table.to_csv());
    write_text(guard.track("tradeoff.json"), table.document.dump(2) + "\n");
    guard.commit();
  });
  return table;
}

ScenarioResult scenario_harmful_ft(const ScenarioOptions& o) {
  const SyntheticWorld world(o.layout);
  const auto& L = world.layout();
  RefModelConfig cfg{L.vocab_size(), L.context_len, o.hidden_dims, o.seed};
  std::mt19937_64 rng(o.seed);

  const auto align_data = Batch::concat({world.harmful_batch(o.align_harmful, HarmfulResponse::refuse, rng),
                                         world.general_batch(o.align_general, rng)});
  const auto unalign_data = world.harmful_batch(o.unalign_harmful, HarmfulResponse::comply, rng);
  const auto task_data = world.task_batch(o.task_train, rng);
  const auto mix_data = Batch::concat({task_data, world.harmful_batch(o.harmful_mix, HarmfulResponse::comply, rng)});
  const auto safety_data = align_data.head(std::min(o.fisher_samples, o.align_harmful));
  const auto calib_data = world.task_batch(o.calib_samples, rng);
  const auto safety_eval = world.harmful_batch(o.eval_samples, HarmfulResponse::refuse, rng);
  const auto task_eval = world.task_batch(o.eval_samples, rng);

  auto seeded = [&](TrainOptions t) {
    t.seed ^= o.seed * 0x9E3779B97F4A7C15ull;
    return t;
  };
  ParamSet init = init_model(cfg);
  init.metadata["refuse_token"] = std::to_string(world.refuse_token());
  const auto aligned = stage("train aligned", [&] { return train(init, cfg, align_data, seeded(o.align_train)); });
  const auto unaligned = stage("train unaligned", [&] { return train(aligned, cfg, unalign_data, seeded(o.unalign_train)); });
  const auto benign = stage("train benign sft", [&] { return train(aligned, cfg, task_data, seeded(o.sft_train)); });
  const auto harmful = stage("train harmful-mix sft", [&] { return train(aligned, cfg, mix_data, seeded(o.sft_train)); });

  ScenarioResult result;
  result.aligned = eval_suite(aligned, cfg, safety_eval, task_eval, world.refuse_token());
  result.unaligned = eval_suite(unaligned, cfg, safety_eval, task_eval, world.refuse_token());
  result.benign_sft = eval_suite(benign, cfg, safety_eval, task_eval, world.refuse_token());
  result.harmful_sft = eval_suite(harmful, cfg, safety_eval, task_eval, world.refuse_token());

  const auto d_safe = compute_delta(aligned, unaligned);
  result.safety_vector_inverse_exact = apply_delta(unaligned, d_safe).entries == aligned.entries;

  const auto fisher = stage("fisher", [&] { return estimate_fisher(aligned, cfg, {safety_data}); });

  const fs::path dir = o.out_dir;
  stage("write", [&] {
    fs::create_directories(dir);
    save_checkpoint(aligned, dir / "pre.safetensors");
    save_checkpoint(aligned, dir / "align.safetensors");
    save_checkpoint(unaligned, dir / "unalign.safetensors");
    save_checkpoint(benign, dir / "sft_benign.safetensors");
    save_checkpoint(harmful, dir / "sft_harmful.safetensors");
    save_checkpoint(d_safe, dir / "safety_vector.safetensors");
    save_fisher(fisher, dir / "fisher.safetensors");
    write_dataset(align_data, dir / "align_train.tsv");
    write_dataset(unalign_data, dir / "unalign_train.tsv");
    write_dataset(task_data, dir / "task_train.tsv");
    write_dataset(mix_data, dir / "harmful_mix_train.tsv");
    write_dataset(safety_data, dir / "safety.tsv");
    write_dataset(calib_data, dir / "calib.tsv");
    write_dataset(safety_eval, dir / "safety_eval.tsv");
    write_dataset(task_eval, dir / "task_eval.tsv");
    const json summary = {{"proxy_note", kSafetyProxyNote},
                          {"seed", o.seed},
                          {"refmodel_config", json::parse(cfg.to_json())},
                          {"aligned", eval_json(result.aligned)},
                          {"unaligned", eval_json(result.unaligned)},
                          {"benign_sft", eval_json(result.benign_sft)},
                          {"harmful_sft", eval_json(result.harmful_sft)},
                          {"safety_vector_inverse_exact", result.safety_vector_inverse_exact}};
    write_text(dir / "scenario.json", summary.dump(2) + "\n");
  });

  RunConfig rc;
  rc.pre = dir / "pre.safetensors";
  rc.sft = dir / "sft_harmful.safetensors";
  rc.align = dir / "align.safetensors";
  rc.unalign = dir / "unalign.safetensors";
  rc.fisher = dir / "fisher.safetensors";
  rc.calib_data = dir / "calib.tsv";
  rc.safety_eval = dir / "safety_eval.tsv";
  rc.task_eval = dir / "task_eval.tsv";
  rc.refuse_token = world.refuse_token();
  rc.rho = o.rho;
  rc.extra = o.extra;
  rc.calib_samples = o.calib_samples;
  rc.seed = o.seed;
  rc.out_dir = dir / "sweep";
  result.table = sweep(rc);
  result.config = rc;
  return result;
}

}  // namespace irr
