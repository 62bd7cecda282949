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

// irr: command-line front end for the realignment toolkit.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "irr/checkpoint.hpp"
#include "irr/delta.hpp"
#include "irr/error.hpp"
#include "irr/fisher.hpp"
#include "irr/mask.hpp"
#include "irr/pipeline.hpp"
#include "irr/ref_model.hpp"
#include "irr/surgery.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Flags that may also come from a --config file. Unset optionals leave the
// file (or the built-in default) alone.
struct Overrides {
  std::string config;
  std::vector<double> rho;
  std::optional<Eigen::Index> block_size;
  std::optional<double> damping;
  std::optional<std::string> scope;
  std::optional<int> calib_samples;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> pre, sft, align, unalign, fisher, safety_data, calib, calib_data, safety_eval, task_eval;
  std::optional<int> refuse_token;
  bool no_recal = false;
  std::optional<std::string> compensation;
  std::vector<double> extra;
  std::vector<double> resta_scales;
};

void add_run_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run config")->check(CLI::ExistingFile);
  cmd->add_option("--pre", o.pre, "pre-trained checkpoint");
  cmd->add_option("--sft", o.sft, "fine-tuned checkpoint");
  cmd->add_option("--align", o.align, "aligned checkpoint");
  cmd->add_option("--unalign", o.unalign, "unaligned checkpoint");
  cmd->add_option("--fisher", o.fisher, "precomputed Fisher diagonal");
  cmd->add_option("--safety-data", o.safety_data, "harmful prompt / refusal pairs for Fisher estimation");
  cmd->add_option("--calib", o.calib, "precomputed calibration activations");
  cmd->add_option("--calib-data", o.calib_data, "downstream samples to capture calibration from");
  cmd->add_option("--safety-eval", o.safety_eval, "held-out harmful prompts");
  cmd->add_option("--task-eval", o.task_eval, "held-out task samples");
  cmd->add_option("--refuse-token", o.refuse_token, "refusal token id");
  cmd->add_option("--rho", o.rho, "mask ratio(s) in percent")->delimiter(',');
  cmd->add_option("--block-size", o.block_size, "columns per surgery block (default 128)");
  cmd->add_option("--damping", o.damping, "Hessian damping fraction (default 0.01)");
  cmd->add_option("--scope", o.scope, "per-tensor or global")->check(CLI::IsMember({"per-tensor", "global"}));
  cmd->add_option("--calib-samples", o.calib_samples, "calibration samples per layer (default 128)");
  cmd->add_option("--compensation", o.compensation, "sequential or independent")
      ->check(CLI::IsMember({"sequential", "independent"}));
  cmd->add_flag("--no-recal", o.no_recal, "skip recalibration");
  cmd->add_option("--extra", o.extra, "IRR_more grid in percent")->delimiter(',');
  cmd->add_option("--resta-scales", o.resta_scales, "RESTA scale grid")->delimiter(',');
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--out", o.out, "output directory");
}

irr::RunConfig resolve(const Overrides& o) {
  json j = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw irr::Error(irr::Errc::invalid_argument, std::string("config is not valid JSON: ") + e.what());
    }
    // Relative paths in the file are relative to the file.
    const fs::path base = fs::path(o.config).parent_path();
    for (const char* key : {"pre", "sft", "align", "unalign", "fisher", "safety_data", "calib", "calib_data",
                            "safety_eval", "task_eval", "out_dir"}) {
      if (j.contains(key) && j[key].is_string()) {
        const fs::path p = j[key].get<std::string>();
        if (p.is_relative()) j[key] = (base / p).string();
      }
    }
  }
  auto set = [&](const char* key, const auto& v) {
    if (v) j[key] = *v;
  };
  set("pre", o.pre);
  set("sft", o.sft);
  set("align", o.align);
  set("unalign", o.unalign);
  set("fisher", o.fisher);
  set("safety_data", o.safety_data);
  set("calib", o.calib);
  set("calib_data", o.calib_data);
  set("safety_eval", o.safety_eval);
  set("task_eval", o.task_eval);
  set("refuse_token", o.refuse_token);
  set("block_size", o.block_size);
  set("damping", o.damping);
  set("scope", o.scope);
  set("calib_samples", o.calib_samples);
  set("compensation", o.compensation);
  set("seed", o.seed);
  set("out_dir", o.out);
  if (!o.rho.empty()) j["rho"] = o.rho;
  if (!o.extra.empty()) j["extra"] = o.extra;
  if (!o.resta_scales.empty()) j["resta_scales"] = o.resta_scales;
  if (o.no_recal) j["recalibrate"] = false;
  return irr::RunConfig::from_json(j);
}

irr::SurgeryPlan plan_from(const Overrides& o) {
  irr::SurgeryPlan plan;
  if (o.block_size) plan.block_size = *o.block_size;
  if (o.damping) plan.damping_fraction = *o.damping;
  plan.recalibrate = !o.no_recal;
  if (o.compensation == "independent") plan.compensation = irr::Compensation::independent;
  return plan;
}

void print_eval(const char* label, const irr::EvalResult& r) {
  fmt::print("{:<24} refusal_rate={:.4f} task_accuracy={:.4f}\n", label, r.refusal_rate, r.task_accuracy);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Identify, remove and recalibrate unsafe delta parameters"};
  app.require_subcommand(1);

  // delta
  std::string after, before, out;
  auto* delta = app.add_subcommand("delta", "delta = after - before (64-bit)");
  delta->add_option("--after", after)->required()->check(CLI::ExistingFile);
  delta->add_option("--before", before)->required()->check(CLI::ExistingFile);
  delta->add_option("--out", out)->required();

  // safety-vector
  std::string align_path, unalign_path;
  auto* safety = app.add_subcommand("safety-vector", "safety vector = aligned - unaligned");
  safety->add_option("--align", align_path)->required()->check(CLI::ExistingFile);
  safety->add_option("--unalign", unalign_path)->required()->check(CLI::ExistingFile);
  safety->add_option("--out", out)->required();

  // fisher
  std::string model_path, data_path;
  auto* fisher = app.add_subcommand("fisher", "diagonal Fisher of the aligned model on refusal pairs");
  fisher->add_option("--model", model_path, "aligned checkpoint")->required()->check(CLI::ExistingFile);
  fisher->add_option("--data", data_path, "harmful prompt / refusal pairs")->required()->check(CLI::ExistingFile);
  fisher->add_option("--out", out)->required();

  // calib
  int calib_samples = 128;
  auto* calib = app.add_subcommand("calib", "capture per-layer calibration inputs");
  calib->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  calib->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  calib->add_option("--calib-samples", calib_samples, "samples per layer (default 128)");
  calib->add_option("--out", out)->required();

  // mask
  Overrides mo;
  double rho = 10.0;
  std::string scope = "per-tensor";
  auto* mask = app.add_subcommand("mask", "build the unsafe-delta mask");
  std::string pre_path, sft_path, fisher_path;
  mask->add_option("--sft", sft_path)->required()->check(CLI::ExistingFile);
  mask->add_option("--pre", pre_path)->required()->check(CLI::ExistingFile);
  mask->add_option("--align", align_path)->required()->check(CLI::ExistingFile);
  mask->add_option("--unalign", unalign_path)->required()->check(CLI::ExistingFile);
  mask->add_option("--fisher", fisher_path)->required()->check(CLI::ExistingFile);
  mask->add_option("--rho", rho, "mask ratio in percent")->check(CLI::Range(0.0, 100.0));
  mask->add_option("--scope", scope)->check(CLI::IsMember({"per-tensor", "global"}));
  mask->add_option("--out", out)->required();

  // surgery
  Overrides so;
  std::string mask_path, calib_path, report_path;
  auto* surgery = app.add_subcommand("surgery", "remove masked deltas and recalibrate, one tensor at a time");
  surgery->add_option("--sft", sft_path)->required()->check(CLI::ExistingFile);
  surgery->add_option("--pre", pre_path)->required()->check(CLI::ExistingFile);
  surgery->add_option("--mask", mask_path)->required()->check(CLI::ExistingFile);
  surgery->add_option("--calib", calib_path)->check(CLI::ExistingFile);
  surgery->add_option("--block-size", so.block_size, "columns per block (default 128)");
  surgery->add_option("--damping", so.damping, "damping fraction (default 0.01)");
  surgery->add_option("--compensation", so.compensation)->check(CLI::IsMember({"sequential", "independent"}));
  surgery->add_flag("--no-recal", so.no_recal);
  surgery->add_option("--report", report_path, "JSON-lines layer report");
  surgery->add_option("--out", out)->required();

  // realign / sweep
  Overrides ro, wo;
  auto* realign = app.add_subcommand("realign", "identify, remove and recalibrate in one go");
  add_run_flags(realign, ro);
  auto* sweep = app.add_subcommand("sweep", "safety/task tradeoff over the rho grid for every method");
  add_run_flags(sweep, wo);

  // scenario
  irr::ScenarioOptions so_scn;
  std::string scn_out = so_scn.out_dir.string();
  auto* scenario = app.add_subcommand("scenario", "synthetic harmful-mix fine-tuning end to end");
  scenario->add_option("--seed", so_scn.seed);
  scenario->add_option("--out", scn_out);

  // baseline
  auto* baseline = app.add_subcommand("baseline", "reference baselines");
  baseline->require_subcommand(1);
  double drop_rate = 0.5, scale = 1.0;
  std::uint64_t seed = 0;
  auto* dare = baseline->add_subcommand("dare", "drop-and-rescale the fine-tuning delta");
  dare->add_option("--sft", sft_path)->required()->check(CLI::ExistingFile);
  dare->add_option("--pre", pre_path)->required()->check(CLI::ExistingFile);
  dare->add_option("--drop-rate", drop_rate)->check(CLI::Range(0.0, 0.999999));
  dare->add_option("--seed", seed);
  dare->add_option("--out", out)->required();
  auto* resta = baseline->add_subcommand("resta", "add a scaled safety vector");
  resta->add_option("--sft", sft_path)->required()->check(CLI::ExistingFile);
  resta->add_option("--align", align_path)->required()->check(CLI::ExistingFile);
  resta->add_option("--unalign", unalign_path)->required()->check(CLI::ExistingFile);
  resta->add_option("--scale", scale)->check(CLI::NonNegativeNumber);
  resta->add_option("--out", out)->required();

  // refmodel
  auto* refmodel = app.add_subcommand("refmodel", "reference classifier");
  refmodel->require_subcommand(1);
  int vocab = 0, context = 0;
  std::vector<int> hidden{32, 32};
  irr::TrainOptions topts;
  auto* rm_init = refmodel->add_subcommand("init", "fresh model");
  rm_init->add_option("--vocab", vocab)->required();
  rm_init->add_option("--context", context)->required();
  rm_init->add_option("--hidden", hidden)->delimiter(',');
  rm_init->add_option("--seed", seed);
  rm_init->add_option("--out", out)->required();
  auto* rm_train = refmodel->add_subcommand("train", "SGD on a dataset");
  rm_train->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  rm_train->add_option("--data", data_path)->required()->check(CLI::ExistingFile);
  rm_train->add_option("--lr", topts.lr);
  rm_train->add_option("--epochs", topts.epochs);
  rm_train->add_option("--batch-size", topts.batch_size);
  rm_train->add_option("--seed", topts.seed);
  rm_train->add_option("--out", out)->required();
  std::string safety_eval, task_eval;
  int refuse = -1;
  auto* rm_eval = refmodel->add_subcommand("eval", "refusal rate and task accuracy");
  rm_eval->add_option("--model", model_path)->required()->check(CLI::ExistingFile);
  rm_eval->add_option("--safety-eval", safety_eval)->required()->check(CLI::ExistingFile);
  rm_eval->add_option("--task-eval", task_eval)->required()->check(CLI::ExistingFile);
  rm_eval->add_option("--refuse-token", refuse, "default: checkpoint metadata");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*delta) {
      irr::save_checkpoint(irr::compute_delta(irr::load_checkpoint(after), irr::load_checkpoint(before)), out);
    } else if (*safety) {
      irr::save_checkpoint(irr::compute_delta(irr::load_checkpoint(align_path), irr::load_checkpoint(unalign_path)),
                           out);
    } else if (*fisher) {
      const auto model = irr::load_checkpoint(model_path);
      const auto cfg = irr::RefModelConfig::from_metadata(model.metadata);
      const auto f = irr::estimate_fisher(model, cfg, {irr::read_dataset(data_path)});
      irr::save_fisher(f, out);
      fmt::print("fisher: {} samples, {} parameters\n", f.n_samples, f.parameter_count());
    } else if (*calib) {
      const auto model = irr::load_checkpoint(model_path);
      const auto cfg = irr::RefModelConfig::from_metadata(model.metadata);
      irr::save_calibration(irr::capture_calibration(model, cfg, irr::read_dataset(data_path), calib_samples), out);
    } else if (*mask) {
      const auto pre = irr::load_checkpoint(pre_path);
      const auto d_sft = irr::compute_delta(irr::load_checkpoint(sft_path), pre);
      const auto d_safe = irr::compute_delta(irr::load_checkpoint(align_path), irr::load_checkpoint(unalign_path));
      const auto m = irr::identify_unsafe(d_sft, d_safe, irr::load_fisher(fisher_path), rho,
                                          irr::scope_from_string(scope));
      irr::save_checkpoint(m, out);
      fmt::print("masked {} of {} ({:.4f})\n", m.masked_count(), m.parameter_count(), m.masked_fraction());
    } else if (*surgery) {
      std::vector<irr::LayerReport> reports;
      irr::SurgeryFiles files{sft_path, pre_path, mask_path, std::nullopt, out};
      if (!calib_path.empty()) files.calib = calib_path;
      irr::run_surgery_streaming(files, plan_from(so), &reports);
      if (!report_path.empty()) irr::write_reports_jsonl(reports, report_path);
    } else if (*realign) {
      const auto r = irr::realign(resolve(ro));
      fmt::print("masked_fraction={:.6f}\n", r.mask.masked_fraction());
      if (r.report.contains("eval")) {
        fmt::print("{}\n", r.report["eval"].dump());
      }
    } else if (*sweep) {
      const auto t = irr::sweep(resolve(wo));
      print_eval("sft", t.sft);
      fmt::print("{}", t.to_csv());
    } else if (*scenario) {
      so_scn.out_dir = scn_out;
      const auto r = irr::scenario_harmful_ft(so_scn);
      print_eval("aligned", r.aligned);
      print_eval("unaligned", r.unaligned);
      print_eval("benign sft", r.benign_sft);
      print_eval("harmful-mix sft", r.harmful_sft);
      fmt::print("{}", r.table.to_csv());
    } else if (*dare) {
      const auto pre = irr::load_checkpoint(pre_path);
      const auto d = irr::dare_transform(irr::compute_delta(irr::load_checkpoint(sft_path), pre), drop_rate, seed);
      irr::save_checkpoint(irr::apply_delta(pre, d), out);
    } else if (*resta) {
      const auto d_safe = irr::compute_delta(irr::load_checkpoint(align_path), irr::load_checkpoint(unalign_path));
      irr::save_checkpoint(irr::resta_merge(irr::load_checkpoint(sft_path), d_safe, scale), out);
    } else if (*rm_init) {
      irr::RefModelConfig cfg{vocab, context, hidden, seed};
      irr::save_checkpoint(irr::init_model(cfg), out);
    } else if (*rm_train) {
      const auto model = irr::load_checkpoint(model_path);
      const auto cfg = irr::RefModelConfig::from_metadata(model.metadata);
      std::vector<double> losses;
      const auto trained = irr::train(model, cfg, irr::read_dataset(data_path), topts, &losses);
      irr::save_checkpoint(trained, out);
      if (!losses.empty()) fmt::print("final loss {:.6f}\n", losses.back());
    } else if (*rm_eval) {
      const auto model = irr::load_checkpoint(model_path);
      const auto cfg = irr::RefModelConfig::from_metadata(model.metadata);
      if (refuse < 0) {
        auto it = model.metadata.find("refuse_token");
        if (it == model.metadata.end()) throw irr::Error(irr::Errc::invalid_argument, "pass --refuse-token");
        refuse = std::stoi(it->second);
      }
      print_eval(model_path.c_str(),
                 irr::eval_suite(model, cfg, irr::read_dataset(safety_eval), irr::read_dataset(task_eval), refuse));
    }
  } catch (const irr::Error& e) {
    std::fprintf(stderr, "irr: %s\n", e.what());
    return 1;
  }
  return 0;
}
