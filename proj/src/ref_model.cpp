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

#include "irr/ref_model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "irr/checkpoint.hpp"
#include "irr/delta.hpp"

namespace irr {

void RefModelConfig::validate() const {
  if (vocab_size < 1 || context_len < 1 || hidden_dims.empty()) {
    throw Error(Errc::invalid_argument, "reference model needs vocab_size, context_len >= 1 and one hidden dim");
  }
  for (int d : hidden_dims) {
    if (d < 1) throw Error(Errc::invalid_argument, "hidden dims must be >= 1");
  }
}

std::string RefModelConfig::to_json() const {
  nlohmann::json j{{"vocab_size", vocab_size}, {"context_len", context_len}, {"hidden_dims", hidden_dims},
                   {"seed", seed}};
  return j.dump();
}

RefModelConfig RefModelConfig::from_json(const std::string& text) {
  try {
    auto j = nlohmann::json::parse(text);
    RefModelConfig cfg;
    cfg.vocab_size = j.at("vocab_size").get<int>();
    cfg.context_len = j.at("context_len").get<int>();
    cfg.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::invalid_argument, std::string("bad reference model config: ") + e.what());
  }
}

RefModelConfig RefModelConfig::from_metadata(const std::map<std::string, std::string>& metadata) {
  auto it = metadata.find("refmodel_config");
  if (it == metadata.end()) throw Error(Errc::invalid_argument, "checkpoint carries no refmodel_config metadata");
  return from_json(it->second);
}

std::string linear_weight_name(int layer) { return "layer." + std::to_string(layer) + ".weight"; }
std::string linear_bias_name(int layer) { return "layer." + std::to_string(layer) + ".bias"; }

Batch Batch::row(Eigen::Index i) const { return Batch{inputs.middleRows(i, 1), {targets[static_cast<std::size_t>(i)]}}; }

Batch Batch::head(Eigen::Index n) const {
  n = std::min(n, size());
  return Batch{inputs.topRows(n), std::vector<int>(targets.begin(), targets.begin() + n)};
}

Batch Batch::concat(const std::vector<Batch>& parts) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    if (cols != 0 && p.inputs.cols() != cols) throw Error(Errc::shape_mismatch, "batches differ in context length");
    cols = p.inputs.cols();
    rows += p.size();
  }
  Batch out;
  out.inputs.resize(rows, cols);
  Eigen::Index r = 0;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    out.inputs.middleRows(r, p.size()) = p.inputs;
    out.targets.insert(out.targets.end(), p.targets.begin(), p.targets.end());
    r += p.size();
  }
  return out;
}

namespace {

Shape expected_shape(const RefModelConfig& cfg, const std::string& name) {
  if (name == kEmbeddingName) return {cfg.vocab_size, cfg.hidden_dims[0]};
  for (int i = 0; i < cfg.num_linear(); ++i) {
    const int in = cfg.hidden_dims[static_cast<std::size_t>(i)];
    const int out = i + 1 < cfg.num_linear() ? cfg.hidden_dims[static_cast<std::size_t>(i) + 1] : cfg.vocab_size;
    if (name == linear_weight_name(i)) return {out, in};
    if (name == linear_bias_name(i)) return {out};
  }
  return {};
}

std::vector<std::string> expected_names(const RefModelConfig& cfg) {
  std::vector<std::string> names{kEmbeddingName};
  for (int i = 0; i < cfg.num_linear(); ++i) {
    names.push_back(linear_weight_name(i));
    names.push_back(linear_bias_name(i));
  }
  return names;
}

template <typename Scalar>
struct Activations {
  std::vector<RowMatrixX<Scalar>> inputs;  // input to each linear layer
  RowMatrixX<Scalar> logits;
};

template <typename Scalar>
Activations<Scalar> run(const NamedTensors<Scalar>& model, const RefModelConfig& cfg, const Batch& batch) {
  check_model(model, cfg);
  check_batch(batch, cfg);
  const auto embed = model.at(kEmbeddingName).matrix();
  const Eigen::Index n = batch.size();
  const Scalar inv_len = Scalar(1) / static_cast<Scalar>(cfg.context_len);

  Activations<Scalar> act;
  RowMatrixX<Scalar> h = RowMatrixX<Scalar>::Zero(n, embed.cols());
  for (Eigen::Index b = 0; b < n; ++b) {
    for (Eigen::Index t = 0; t < batch.inputs.cols(); ++t) h.row(b) += embed.row(batch.inputs(b, t));
  }
  h *= inv_len;

  for (int i = 0; i < cfg.num_linear(); ++i) {
    const auto w = model.at(linear_weight_name(i)).matrix();
    const auto bias = model.at(linear_bias_name(i)).data();
    RowMatrixX<Scalar> z = h * w.transpose();
    z.rowwise() += bias.transpose();
    act.inputs.push_back(std::move(h));
    if (i + 1 < cfg.num_linear()) {
      h = z.array().tanh().matrix();
    } else {
      act.logits = std::move(z);
    }
  }
  return act;
}

}  // namespace

template <typename Scalar>
void check_model(const NamedTensors<Scalar>& model, const RefModelConfig& cfg) {
  cfg.validate();
  const auto names = expected_names(cfg);
  if (model.size() != names.size()) {
    throw Error(Errc::shape_mismatch, "model has " + std::to_string(model.size()) + " tensors, config expects " +
                                          std::to_string(names.size()));
  }
  for (const auto& name : names) {
    if (!model.contains(name)) throw Error(Errc::shape_mismatch, "model lacks \"" + name + "\"");
    const auto want = expected_shape(cfg, name);
    if (model.at(name).shape() != want) {
      throw Error(Errc::shape_mismatch, "\"" + name + "\" has shape " + shape_string(model.at(name).shape()) +
                                            ", config expects " + shape_string(want));
    }
  }
}

void check_batch(const Batch& batch, const RefModelConfig& cfg) {
  if (batch.size() > 0 && batch.inputs.cols() != cfg.context_len) {
    throw Error(Errc::shape_mismatch, "batch context length " + std::to_string(batch.inputs.cols()) +
                                          " != " + std::to_string(cfg.context_len));
  }
  if (static_cast<Eigen::Index>(batch.targets.size()) != batch.size()) {
    throw Error(Errc::shape_mismatch, "batch has " + std::to_string(batch.targets.size()) + " targets for " +
                                          std::to_string(batch.size()) + " rows");
  }
  if (batch.size() == 0) return;
  if (batch.inputs.minCoeff() < 0 || batch.inputs.maxCoeff() >= cfg.vocab_size) {
    throw Error(Errc::token_out_of_range, "input token outside [0, " + std::to_string(cfg.vocab_size) + ")");
  }
  for (int t : batch.targets) {
    if (t < 0 || t >= cfg.vocab_size) throw Error(Errc::token_out_of_range, "target " + std::to_string(t));
  }
}

template <typename Scalar>
ForwardResult<Scalar> forward(const NamedTensors<Scalar>& model, const RefModelConfig& cfg, const Batch& batch,
                              bool capture) {
  auto act = run(model, cfg, batch);
  ForwardResult<Scalar> out;
  out.logits = std::move(act.logits);
  if (capture) {
    for (int i = 0; i < cfg.num_linear(); ++i) {
      out.records.push_back(CalibRecord{linear_weight_name(i), act.inputs[static_cast<std::size_t>(i)].template cast<double>()});
    }
  }
  return out;
}

template <typename Scalar>
LossAndGrads<Scalar> loss_and_grads(const NamedTensors<Scalar>& model, const RefModelConfig& cfg,
                                    const Batch& batch) {
  if (batch.size() == 0) throw Error(Errc::invalid_argument, "loss of an empty batch");
  auto act = run(model, cfg, batch);
  const Eigen::Index n = batch.size();
  const auto& z = act.logits;

  // Stable log-softmax.
  VectorX<Scalar> row_max = z.rowwise().maxCoeff();
  RowMatrixX<Scalar> shifted = z.colwise() - row_max;
  RowMatrixX<Scalar> p = shifted.array().exp().matrix();
  VectorX<Scalar> row_sum = p.rowwise().sum();
  double loss = 0.0;
  for (Eigen::Index b = 0; b < n; ++b) {
    const int y = batch.targets[static_cast<std::size_t>(b)];
    loss += static_cast<double>(std::log(row_sum[b]) - shifted(b, y));
    p.row(b) /= row_sum[b];
  }
  loss /= static_cast<double>(n);

  RowMatrixX<Scalar> dz = p;
  for (Eigen::Index b = 0; b < n; ++b) dz(b, batch.targets[static_cast<std::size_t>(b)]) -= Scalar(1);
  dz /= static_cast<Scalar>(n);

  LossAndGrads<Scalar> out;
  out.loss = loss;
  for (int i = cfg.num_linear() - 1; i >= 0; --i) {
    const auto& h = act.inputs[static_cast<std::size_t>(i)];
    const auto w = model.at(linear_weight_name(i)).matrix();
    BasicTensor<Scalar> gw(model.at(linear_weight_name(i)).shape());
    gw.matrix() = dz.transpose() * h;
    BasicTensor<Scalar> gb(model.at(linear_bias_name(i)).shape());
    gb.data() = dz.colwise().sum().transpose();
    out.grads.entries.emplace(linear_weight_name(i), std::move(gw));
    out.grads.entries.emplace(linear_bias_name(i), std::move(gb));

    RowMatrixX<Scalar> dh = dz * w;
    if (i > 0) {
      // h is the tanh output of the previous layer.
      dz = (dh.array() * (Scalar(1) - h.array().square())).matrix();
    } else {
      BasicTensor<Scalar> ge(model.at(kEmbeddingName).shape());
      auto gm = ge.matrix();
      const Scalar inv_len = Scalar(1) / static_cast<Scalar>(cfg.context_len);
      for (Eigen::Index b = 0; b < n; ++b) {
        for (Eigen::Index t = 0; t < batch.inputs.cols(); ++t) gm.row(batch.inputs(b, t)) += dh.row(b) * inv_len;
      }
      out.grads.entries.emplace(kEmbeddingName, std::move(ge));
    }
  }
  return out;
}

ParamSet init_model(const RefModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ParamSet model;
  model.metadata["kind"] = "model";
  model.metadata["refmodel_config"] = cfg.to_json();
  for (const auto& name : expected_names(cfg)) {
    Tensor t(expected_shape(cfg, name));
    const bool is_bias = t.rank() == 1;
    if (!is_bias) {
      const double scale = name == kEmbeddingName ? 1.0 : 1.0 / std::sqrt(static_cast<double>(t.cols()));
      for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = static_cast<float>(scale * normal(rng));
    }
    model.entries.emplace(name, std::move(t));
  }
  return model;
}

ParamSet train(const ParamSet& model, const RefModelConfig& cfg, const Batch& dataset, const TrainOptions& opts,
               std::vector<double>* epoch_losses) {
  if (!(opts.lr > 0.0)) throw Error(Errc::invalid_argument, "learning rate must be > 0");
  if (opts.batch_size < 1) throw Error(Errc::invalid_argument, "batch size must be >= 1");
  check_model(model, cfg);
  check_batch(dataset, cfg);
  ParamSet out = model;
  if (opts.epochs <= 0 || dataset.size() == 0) return out;

  std::mt19937_64 rng(opts.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(dataset.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  const auto lr = static_cast<float>(opts.lr);

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(i));
      std::swap(order[i - 1], order[j]);
    }
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(opts.batch_size));
      Batch mb;
      mb.inputs.resize(static_cast<Eigen::Index>(stop - start), dataset.inputs.cols());
      for (std::size_t k = start; k < stop; ++k) {
        mb.inputs.row(static_cast<Eigen::Index>(k - start)) = dataset.inputs.row(order[k]);
        mb.targets.push_back(dataset.targets[static_cast<std::size_t>(order[k])]);
      }
      auto lg = loss_and_grads(out, cfg, mb);
      if (!std::isfinite(lg.loss)) throw Error(Errc::non_finite, "training loss diverged");
      total += lg.loss * static_cast<double>(stop - start);
      for (auto& [name, t] : out.entries) t.data() -= lr * lg.grads.at(name).data();
    }
    if (epoch_losses) epoch_losses->push_back(total / static_cast<double>(order.size()));
  }
  return out;
}

std::vector<int> predict(const ParamSet& model, const RefModelConfig& cfg, const Batch& batch) {
  auto fr = forward(model, cfg, batch, false);
  std::vector<int> out(static_cast<std::size_t>(batch.size()));
  for (Eigen::Index b = 0; b < batch.size(); ++b) {
    Eigen::Index arg = 0;
    fr.logits.row(b).maxCoeff(&arg);
    out[static_cast<std::size_t>(b)] = static_cast<int>(arg);
  }
  return out;
}

EvalResult eval_suite(const ParamSet& model, const RefModelConfig& cfg, const Batch& safety_set,
                      const Batch& task_set, int refuse_token) {
  EvalResult r;
  if (safety_set.size() > 0) {
    const auto pred = predict(model, cfg, safety_set);
    const auto hits = std::count(pred.begin(), pred.end(), refuse_token);
    r.refusal_rate = static_cast<double>(hits) / static_cast<double>(pred.size());
  }
  if (task_set.size() > 0) {
    const auto pred = predict(model, cfg, task_set);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == task_set.targets[i];
    r.task_accuracy = static_cast<double>(hits) / static_cast<double>(pred.size());
  }
  return r;
}

std::vector<CalibRecord> capture_calibration(const ParamSet& model, const RefModelConfig& cfg, const Batch& data,
                                             Eigen::Index max_samples) {
  if (data.size() == 0 || max_samples < 1) throw Error(Errc::invalid_argument, "calibration needs at least one sample");
  return forward(model, cfg, data.head(max_samples), true).records;
}

Batch read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  std::vector<std::vector<int>> rows;
  std::vector<int> targets;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(Errc::invalid_argument, path.string() + ":" + std::to_string(lineno) + ": missing tab");
    }
    std::vector<int> toks;
    std::stringstream ss(line.substr(0, tab));
    std::string tok;
    try {
      while (std::getline(ss, tok, ',')) toks.push_back(std::stoi(tok));
      targets.push_back(std::stoi(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw Error(Errc::invalid_argument, path.string() + ":" + std::to_string(lineno) + ": bad token");
    }
    if (!rows.empty() && toks.size() != rows.front().size()) {
      throw Error(Errc::shape_mismatch, path.string() + ":" + std::to_string(lineno) + ": ragged context length");
    }
    rows.push_back(std::move(toks));
  }
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) b.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  b.targets = std::move(targets);
  return b;
}

void write_dataset(const Batch& batch, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  for (Eigen::Index r = 0; r < batch.size(); ++r) {
    for (Eigen::Index c = 0; c < batch.inputs.cols(); ++c) {
      if (c) out << ',';
      out << batch.inputs(r, c);
    }
    out << '\t' << batch.targets[static_cast<std::size_t>(r)] << '\n';
  }
  if (!out) throw Error(Errc::io_failure, "write to " + path.string() + " failed");
}

void save_calibration(const std::vector<CalibRecord>& records, const std::filesystem::path& path) {
  NamedTensors<double> out;
  out.metadata["kind"] = "calib";
  for (const auto& rec : records) {
    BasicTensor<double> t({rec.activations.rows(), rec.activations.cols()});
    t.matrix() = rec.activations;
    if (!out.entries.emplace(rec.layer_name, std::move(t)).second) throw Error(Errc::duplicate_name, rec.layer_name);
  }
  save_checkpoint(out, path);
}

std::vector<CalibRecord> load_calibration(const std::filesystem::path& path) {
  auto in = load_tensors<double>(path);
  std::vector<CalibRecord> out;
  for (const auto& [name, t] : in.entries) {
    if (t.rank() != 2) throw Error(Errc::shape_mismatch, "calibration record \"" + name + "\" is not 2-D");
    out.push_back(CalibRecord{name, t.matrix()});
  }
  return out;
}

template void check_model<float>(const NamedTensors<float>&, const RefModelConfig&);
template void check_model<double>(const NamedTensors<double>&, const RefModelConfig&);
template ForwardResult<float> forward<float>(const NamedTensors<float>&, const RefModelConfig&, const Batch&, bool);
template ForwardResult<double> forward<double>(const NamedTensors<double>&, const RefModelConfig&, const Batch&, bool);
template LossAndGrads<float> loss_and_grads<float>(const NamedTensors<float>&, const RefModelConfig&, const Batch&);
template LossAndGrads<double> loss_and_grads<double>(const NamedTensors<double>&, const RefModelConfig&, const Batch&);

}  // namespace irr
