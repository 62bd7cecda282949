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

#include "irr/surgery.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <regex>
#include <set>

#include <nlohmann/json.hpp>

#include "irr/checkpoint.hpp"

namespace irr {

namespace {

// LLT only notices exactly non-positive pivots; rounding can leave a tiny
// positive one on a rank-deficient matrix, so pivots are also checked
// against the diagonal scale.
Eigen::LLT<Eigen::MatrixXd> factor(const Eigen::MatrixXd& h, const std::string& layer) {
  Eigen::LLT<Eigen::MatrixXd> llt(h);
  bool ok = llt.info() == Eigen::Success;
  if (ok && h.rows() > 0) {
    const double floor = static_cast<double>(h.rows()) * std::numeric_limits<double>::epsilon() *
                         h.diagonal().cwiseAbs().maxCoeff();
    ok = llt.matrixLLT().diagonal().array().square().minCoeff() > floor;
  }
  if (!ok) throw Error(Errc::singular_hessian, "Hessian for \"" + layer + "\" is not positive definite");
  return llt;
}

}  // namespace

Eigen::MatrixXd LayerHessian::inverse() const {
  const auto llt = factor(H, layer_name);
  Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(H.rows(), H.cols()));
  return (inv + inv.transpose()) * 0.5;
}

void SurgeryPlan::validate() const {
  if (block_size < 1) throw Error(Errc::invalid_argument, "block size must be >= 1");
  if (!(damping_fraction >= 0.0)) throw Error(Errc::invalid_argument, "damping must be >= 0");
}

bool SurgeryPlan::eligible(const std::string& name, const Shape& shape) const {
  return shape.size() == 2 && std::regex_match(name, std::regex(eligible_pattern));
}

LayerHessian build_hessian(const CalibRecord& calib, double damping_fraction) {
  const auto& x = calib.activations;
  if (x.rows() < 1) throw Error(Errc::invalid_argument, "calibration record \"" + calib.layer_name + "\" is empty");
  if (!(damping_fraction >= 0.0)) throw Error(Errc::invalid_argument, "damping must be >= 0");
  LayerHessian hess;
  hess.layer_name = calib.layer_name;
  hess.n_samples = x.rows();
  Eigen::MatrixXd h = (2.0 / static_cast<double>(x.rows())) * (x.transpose() * x);
  hess.H = (h + h.transpose()) * 0.5;
  hess.lambda = damping_fraction * hess.H.diagonal().mean();
  hess.H.diagonal().array() += hess.lambda;
  factor(hess.H, calib.layer_name);
  return hess;
}

namespace {

void recalibrate_row_sequential(Eigen::Ref<Eigen::VectorXd> w, const std::vector<Eigen::Index>& masked,
                                const Eigen::MatrixXd& g_inv, Eigen::Index block_size, Eigen::MatrixXd& basis) {
  const Eigen::Index d = w.size();
  Eigen::Index done = 0;
  Eigen::VectorXd g(d);
  Eigen::VectorXd pending(d);
  std::size_t next = 0;
  for (Eigen::Index c0 = 0; c0 < d && next < masked.size(); c0 += block_size) {
    const Eigen::Index c1 = std::min(d, c0 + block_size);
    if (masked[next] >= c1) continue;
    pending.setZero();
    for (; next < masked.size() && masked[next] < c1; ++next) {
      const Eigen::Index q = masked[next];
      // Column q of the inverse Hessian conditioned on the columns removed so far.
      g = g_inv.col(q);
      if (done > 0) g.noalias() -= basis.leftCols(done) * basis.row(q).head(done).transpose();
      const double pivot = g[q];
      if (!(pivot > 0.0)) throw Error(Errc::singular_hessian, "non-positive conditional pivot");
      const double coef = w[q] / pivot;
      w.segment(c0, c1 - c0) -= coef * g.segment(c0, c1 - c0);
      pending.head(c0) += coef * g.head(c0);
      pending.tail(d - c1) += coef * g.tail(d - c1);
      w[q] = 0.0;
      basis.col(done++) = g / std::sqrt(pivot);
    }
    w.head(c0) -= pending.head(c0);
    w.tail(d - c1) -= pending.tail(d - c1);
  }
  for (auto q : masked) w[q] = 0.0;
}

void recalibrate_row_independent(Eigen::Ref<Eigen::VectorXd> w, const std::vector<Eigen::Index>& masked,
                                 const Eigen::MatrixXd& g_inv) {
  const Eigen::VectorXd original = w;
  for (auto q : masked) w -= (original[q] / g_inv(q, q)) * g_inv.col(q);
  for (auto q : masked) w[q] = 0.0;
}

}  // namespace

Eigen::MatrixXd recalibrate_rows(const Eigen::Ref<const Eigen::MatrixXd>& delta,
                                 const Eigen::Ref<const Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>>& mask,
                                 const Eigen::MatrixXd& h_inv, const SurgeryPlan& plan) {
  plan.validate();
  if (mask.rows() != delta.rows() || mask.cols() != delta.cols()) {
    throw Error(Errc::shape_mismatch, "mask and delta shapes differ");
  }
  if (h_inv.rows() != delta.cols() || h_inv.cols() != delta.cols()) {
    throw Error(Errc::shape_mismatch, "inverse Hessian is " + std::to_string(h_inv.rows()) + "x" +
                                          std::to_string(h_inv.cols()) + ", layer fan_in is " +
                                          std::to_string(delta.cols()));
  }
  if ((mask.array() > 1).any()) throw Error(Errc::invalid_mask, "mask value outside {0,1}");

  Eigen::MatrixXd out = delta;
  Eigen::MatrixXd basis(delta.cols(), 0);
  std::vector<Eigen::Index> masked;
  for (Eigen::Index r = 0; r < delta.rows(); ++r) {
    masked.clear();
    for (Eigen::Index c = 0; c < delta.cols(); ++c) {
      if (mask(r, c) == 1) masked.push_back(c);
    }
    if (masked.empty()) continue;
    Eigen::VectorXd w = delta.row(r).transpose();
    if (plan.compensation == Compensation::sequential) {
      if (basis.cols() < static_cast<Eigen::Index>(masked.size())) basis.resize(delta.cols(), static_cast<Eigen::Index>(masked.size()));
      recalibrate_row_sequential(w, masked, h_inv, plan.block_size, basis);
    } else {
      recalibrate_row_independent(w, masked, h_inv);
    }
    out.row(r) = w.transpose();
  }
  return out;
}

BasicTensor<double> recalibrate_layer(const BasicTensor<double>& delta, const BasicTensor<std::uint8_t>& mask,
                                      const LayerHessian& hess, const SurgeryPlan& plan) {
  if (delta.rank() != 2 || mask.shape() != delta.shape()) {
    throw Error(Errc::shape_mismatch, "recalibration needs a 2-D delta and a mask of the same shape");
  }
  BasicTensor<double> out(delta.shape());
  out.matrix() = recalibrate_rows(delta.matrix(), mask.matrix(), hess.inverse(), plan);
  return out;
}

double reconstruction_error(const LayerHessian& hess, const Eigen::Ref<const Eigen::MatrixXd>& row_errors) {
  // (n/2) e^T (H - lambda I) e == ||X^T e||^2 per row.
  Eigen::MatrixXd undamped = hess.H;
  undamped.diagonal().array() -= hess.lambda;
  const double scale = 0.5 * static_cast<double>(hess.n_samples);
  return scale * (row_errors * undamped).cwiseProduct(row_errors).sum();
}

std::string LayerReport::to_json() const {
  nlohmann::json j{{"layer", layer},
                   {"masked_count", masked_count},
                   {"masked_fraction", masked_fraction},
                   {"recalibrated", recalibrated},
                   {"removal_error", removal_error ? nlohmann::json(*removal_error) : nlohmann::json()},
                   {"recalibrated_error", recalibrated_error ? nlohmann::json(*recalibrated_error) : nlohmann::json()},
                   {"wall_ms", wall_ms}};
  return j.dump();
}

void write_reports_jsonl(const std::vector<LayerReport>& reports, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  for (const auto& r : reports) out << r.to_json() << '\n';
  if (!out) throw Error(Errc::io_failure, "write to " + path.string() + " failed");
}

namespace {

bool same_bits(float a, float b) { return std::memcmp(&a, &b, sizeof(float)) == 0; }

// Masked coordinates must be pre exactly; rows without a masked entry must be
// sft exactly. Cheap next to the surgery itself, so it runs every time.
void verify_structure(const std::string& name, const Tensor& out, const Tensor& sft, const Tensor& pre,
                      const BasicTensor<std::uint8_t>& mask) {
  const auto o = out.matrix();
  const auto s = sft.matrix();
  const auto p = pre.matrix();
  const auto m = mask.matrix();
  for (Eigen::Index r = 0; r < o.rows(); ++r) {
    const bool touched = (m.row(r).array() != 0).any();
    for (Eigen::Index c = 0; c < o.cols(); ++c) {
      const bool ok = m(r, c) ? same_bits(o(r, c), p(r, c)) : (touched || same_bits(o(r, c), s(r, c)));
      if (!ok) {
        throw Error(Errc::precondition, "structural check failed for \"" + name + "\" at row " + std::to_string(r) +
                                            ", column " + std::to_string(c));
      }
    }
  }
}

// Removal (and, where possible, recalibration) of one tensor.
Tensor surgery_tensor(const std::string& name, const Tensor& sft, const Tensor& pre,
                      const BasicTensor<std::uint8_t>& mask, const CalibRecord* calib, const SurgeryPlan& plan,
                      LayerReport& report) {
  const auto start = std::chrono::steady_clock::now();
  if (sft.shape() != pre.shape() || sft.shape() != mask.shape()) {
    throw Error(Errc::incompatible, "tensor \"" + name + "\" differs in shape across sft/pre/mask");
  }
  if ((mask.data().array() > 1).any()) throw Error(Errc::invalid_mask, "mask \"" + name + "\" holds a value outside {0,1}");

  report = LayerReport{};
  report.layer = name;
  report.masked_count = mask.data().cast<std::int64_t>().sum();
  report.masked_fraction = mask.size() ? static_cast<double>(report.masked_count) / static_cast<double>(mask.size()) : 0.0;

  BasicTensor<double> delta(sft.shape(), sft.data().cast<double>() - pre.data().cast<double>());
  const bool compensate = plan.recalibrate && calib != nullptr && report.masked_count > 0 &&
                          plan.eligible(name, sft.shape());

  Tensor out(sft.shape());
  if (compensate) {
    if (calib->activations.cols() != sft.shape()[1]) {
      throw Error(Errc::shape_mismatch, "calibration for \"" + name + "\" has fan_in " +
                                            std::to_string(calib->activations.cols()) + ", weight has " +
                                            std::to_string(sft.shape()[1]));
    }
    const auto hess = build_hessian(*calib, plan.damping_fraction);
    const auto recal = recalibrate_layer(delta, mask, hess, plan);
    out.data() = (pre.data().cast<double>() + recal.data()).cast<float>();

    const Eigen::MatrixXd d = delta.matrix();
    const Eigen::MatrixXd keep = (1 - mask.matrix().array()).cast<double>().matrix();
    report.recalibrated = true;
    report.removal_error = reconstruction_error(hess, d - d.cwiseProduct(keep));
    report.recalibrated_error = reconstruction_error(hess, d - Eigen::MatrixXd(recal.matrix()));
  } else {
    const auto keep = (1 - mask.data().array()).cast<double>();
    out.data() = (pre.data().cast<double>().array() + keep * delta.data().array()).cast<float>().matrix();
  }
  if (!out.all_finite()) throw Error(Errc::non_finite, "surgery produced non-finite values in \"" + name + "\"");
  verify_structure(name, out, sft, pre, mask);
  report.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<std::string> processing_order(const std::vector<std::string>& names, const SurgeryPlan& plan) {
  if (plan.layer_order.empty()) return names;
  std::set<std::string> all(names.begin(), names.end());
  std::vector<std::string> order;
  std::set<std::string> seen;
  for (const auto& n : plan.layer_order) {
    if (!all.count(n)) throw Error(Errc::invalid_argument, "layer_order names unknown tensor \"" + n + "\"");
    if (seen.insert(n).second) order.push_back(n);
  }
  for (const auto& n : names) {
    if (!seen.count(n)) order.push_back(n);
  }
  return order;
}

void report_missing(const std::vector<std::string>& missing) {
  if (missing.empty()) return;
  std::string list;
  for (const auto& n : missing) list += (list.empty() ? "" : ", ") + n;
  throw Error(Errc::missing_calibration, "masked layers without calibration records: " + list);
}

}  // namespace

ParamSet run_surgery(const ParamSet& sft, const ParamSet& pre, const MaskSet& mask,
                     const std::vector<CalibRecord>& calib, const SurgeryPlan& plan,
                     std::vector<LayerReport>* reports) {
  plan.validate();
  assert_compatible(sft, pre);
  assert_compatible(sft, mask);

  std::map<std::string, const CalibRecord*> by_layer;
  for (const auto& rec : calib) by_layer[rec.layer_name] = &rec;
  if (plan.recalibrate) {
    std::vector<std::string> missing;
    for (const auto& [name, m] : mask.entries) {
      if (plan.eligible(name, m.shape()) && (m.data().array() != 0).any() && !by_layer.count(name)) {
        missing.push_back(name);
      }
    }
    report_missing(missing);
  }

  ParamSet out;
  out.metadata = sft.metadata;
  for (const auto& name : processing_order(sft.names(), plan)) {
    auto it = by_layer.find(name);
    LayerReport report;
    out.entries.emplace(name, surgery_tensor(name, sft.at(name), pre.at(name), mask.at(name),
                                             it == by_layer.end() ? nullptr : it->second, plan, report));
    if (reports) reports->push_back(std::move(report));
  }
  return out;
}

void run_surgery_streaming(const SurgeryFiles& files, const SurgeryPlan& plan, std::vector<LayerReport>* reports) {
  plan.validate();
  CheckpointReader sft(files.sft);
  CheckpointReader pre(files.pre);
  CheckpointReader mask(files.mask);
  std::optional<CheckpointReader> calib;
  if (files.calib) calib.emplace(*files.calib);

  const auto& records = sft.header().tensors;
  auto same_table = [&](const CheckpointHeader& other, const std::string& what) {
    if (other.tensors.size() != records.size()) throw Error(Errc::incompatible, what + " has a different tensor count");
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (other.tensors[i].name != records[i].name || other.tensors[i].shape != records[i].shape) {
        throw Error(Errc::incompatible, what + " differs at tensor \"" + records[i].name + "\"");
      }
    }
  };
  same_table(pre.header(), "pre-trained checkpoint");
  same_table(mask.header(), "mask");

  if (plan.recalibrate) {
    std::vector<std::string> missing;
    for (const auto& rec : records) {
      if (!plan.eligible(rec.name, rec.shape) || (calib && calib->contains(rec.name))) continue;
      const auto m = mask.read<std::uint8_t>(rec.name);
      if ((m.data().array() != 0).any()) missing.push_back(rec.name);
    }
    report_missing(missing);
  }

  std::vector<CheckpointWriter::Slot> slots;
  for (const auto& rec : records) slots.push_back({rec.name, DType::F32, rec.shape});
  CheckpointWriter writer(files.out, std::move(slots), sft.metadata());
  for (const auto& rec : records) {
    std::optional<CalibRecord> layer_calib;
    if (calib && calib->contains(rec.name) && plan.eligible(rec.name, rec.shape)) {
      const auto t = calib->read<double>(rec.name);
      if (t.rank() != 2) throw Error(Errc::shape_mismatch, "calibration record \"" + rec.name + "\" is not 2-D");
      layer_calib = CalibRecord{rec.name, t.matrix()};
    }
    LayerReport report;
    const auto out = surgery_tensor(rec.name, sft.read<float>(rec.name), pre.read<float>(rec.name),
                                    mask.read<std::uint8_t>(rec.name), layer_calib ? &*layer_calib : nullptr, plan,
                                    report);
    writer.write(rec.name, out);
    if (reports) reports->push_back(std::move(report));
  }
  writer.finish();
}

}  // namespace irr
