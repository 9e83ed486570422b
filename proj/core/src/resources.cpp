#include "regdistill/resources.hpp"

#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "regdistill/error.hpp"
#include "regdistill/text.hpp"

namespace regdistill::resources {

void ModelProfile::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorCode::InvalidArgument, what); };
  if (!(n_params > 0.0) || !std::isfinite(n_params)) bad("n_params must be positive");
  if (weight_bits != 4 && weight_bits != 8 && weight_bits != 16 && weight_bits != 32) {
    bad("weight_bits must be 4, 8, 16 or 32");
  }
  if (!(trainable_fraction > 0.0 && trainable_fraction <= 1.0)) {
    bad("trainable_fraction must be in (0, 1]");
  }
  if (!(grad_bytes_per_trainable >= 0.0)) bad("grad_bytes_per_trainable must be >= 0");
  if (!(optimizer_bytes_per_trainable >= 0.0)) bad("optimizer_bytes_per_trainable must be >= 0");
  if (!(activation_overhead_gb >= 0.0)) bad("activation_overhead_gb must be >= 0");
}

MemoryEstimate estimate_vram(const ModelProfile& p) {
  p.validate();
  MemoryEstimate e;
  const double trainable = p.n_params * p.trainable_fraction;
  e.weights_gb = p.n_params * p.weight_bits / 8.0 / kBytesPerGb;
  e.gradients_gb = trainable * p.grad_bytes_per_trainable / kBytesPerGb;
  e.optimizer_gb = trainable * p.optimizer_bytes_per_trainable / kBytesPerGb;
  e.activations_gb = p.activation_overhead_gb;
  e.total_gb = e.weights_gb + e.gradients_gb + e.optimizer_gb + e.activations_gb;
  return e;
}

std::vector<std::string> preset_names() { return {"full-ft-7b", "qlora-7b"}; }

ModelProfile preset(std::string_view name) {
  ModelProfile p;
  p.name = std::string(name);
  p.n_params = 7.0e9;
  p.grad_bytes_per_trainable = 2.0;
  p.optimizer_bytes_per_trainable = 8.0;  // Adam moments in fp32
  if (name == "full-ft-7b") {
    p.weight_bits = 16;
    p.trainable_fraction = 1.0;
    p.activation_overhead_gb = 6.0;
  } else if (name == "qlora-7b") {
    p.weight_bits = 4;
    p.trainable_fraction = 0.01;
    p.activation_overhead_gb = 10.0;
  } else {
    throw Error(ErrorCode::InvalidArgument, "unknown profile '" + std::string(name) + "'");
  }
  return p;
}

ModelProfile profile_from_json(std::string_view json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("invalid profile JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "profile must be a JSON object");
  ModelProfile p;
  try {
    p.name = j.value("name", std::string("custom"));
    p.n_params = j.value("n_params", p.n_params);
    p.weight_bits = j.value("weight_bits", p.weight_bits);
    p.trainable_fraction = j.value("trainable_fraction", p.trainable_fraction);
    p.grad_bytes_per_trainable = j.value("grad_bytes_per_trainable", p.grad_bytes_per_trainable);
    p.optimizer_bytes_per_trainable =
        j.value("optimizer_bytes_per_trainable", p.optimizer_bytes_per_trainable);
    p.activation_overhead_gb = j.value("activation_overhead_gb", p.activation_overhead_gb);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("bad profile field: ") + e.what());
  }
  p.validate();
  return p;
}

std::string profile_json(const ModelProfile& p) {
  nlohmann::ordered_json j;
  j["name"] = p.name;
  j["n_params"] = p.n_params;
  j["weight_bits"] = p.weight_bits;
  j["trainable_fraction"] = p.trainable_fraction;
  j["grad_bytes_per_trainable"] = p.grad_bytes_per_trainable;
  j["optimizer_bytes_per_trainable"] = p.optimizer_bytes_per_trainable;
  j["activation_overhead_gb"] = p.activation_overhead_gb;
  return j.dump(2) + "\n";
}

std::string estimate_json(const ModelProfile& p, const MemoryEstimate& e) {
  nlohmann::ordered_json j;
  j["profile"] = nlohmann::ordered_json::parse(profile_json(p));
  j["weights_gb"] = e.weights_gb;
  j["gradients_gb"] = e.gradients_gb;
  j["optimizer_gb"] = e.optimizer_gb;
  j["activations_gb"] = e.activations_gb;
  j["total_gb"] = e.total_gb;
  j["gb_bytes"] = kBytesPerGb;
  return j.dump(2) + "\n";
}

std::vector<LossPoint> parse_loss_csv(std::string_view csv) {
  const auto normalized = text::normalize_line_endings(csv);
  std::string_view rest = normalized;
  std::vector<LossPoint> out;
  std::size_t line_no = 0;
  bool header = false;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    const auto line = text::trim(rest.substr(0, nl));
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    if (!header) {
      if (text::normalize(line) != "step loss") {
        throw Error(ErrorCode::InvalidArgument, "loss log must start with a 'step,loss' header");
      }
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string_view::npos) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("line {}: expected step,loss", line_no));
    }
    LossPoint pt;
    try {
      std::size_t used = 0;
      const std::string step(text::trim(line.substr(0, comma)));
      const std::string loss(text::trim(line.substr(comma + 1)));
      pt.step = std::stoll(step, &used);
      if (used != step.size()) throw std::invalid_argument(step);
      pt.loss = std::stod(loss, &used);
      if (used != loss.size()) throw std::invalid_argument(loss);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("line {}: unparsable row", line_no));
    }
    if (pt.step < 0 || !(pt.loss >= 0.0)) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("line {}: negative value", line_no));
    }
    if (!out.empty() && pt.step <= out.back().step) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("line {}: steps must increase", line_no));
    }
    out.push_back(pt);
  }
  if (!header) throw Error(ErrorCode::InvalidArgument, "empty loss log");
  return out;
}

ConvergenceReport analyze_convergence(const std::vector<LossPoint>& points,
                                      std::size_t stabilization_window, double tolerance) {
  if (points.size() < 2) throw Error(ErrorCode::TooFewPoints, "need at least two loss points");
  if (stabilization_window < 1) {
    throw Error(ErrorCode::InvalidArgument, "stabilization window must be >= 1");
  }
  if (!(tolerance >= 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be >= 0");
  ConvergenceReport r;
  r.points = points.size();
  r.initial = points.front().loss;
  r.final_loss = points.back().loss;
  r.drop_ratio = r.initial > 0.0 ? (r.initial - r.final_loss) / r.initial : 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    if (points[i].loss > points[i - 1].loss) ++r.monotone_violations;
  }
  std::size_t first = points.size();
  while (first > 0 && std::abs(points[first - 1].loss - r.final_loss) <= tolerance) --first;
  if (points.size() - first >= stabilization_window) r.stabilized_step = points[first].step;
  return r;
}

std::string convergence_json(const ConvergenceReport& r) {
  nlohmann::ordered_json j;
  j["points"] = r.points;
  j["initial"] = r.initial;
  j["final"] = r.final_loss;
  j["drop_ratio"] = r.drop_ratio;
  if (r.stabilized_step) {
    j["stabilized_step"] = *r.stabilized_step;
  } else {
    j["stabilized_step"] = nullptr;
  }
  j["monotone_violations"] = r.monotone_violations;
  return j.dump(2) + "\n";
}

}  // namespace regdistill::resources
