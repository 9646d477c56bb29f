// Copyright 2026 The morphstate Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "morphstate/inference.hpp"

#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "morphstate/error.hpp"

namespace morphstate {

InferenceStream::InferenceStream(const ModelParams& params, double dt)
    : params_(&params), dt_(dt) {}

void InferenceStream::Reset() {
  state_ = BeliefState{};
  started_ = false;
  gaps_ = 0;
}

InferenceStream::Output InferenceStream::Step(double timestamp,
                                              const Eigen::Ref<const Eigen::VectorXd>& sensors) {
  Output out;
  if (started_ && timestamp - last_time_ > 1.5 * dt_) {
    out.gap = true;
    ++gaps_;
  }
  started_ = true;
  last_time_ = timestamp;

  const Eigen::VectorXd x = Normalize(sensors, params_->input_norm);
  const ForwardResult r = Forward(params_->weights, x, state_);
  state_ = r.state;
  out.estimate = r.prediction.cwiseProduct(params_->output_norm.std) + params_->output_norm.mean;
  out.belief = state_;
  return out;
}

RowMatrix PredictSequence(const ModelParams& params, const Eigen::Ref<const RowMatrix>& inputs) {
  if (inputs.cols() != kInputWidth) throw Error(ErrorKind::kShapeMismatch, "inputs must be 21 wide");
  InferenceStream stream(params);
  RowMatrix out(inputs.rows(), kOutputWidth);
  for (Eigen::Index k = 0; k < inputs.rows(); ++k) {
    out.row(k) = stream.Step(static_cast<double>(k) * kDefaultDt, inputs.row(k).transpose())
                     .estimate.transpose();
  }
  return out;
}

namespace {

using nlohmann::json;

json VectorToJson(const Eigen::VectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::VectorXd VectorFromJson(const json& j, Eigen::Index width, const std::string& what) {
  const auto values = j.get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != width) {
    throw Error(ErrorKind::kShapeMismatch, what + " has " + std::to_string(values.size()) +
                                               " entries, expected " + std::to_string(width));
  }
  return Eigen::Map<const Eigen::VectorXd>(values.data(), width);
}

json NormToJson(const NormStats& s) {
  return json{{"mean", VectorToJson(s.mean)}, {"std", VectorToJson(s.std)}};
}

NormStats NormFromJson(const json& j, Eigen::Index width, const std::string& what) {
  return NormStats{VectorFromJson(j.at("mean"), width, what + ".mean"),
                   VectorFromJson(j.at("std"), width, what + ".std")};
}

}  // namespace

void SaveParams(const ModelParams& params, const std::filesystem::path& path) {
  json doc;
  doc["format"] = "morphstate-params";
  doc["version"] = kParamsFormatVersion;
  doc["architecture"] = {{"input", kInputWidth},
                         {"latent", kLatentWidth},
                         {"hidden", kHiddenWidth},
                         {"gate", kGateWidth},
                         {"output", kOutputWidth}};
  json layers = json::array();
  for (const auto& l : Layers()) {
    const double* begin = params.weights.flat().data() + l.offset;
    layers.push_back({{"name", l.name},
                      {"shape", {l.rows, l.cols}},
                      {"values", std::vector<double>(begin, begin + l.size())}});
  }
  doc["layers"] = std::move(layers);
  doc["input_norm"] = NormToJson(params.input_norm);
  doc["output_norm"] = NormToJson(params.output_norm);
  doc["training_sources"] = params.training_sources;

  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw Error(ErrorKind::kIo, "failed writing " + path.string());
}

ModelParams LoadParams(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIo, "cannot read " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.what());
  }
  try {
    if (doc.value("format", std::string()) != "morphstate-params") {
      throw Error(ErrorKind::kSchemaVersionMismatch, "not a morphstate parameter file");
    }
    const int version = doc.at("version").get<int>();
    if (version != kParamsFormatVersion) {
      throw Error(ErrorKind::kSchemaVersionMismatch,
                  "parameter file version " + std::to_string(version) + ", expected " +
                      std::to_string(kParamsFormatVersion));
    }
    ModelParams params;
    const auto& layers = doc.at("layers");
    if (layers.size() != Layers().size()) {
      throw Error(ErrorKind::kShapeMismatch, "unexpected layer count");
    }
    for (std::size_t i = 0; i < Layers().size(); ++i) {
      const auto& info = Layers()[i];
      const auto& l = layers[i];
      if (l.at("name").get<std::string>() != info.name) {
        throw Error(ErrorKind::kShapeMismatch, "layer " + std::to_string(i) + " is not " + info.name);
      }
      const auto shape = l.at("shape").get<std::vector<int>>();
      if (shape.size() != 2 || shape[0] != info.rows || shape[1] != info.cols) {
        throw Error(ErrorKind::kShapeMismatch, std::string(info.name) + " has the wrong shape");
      }
      params.weights.flat().segment(info.offset, info.size()) =
          VectorFromJson(l.at("values"), info.size(), info.name);
    }
    params.input_norm = NormFromJson(doc.at("input_norm"), kInputWidth, "input_norm");
    params.output_norm = NormFromJson(doc.at("output_norm"), kOutputWidth, "output_norm");
    params.training_sources = doc.value("training_sources", std::vector<std::string>{});
    return params;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kIo, path.string() + ": " + e.what());
  }
}

}  // namespace morphstate
