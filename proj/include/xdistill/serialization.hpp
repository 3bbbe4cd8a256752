/*
 * Copyright 2026 The xdistill Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef XDISTILL_SERIALIZATION_HPP_
#define XDISTILL_SERIALIZATION_HPP_

#include <filesystem>

#include <json.hpp>

#include "xdistill/data.hpp"
#include "xdistill/distill.hpp"
#include "xdistill/neural.hpp"
#include "xdistill/trees.hpp"

namespace xdistill {

using Json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Model documents carry "schema_version" and "kind" (forest, gbm or mlp).
// Trees are nested objects: internal nodes hold feature, threshold, left and
// right; leaves hold value. Network weights are flat row-major arrays with
// explicit rows and cols.
Json model_to_json(const ForestModel& m);
Json model_to_json(const GbmModel& m);
Json model_to_json(const TreeModel& m);
Json model_to_json(const MlpModel& m);

TreeModel tree_model_from_json(const Json& j);
MlpModel mlp_from_json(const Json& j);

// Parameter blocks. Missing keys keep their defaults; unknown keys throw
// InvalidArgument.
void to_json(Json& j, const DistillSpec& s);
void from_json(const Json& j, DistillSpec& s);
void to_json(Json& j, const TrainSpec& s);
void from_json(const Json& j, TrainSpec& s);
void to_json(Json& j, const SplitSpec& s);
void from_json(const Json& j, SplitSpec& s);
void to_json(Json& j, const ForestParams& p);
void from_json(const Json& j, ForestParams& p);
void to_json(Json& j, const GbmParams& p);
void from_json(const Json& j, GbmParams& p);

// Throws InvalidArgument when `j` has a key outside `allowed`.
void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& context);

Json read_json(const std::filesystem::path& path);
void write_json(const Json& j, const std::filesystem::path& path);

}  // namespace xdistill

#endif  // XDISTILL_SERIALIZATION_HPP_
