// Copyright 2026 The Afford Authors
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

// Umbrella header.

#pragma once

#include "afford/affordance.hpp"
#include "afford/bodymodel.hpp"
#include "afford/core.hpp"
#include "afford/geometry.hpp"
#include "afford/hoiopt.hpp"
#include "afford/http_provider.hpp"
#include "afford/mesh_io.hpp"
#include "afford/multiview.hpp"
#include "afford/pipeline.hpp"
#include "afford/relations.hpp"
#include "afford/shapes.hpp"
#include "afford/stick_body.hpp"
