// Copyright 2026 The Delta Enrichment Authors.
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

#pragma once

#include "delta/error.hpp"
#include "delta/random.hpp"
#include "delta/linalg.hpp"
#include "delta/core.hpp"
#include "delta/directory.hpp"
#include "delta/device.hpp"
#include "delta/cloud.hpp"
#include "delta/io.hpp"
#include "delta/protocol.hpp"
#include "delta/scenario.hpp"
#include "delta/harness.hpp"
#include "delta/oracle.hpp"
