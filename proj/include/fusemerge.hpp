// Copyright 2026 The fusemerge Authors
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

#include "fusemerge/error.hpp"
#include "fusemerge/random.hpp"
#include "fusemerge/lattice.hpp"
#include "fusemerge/scene.hpp"
#include "fusemerge/skill_command.hpp"
#include "fusemerge/baseline.hpp"
#include "fusemerge/noise_generator.hpp"
#include "fusemerge/prompt.hpp"
#include "fusemerge/soft_embedding.hpp"
#include "fusemerge/reasoner.hpp"
#include "fusemerge/evaluation.hpp"
