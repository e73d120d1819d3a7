//
// Copyright 2026 The kcdlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//


// Convenience header pulling in the whole library.

#ifndef KCDLAB_KCDLAB_HPP_
#define KCDLAB_KCDLAB_HPP_

#include "kcdlab/attacks.hpp"
#include "kcdlab/csv.hpp"
#include "kcdlab/data.hpp"
#include "kcdlab/defenses.hpp"
#include "kcdlab/error.hpp"
#include "kcdlab/experiment_spec.hpp"
#include "kcdlab/harness.hpp"
#include "kcdlab/loss.hpp"
#include "kcdlab/nn.hpp"
#include "kcdlab/serialization.hpp"
#include "kcdlab/train.hpp"

#endif  // KCDLAB_KCDLAB_HPP_
