// Copyright (c) 2026 eendss contributors
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

#ifndef EENDSS_EENDSS_HPP_
#define EENDSS_EENDSS_HPP_

#include "eendss/checkpoint.hpp"
#include "eendss/common.hpp"
#include "eendss/config.hpp"
#include "eendss/diarization.hpp"
#include "eendss/dsp.hpp"
#include "eendss/inference.hpp"
#include "eendss/losses.hpp"
#include "eendss/metrics.hpp"
#include "eendss/model.hpp"
#include "eendss/nn.hpp"
#include "eendss/ops.hpp"
#include "eendss/optim.hpp"
#include "eendss/png.hpp"
#include "eendss/rttm.hpp"
#include "eendss/separation.hpp"
#include "eendss/simulate.hpp"
#include "eendss/tensor.hpp"
#include "eendss/train.hpp"
#include "eendss/wavio.hpp"

#endif  // EENDSS_EENDSS_HPP_
