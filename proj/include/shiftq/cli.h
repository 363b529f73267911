/* Copyright 2026 The shiftq Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Command-line front end and the CSV writers it uses.

#ifndef SHIFTQ_CLI_H_
#define SHIFTQ_CLI_H_

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "shiftq/quantfn.h"
#include "shiftq/trainer.h"

namespace shiftq {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitDivergence = 3,
  kExitVerify = 4,
};

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

// stage_lambda,epoch,loss,acc_lambda,acc_zero,layer,grad_raw,grad_scaled
// One row per (record, quantizer); records without gradients get one row
// with the last three columns empty.
void write_metrics_csv(const std::vector<MetricsRecord>& records,
                       std::ostream& out);
// stage_lambda,epoch,loss,acc_lambda,acc_zero,gap; one row per epoch.
void write_curve_csv(const std::vector<MetricsRecord>& records,
                     std::ostream& out);

struct MacBenchRow {
  std::string kernel;
  int s_bits = 0;
  std::size_t length = 0;
  int trials = 0;
  int word_width = 32;
  double ns_per_op = 0.0;
  std::int64_t checksum = 0;
};

struct MacBenchResult {
  std::vector<MacBenchRow> rows;
  bool verified = true;
};

// Random code vectors through the shift-accumulator bank, the multiply
// oracle and a float MAC; the s = 0 codes also go through the plain
// xnor-popcount kernel.
MacBenchResult run_macbench(int s_bits, std::size_t length, int trials,
                            int word_width, std::uint64_t seed);
void write_macbench_csv(const MacBenchResult& result, std::ostream& out);

// x,eval,grad over `samples` evenly spaced points of [lo, hi].
void write_fndump(const QuantSpec& spec, double lo, double hi,
                  std::size_t samples, std::ostream& out);

}  // namespace shiftq

#endif  // SHIFTQ_CLI_H_
