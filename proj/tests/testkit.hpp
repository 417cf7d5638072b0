#pragma once
// Property suites shared by the unit tests and the acceptance runner. Each
// returns a verdict plus a one-line summary of what it measured.

#include <cstdint>
#include <filesystem>
#include <string>

#include "weakseg/phantom.hpp"

namespace testkit {

struct Verdict {
  bool ok = true;
  std::string detail;
  double seconds = 0.0;
};

// Central-difference checks in double precision of every layer type and of
// the composed network, one random configuration per seed.
Verdict gradient_suite(int n_seeds, double tolerance = 1e-5);

// Partition, connectivity, determinism and region-count bound on random and
// structured slices, plus the exact grid case on a constant image.
Verdict slic_suite(int n_random, int n_structured);

// dsc against the set-based oracle (bitwise) and its algebraic properties.
Verdict dsc_oracle_suite(int n_cases);

// Mean per-slice DSC of expert-weak selections on phantom slices, with the
// selection recomputed by the coverage-count oracle.
struct QuantizationStats {
  Verdict verdict;
  double mean_dsc = 0.0;
  double min_dsc = 1.0;
  double frac_above = 0.0;  // share of slices with DSC >= bound
  int slices = 0;
};
QuantizationStats quantization_suite(const weakseg::PhantomSpec& spec, double bound = 0.90);

// Output spatial dims equal input dims for random sizes in [lo, hi]^2.
Verdict shape_law_suite(int n_sizes, int lo, int hi, std::uint64_t seed);

// `n_raters` HTTP clients drain `n_tasks` slice tasks from a live server; the
// event log is then audited and checked against the acknowledged submissions.
Verdict drain_suite(const std::filesystem::path& dir, int n_raters, int n_tasks);

// Injects a crash part-way through a concurrent drain, reopens the service
// from disk and checks nothing acknowledged was lost before finishing.
Verdict crash_restart_suite(const std::filesystem::path& dir, int n_raters, int n_tasks);

}  // namespace testkit
