#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gkmvlp/config.hpp"
#include "gkmvlp/model.hpp"
#include "gkmvlp/record.hpp"
#include "gkmvlp/synthgen.hpp"
#include "gkmvlp/tensor.hpp"

namespace gkmvlp::testing {

// Every width at most 16, one layer, two heads.
EncoderConfig tiny_encoder();
FusionConfig tiny_fusion();
RunConfig tiny_run_config();

// 24 px images with 4 px patches: the smallest grid every region fits.
SynthConfig tiny_synth(int num_samples, std::uint64_t seed, int min_entities = 1, int max_entities = 3);

std::unique_ptr<Model> tiny_model(const std::vector<SampleRecord>& records, std::uint64_t seed = 7);

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0);

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "<parameter>[i,j]"
  std::size_t checked = 0;
};

// Central differences of `loss` against the analytic gradient for every
// entry of `params`, or a seeded sample of at most `max_entries` entries per
// tensor when max_entries > 0. The relative error of one entry is
// |a - n| / max(|a|, |n|, floor).
GradCheckResult gradcheck(const std::function<Var(Graph&)>& loss, const std::vector<Parameter*>& params,
                          std::size_t max_entries = 0, std::uint64_t seed = 0, double step = 1e-5,
                          double floor = 1e-4);

}  // namespace gkmvlp::testing
