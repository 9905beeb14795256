// Simulates a few highway sequences, refines the detections offline and
// compares the result with plain score-thresholded detections.
//
//   refine_highway [num_sequences]

#include <cstdlib>
#include <iostream>
#include <vector>

#include "offtrack/offtrack.hpp"

int main(int argc, char ** argv)
{
  using namespace offtrack;
  const int n = argc > 1 ? std::atoi(argv[1]) : 5;
  const PipelineConfig cfg;

  std::vector<LabelSequence> refined, baseline, truth;
  for (int seed = 0; seed < n; ++seed) {
    const sim::SimOutput s = sim::generate(sim::highway_scenario(static_cast<std::uint64_t>(seed)));
    refined.push_back(dream(s.log, cfg));
    baseline.push_back(export_st_baseline(s.log, cfg.st_score_threshold));
    truth.push_back(s.ground_truth);
  }

  std::cout << "refined labels\n" << io::report_table(evaluate(refined, truth));
  std::cout << "\ndetections with score > " << cfg.st_score_threshold << "\n"
            << io::report_table(evaluate(baseline, truth));
}
