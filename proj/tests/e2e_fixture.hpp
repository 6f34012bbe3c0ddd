#pragma once

#include "probetraj/analysis.hpp"
#include "probetraj/synth.hpp"
#include "probetraj/trajectory.hpp"

namespace probetraj::testing {

// Seeded synthetic pipeline shared by the end-to-end tests: a clean train
// split, the default four-class eval set, a narrow probe and a PCA-HMM.
struct Pipeline {
  ActivationDataset train;
  SynthOutput eval;
  BottleneckProbe probe;
  FinalTokenEval final_token;
  TrajectoryModel traj;
  DirectionSet dirs;
};

inline SynthConfig pipeline_train_config() {
  SynthConfig c;
  c.seed = 42;
  c.counts = {100, 100, 0, 0};
  c.split = SplitTag::kTrain;
  return c;
}

inline SynthConfig pipeline_eval_config() {
  SynthConfig c;
  c.seed = 43;
  return c;
}

inline TrainConfig pipeline_probe_config() {
  TrainConfig t;
  t.width = 8;
  t.learning_rate = 1e-2;
  return t;
}

inline TrajectoryConfig pipeline_traj_config() {
  TrajectoryConfig t;
  t.pca_dim = 8;
  return t;
}

inline Pipeline run_pipeline(bool with_trajectory = true) {
  Pipeline p;
  p.train = generate(pipeline_train_config());
  p.eval = generate_synthetic(pipeline_eval_config());
  p.probe = train_probe(p.train, pipeline_probe_config());
  p.final_token = evaluate_final_token(p.probe, p.eval.dataset);
  if (with_trajectory) p.traj = fit_trajectory_model(p.train, pipeline_traj_config());

  p.dirs = build_directions(direction_inputs(p.train, p.eval.dataset, p.final_token.caught, p.final_token.missed));
  return p;
}

}  // namespace probetraj::testing
