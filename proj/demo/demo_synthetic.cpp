// Trains a supervised FCN and MixMatch on a small synthetic dataset with 50
// labels and prints their test wAUC.

#include <iostream>

#include "ssltsc/ssltsc.hpp"

int main() {
  using namespace ssltsc;
  data::SyntheticSpec spec;
  spec.n = 1500;
  auto ds = data::make_synthetic(spec, "demo");
  const auto base = data::make_splits(ds, 200, 400, 7);
  ds = data::znormalize(ds, data::compute_norm_stats(ds, base.train_pool())).first;

  train::TrainConfig cfg;
  cfg.max_steps = 300;
  cfg.eval_every = 100;
  cfg.rampup_length = 100;
  cfg.filters = {16, 32, 16};
  cfg.augment = augment::AugmentConfig{};

  for (const char* name : {"supervised", "mixmatch"}) {
    auto setup = eval::make_setup(name, cfg);
    const auto rec = eval::run_cell(ds, base, setup, 50, 1);
    std::cout << name << ": test wAUC " << rec.wauc_test << " (best step " << rec.best_step << ", "
              << rec.wall_time_s << " s)\n";
  }
}
