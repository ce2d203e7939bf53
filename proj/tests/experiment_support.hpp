// Copyright 2026 The fedtrace Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fedtrace/experiment.hpp"

namespace fedtrace::testing {

// A federation small enough to run in well under a second.
inline ExperimentConfig small_experiment_config() {
  ExperimentConfig c;
  c.master_seed = 3;
  c.corpus.vocab_size = 400;
  c.corpus.num_classes = 3;
  c.corpus.samples_per_class = 100;
  c.corpus.indicative_per_class = 10;
  c.corpus.background_size = 60;
  c.partition.num_clients = 3;
  c.federation.rounds = 3;
  c.federation.local_epochs = 1;
  c.verification.samples = 40;
  c.control_epochs = 2;
  c.data.server_fraction = 0.2;
  return c;
}

}  // namespace fedtrace::testing
