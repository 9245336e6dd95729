"""memlearn: a trace-driven testbed for learned memory-system policies.

The package couples a cycle-approximate cache/DRAM simulator and a hybrid
storage simulator with three adaptive policies (the Pythia RL prefetcher,
the POPET perceptron off-chip predictor behind Hermes requests, and the
Sibyl RL data-placement agent) plus human-designed baselines, so their
behavior can be measured on synthetic or file-based traces.
"""

__version__ = "0.1.0"
