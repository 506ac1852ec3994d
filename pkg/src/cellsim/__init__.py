"""cellsim: trace-driven cloud-cell simulation and load balancing.

Subpackages:
  model           shared node/task/assignment resource model
  livemigration   VM live-migration transfer-size estimator
  workload        trace parsing, events, constraints, synthetic generation
  metaheuristics  centralized search strategies over full assignments
  agents          decentralized node/broker agents and their negotiation protocol
  harness         simulation driver, metrics, snapshots and the CLI
"""

__version__ = "0.1.0"
