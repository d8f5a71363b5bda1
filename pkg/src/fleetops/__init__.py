"""fleetops: human-in-the-loop multi-robot task orchestration.

An assistant planner allocates declarative tasks to a heterogeneous
simulated robot fleet over a chat protocol; each robot independently
verifies its assignments, exceptions trigger summary-driven reallocation,
and a human supervisor can gate contested decisions. A benchmark harness
measures success rate and step counts across supervision ablations.
"""

__version__ = "0.1.0"
