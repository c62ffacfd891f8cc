"""Closed-loop learning of percept-to-action mappings.

The package couples a model-based reinforcement learner with an
incrementally refined, feature-based classifier of a synthetic visual
space, plus the benchmark tasks and evaluation harness used to exercise
it.
"""

__version__ = "0.1.0"
