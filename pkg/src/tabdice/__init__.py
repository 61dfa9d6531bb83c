"""tabdice: tabular offline imitation learning by visitation matching.

Submodules
----------
mdp      finite MDPs, policies, exact discounted visitation
data     trajectory sampling, empirical distributions, MLE dynamics
igi      inverse-geometric initial-timestep reweighting
dice     convex dual solver for KL visitation matching
bounds   evaluation-error bound and its per-term decomposition
toy      3-state MDP with closed-form matching objective
harness  discount-factor sweep experiments, CSV artifacts, plots
"""

from tabdice import bounds, data, dice, harness, igi, mdp, toy

__all__ = ["mdp", "data", "igi", "dice", "bounds", "toy", "harness"]

__version__ = "0.1.0"
