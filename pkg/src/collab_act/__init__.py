"""Desk-scale toolkit for collaborative vision-language-action policy machinery.

Subpackages:

- ``trajectory_store``: synchronization, labels, synthetic demonstrations, dataset container
- ``action_codec``: delta position / quaternion-delta rotation / PCA hand encoding
- ``losses``: directional, L2 and auxiliary losses with analytic gradients
- ``toy_policy``: chunked MLP policy with FiLM and a hand head, Adam training, experiments
- ``inference_sim``: simulated-clock inference loop with planner and latency accounting
"""

__version__ = "0.1.0"
