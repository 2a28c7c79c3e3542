"""Slow-feature representations for visual self-localization.

Subpackages: ``numcore`` (covariance/whitening/regression primitives),
``sfa`` (linear and quadratic slow feature analysis), ``hsfa`` (the
hierarchical network), ``worldsim`` (the raycast navigation simulator),
``analysis`` (representation diagnostics and the PCA baseline),
``agent`` (minimal PPO actor-critic), ``cli`` (pipeline orchestration).
"""

__version__ = "0.1.0"
