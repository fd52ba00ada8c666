"""
equirecover - density-gated recovery for offline-learned policies

Behavioral cloning is augmented with a recovery policy that climbs the
estimated density of the demonstrations in the latent space of a
translation-equivariant encoder. The package ships the learned components,
a deterministic desk-scale manipulation simulator and an experiment harness.
"""

__version__ = "0.1.0"
