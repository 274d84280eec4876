"""Segmentation with high-order regional energies.

Two optimizers share one energy model: a level-set gradient flow
(:mod:`segopt.level_set`) and a fast trust-region method built on graph cuts
(:mod:`segopt.trust_region`). :mod:`segopt.bench` runs both on the same problem.
"""
from .functionals import (CONTINUOUS, CROFTON, Energy, EnergyReport, EvalCounter, composite_energy,
                          make_bhattacharyya, make_kl, make_l2_bins, make_loglikelihood, make_moments,
                          make_volume)
from .grid import DegenerateMaskWarning, FormatError, Histogram, bin_counts, signed_distance
from .length import crofton_length, crofton_weights, length_continuous
from .maxflow import FlowNetwork

__version__ = "0.1.0"
