"""LPV observer and sensor-precision co-design.

Joint synthesis of an LPV observer gain and the minimum per-channel
sensing precision under an H2 or H-infinity error bound, with LMIs
enforced at the vertices of the scheduling-parameter box, plus a
cislunar (planar CR3BP) navigation model, closed-loop simulation and
independent norm oracles for certification.
"""

from .lpv import AffineMatrixFunction, LpvPlant, ParameterBox, closed_loop, eval_affine, vertices
from .synthesis import (SynthesisRequest, SynthesisResult, min_feasible_gamma, noise_angle,
                        sweep_gamma, synth_h2, synth_hinf, synthesize)
from .verify import certify, h2_norm, hinf_norm

__version__ = "0.1.0"

__all__ = [
    "AffineMatrixFunction", "LpvPlant", "ParameterBox", "closed_loop", "eval_affine", "vertices",
    "SynthesisRequest", "SynthesisResult", "min_feasible_gamma", "noise_angle", "sweep_gamma",
    "synth_h2", "synth_hinf", "synthesize", "certify", "h2_norm", "hinf_norm",
]
