"""Single-frame radar BEV to point-cloud toolkit.

Radar I/Q preprocessing, CFAR baselines, a conditional latent-diffusion
core trained on synthetic paired scenes, and point-cloud metrics.
"""

from radarbev.errors import RadarBevError
from radarbev.iqproc import IqFrame, PolarBev

__version__ = "0.1.0"

__all__ = ["IqFrame", "PolarBev", "RadarBevError", "__version__"]
