"""Generative-model volume rendering at desk scale.

A ray-casting data generator, a two-stage conditional GAN (opacity GAN +
opacity-to-color translation GAN) trained with a from-scratch reverse-mode
autodiff engine, plus transfer-function sensitivity and opacity-TF
latent-space exploration, exposed through a CLI and an HTTP service.
"""

__version__ = "0.1.0"
