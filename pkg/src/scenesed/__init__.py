"""Scene-informed sound event detection at desk scale.

A self-contained training and evaluation stack: a float64 tensor engine
with reverse-mode differentiation, a CRNN event detector conditioned on
scene representations (one-hot or semantic embeddings), an autoencoder
bottleneck that aligns the acoustic and semantic embedding spaces, and
segment-based evaluation. Heavy inner loops run through numba-compiled
kernels with a pure-numpy fallback (see ``scenesed.kernels``).
"""

__version__ = "0.1.0"
