"""The training objective: detection BCE, reconstruction MSE, alignment L1,
and their weighted sum  L = L_det + alpha * L_recon + beta * L_align
(defaults alpha=0.01, beta=1.0). Non-aligned modes train on the detection
term alone.
"""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import GradientError, Tensor

DEFAULT_ALPHA = 0.01
DEFAULT_BETA = 1.0


@dataclass
class LossBreakdown:
    sed: float
    recon: float
    align: float
    total: float


def loss_sed(targets, logits):
    """Mean binary cross-entropy over all (event, frame) cells, computed in
    the overflow-safe logit form."""
    return ad.bce_with_logits(logits, targets)


def loss_ae(features, reconstruction):
    """Mean squared error between the input features and the decoder output."""
    x = np.asarray(features, dtype=np.float64)
    if reconstruction.shape != x.shape:
        raise GradientError(f"loss_ae shape mismatch: {x.shape} vs {reconstruction.shape}")
    diff = Tensor(x) - reconstruction
    return ad.tmean(ad.mul(diff, diff))


def loss_align(context_shared, acoustic_shared):
    """Mean absolute difference in the shared space (subgradient 0 at ties)."""
    if context_shared.shape != acoustic_shared.shape:
        raise GradientError(
            f"loss_align length mismatch: {context_shared.shape} vs {acoustic_shared.shape}")
    return ad.tmean(ad.absolute(context_shared - acoustic_shared))


def total_loss(sed, recon=None, align=None, alpha=DEFAULT_ALPHA, beta=DEFAULT_BETA, aligned=False):
    """Combine the loss terms for the given conditioning mode.

    Returns (total tensor, breakdown of plain floats). The breakdown's
    total is the same accumulation order as the tensor expression:
    sed + alpha*recon + beta*align.
    """
    if not aligned:
        return sed, LossBreakdown(sed=sed.item(), recon=0.0, align=0.0, total=sed.item())
    total = sed + ad.mul(recon, alpha) + ad.mul(align, beta)
    return total, LossBreakdown(
        sed=sed.item(), recon=recon.item(), align=align.item(), total=total.item())
