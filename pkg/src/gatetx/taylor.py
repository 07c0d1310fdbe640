"""Taylor-Aris shear dispersion in rectangular ducts.

For fully developed laminar flow the long-time axial dispersion is

    D_eff = D * (1 + kappa * Pe^2),   Pe = U d_h / D,

with d_h the hydraulic diameter and kappa depending only on the aspect ratio
of the cross-section. ``duct_kappa`` evaluates kappa from the double Fourier
series of the velocity field (sine modes) and the cell problem (Neumann
cosine modes); ``KAPPA_TABLE`` stores it on a grid of aspect ratios and
``kappa`` interpolates the table linearly.
"""

from __future__ import annotations

import numpy as np


def duct_kappa(aspect: float, terms: int = 400) -> float:
    """Dispersion coefficient kappa for a duct with side ratio `aspect` (<= 1)."""
    if not 0 < aspect <= 1:
        raise ValueError("aspect must be in (0, 1]")
    a, b = 1.0, float(aspect)
    m = np.arange(1, 2 * terms, 2, dtype=float)  # odd sine modes
    p = np.arange(0, 2 * terms, 2, dtype=float)  # even cosine modes

    lam = np.pi**2 * (m[:, None] ** 2 / a**2 + m[None, :] ** 2 / b**2)
    amp = 16.0 / (np.pi**2 * m[:, None] * m[None, :] * lam)
    mean = np.sum(amp * (2.0 / (np.pi * m[:, None])) * (2.0 / (np.pi * m[None, :])))

    # <sin(m pi y) cos(p pi y)> over one period of the side
    proj = 2.0 * m[:, None] / (np.pi * (m[:, None] ** 2 - p[None, :] ** 2))
    norm = np.where(p == 0, 1.0, 0.5)
    inner = proj.T @ amp @ proj  # <w cos_p cos_q>
    coef = inner / (norm[:, None] * norm[None, :])

    mu = np.pi**2 * (p[:, None] ** 2 / a**2 + p[None, :] ** 2 / b**2)
    mu[0, 0] = np.inf
    total = np.sum((coef / mean) ** 2 * (norm[:, None] * norm[None, :]) / mu)
    d_h = 2.0 * a * b / (a + b)
    return float(total / d_h**2)


def taylor_aris(u: float, length: float, D: float, kappa: float) -> float:
    """D (1 + kappa (u length / D)^2) for any length scale and matching kappa."""
    pe = u * length / D
    return D * (1.0 + kappa * pe * pe)


# kappa(aspect) on the hydraulic diameter, from duct_kappa(aspect, terms=400);
# regenerate with scripts/taylor_table.py
KAPPA_ASPECT = np.round(np.arange(0.05, 1.0001, 0.05), 2)
KAPPA_TABLE = np.array([
    0.00972324,  # 0.05
    0.00989408,  # 0.10
    0.00997765,  # 0.15
    0.00997808,  # 0.20
    0.00990605,  # 0.25
    0.00977860,  # 0.30
    0.00961603,  # 0.35
    0.00943753,  # 0.40
    0.00925840,  # 0.45
    0.00908918,  # 0.50
    0.00893622,  # 0.55
    0.00880269,  # 0.60
    0.00868958,  # 0.65
    0.00859651,  # 0.70
    0.00852233,  # 0.75
    0.00846544,  # 0.80
    0.00842412,  # 0.85
    0.00839663,  # 0.90
    0.00838126,  # 0.95
    0.00837647,  # 1.00
])


def kappa(aspect: float) -> float:
    """Tabulated kappa, linear in aspect; clamped outside [0.05, 1]."""
    ratio = min(aspect, 1.0 / aspect) if aspect > 0 else 0.0
    return float(np.interp(ratio, KAPPA_ASPECT, KAPPA_TABLE))
