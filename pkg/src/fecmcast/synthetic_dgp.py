"""Seeded synthetic panels with known factor and cointegration structure.

The generator produces a large panel driven by ``r1_true`` random-walk
factors and ``r0_true`` stationary AR(1) factors, plus a small set of target
series tied to the common trends by known cointegrating relations. All
randomness flows through numpy's seeded PCG64 generator, so panels are
bit-reproducible; replication k of an experiment uses seed + k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_pipeline import Panel, SeriesMeta
from .errors import ConfigError

IDIO_AR_DEFAULT = 0.5
FACTOR_AR = 0.5          # AR(1) coefficient of the stationary factors
TARGET_NOISE_SD = 1.0


@dataclass(frozen=True)
class DgpConfig:
    """Size, factor structure and noise level of a synthetic panel."""

    N: int = 100
    T: int = 200
    r1_true: int = 1
    r0_true: int = 3
    coint_strength: float = 0.5   # speed of adjustment of target deviations
    idio_ar: float = IDIO_AR_DEFAULT
    snr: float = 1.0
    seed: int = 0
    n_targets: int = 3

    def __post_init__(self):
        if self.N < 2 or self.T < 50:
            raise ConfigError(f"need N >= 2 and T >= 50, got N={self.N}, T={self.T}")
        if self.snr <= 0:
            raise ConfigError("snr must be positive")
        if not abs(self.idio_ar) < 1:
            raise ConfigError("idiosyncratic AR coefficient must be inside the unit circle")
        if not 0 < self.coint_strength <= 1:
            raise ConfigError("coint_strength must lie in (0, 1]")
        if self.r1_true < 0 or self.r0_true < 0 or self.n_targets < 1:
            raise ConfigError("factor and target counts must be valid")


def _ar1_paths(rng, T: int, k: int, rho: float, scale: float = 1.0) -> np.ndarray:
    """k independent AR(1) paths with unit innovation variance, stationary start."""
    out = np.empty((T, k))
    if k == 0:
        return out
    sd0 = 1.0 / np.sqrt(1.0 - rho ** 2) if abs(rho) < 1 else 1.0
    out[0] = rng.standard_normal(k) * sd0
    eps = rng.standard_normal((T - 1, k))
    for t in range(1, T):
        out[t] = rho * out[t - 1] + eps[t - 1]
    return out * scale


def generate_panel(cfg: DgpConfig):
    """Generate (Panel, ground truth) for a DgpConfig.

    The panel holds the informational series X001..X{N} followed by the
    targets Y1..Y{n_targets}. Ground truth carries the factors, loadings and
    the cointegrating matrix of the stacked (targets, trends) system.
    """
    rng = np.random.default_rng(cfg.seed)
    T, N = cfg.T, cfg.N
    F1 = np.cumsum(rng.standard_normal((T, cfg.r1_true)), axis=0)
    F0 = _ar1_paths(rng, T, cfg.r0_true, FACTOR_AR)
    lam1 = rng.standard_normal((N, cfg.r1_true))
    lam0 = rng.standard_normal((N, cfg.r0_true))
    common = F1 @ lam1.T + F0 @ lam0.T
    noise = _ar1_paths(rng, T, N, cfg.idio_ar)
    if np.isfinite(cfg.snr):
        # snr is defined on the stationary scale: against the differenced
        # common component when the panel is integrated, its level otherwise
        if cfg.r1_true > 0:
            signal_sd = np.diff(common, axis=0).std(axis=0, ddof=1)
        else:
            signal_sd = common.std(axis=0, ddof=1)
        signal_sd = np.where(signal_sd == 0, 1.0, signal_sd)
        noise = noise / noise.std(axis=0, ddof=1) * (signal_sd / np.sqrt(cfg.snr))
    else:
        noise = np.zeros_like(noise)
    X = common + noise

    gamma = rng.standard_normal((cfg.n_targets, cfg.r1_true))
    u = _ar1_paths(rng, T, cfg.n_targets, 1.0 - cfg.coint_strength, TARGET_NOISE_SD)
    Y = F1 @ gamma.T + u

    integrated = cfg.r1_true > 0
    tc = 2 if integrated else 1
    order = "I1" if integrated else "I0"
    meta = []
    for j in range(N):
        meta.append(SeriesMeta(id=j + 1, mnemonic=f"X{j + 1:03d}",
                               description="synthetic informational series", tc=tc,
                               integration_order=order))
    for j in range(cfg.n_targets):
        meta.append(SeriesMeta(id=N + j + 1, mnemonic=f"Y{j + 1}",
                               description="synthetic target series", tc=tc,
                               integration_order=order))
    time_index = _quarters((1985, 1), T)
    panel = Panel(np.hstack([X, Y]), time_index, tuple(meta))

    # cointegrating matrix of the stacked (targets, trends) system:
    # each column is (unit vector on a target, -gamma_j)
    m = cfg.n_targets + cfg.r1_true
    beta_true = np.zeros((m, cfg.n_targets))
    beta_true[: cfg.n_targets, :] = np.eye(cfg.n_targets)
    beta_true[cfg.n_targets:, :] = -gamma.T
    truth = {
        "f_i1": F1, "f_i0": F0, "loadings_i1": lam1, "loadings_i0": lam0,
        "gamma": gamma, "targets": Y, "beta_true": beta_true,
        "target_names": [f"Y{j + 1}" for j in range(cfg.n_targets)],
    }
    return panel, truth


def _quarters(start: tuple[int, int], count: int):
    out, (y, q) = [], start
    for _ in range(count):
        out.append((y, q))
        y, q = (y + 1, 1) if q == 4 else (y, q + 1)
    return tuple(out)


# ---------------------------------------------------------------------------
# Config file format: "key = value" lines, '#' comments
# ---------------------------------------------------------------------------

_FIELD_TYPES = {
    "N": int, "T": int, "r1_true": int, "r0_true": int, "n_targets": int,
    "seed": int, "coint_strength": float, "idio_ar": float, "snr": float,
}


def read_dgp_config(path) -> DgpConfig:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, raw = line.partition("=")
            key, raw = key.strip(), raw.strip()
            if key not in _FIELD_TYPES:
                raise ConfigError(f"{path}:{lineno}: unknown DGP key {key!r}")
            try:
                values[key] = _FIELD_TYPES[key](raw)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {raw!r}") from None
    return DgpConfig(**values)


def write_dgp_config(cfg: DgpConfig, path) -> None:
    with open(path, "w") as fh:
        for key in _FIELD_TYPES:
            fh.write(f"{key} = {getattr(cfg, key)}\n")
