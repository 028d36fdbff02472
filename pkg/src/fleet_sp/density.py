"""Per-location demand densities and scenario sampling.

Fits a Gaussian-kernel KDE or one of four parametric families
(gaussian, laplace, lognormal, exponential) to daily demand counts, and
draws integer demand scenario sets from the fitted models.  All samplers
take an explicit seed and are bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_SQRT_2PI = math.sqrt(2.0 * math.pi)

FAMILIES = ("gaussian", "laplace", "lognormal", "exponential")


class DensityError(ValueError):
    """Degenerate sample or family misuse during fitting."""


def _as_samples(samples, minimum=1) -> np.ndarray:
    arr = np.asarray(samples, dtype=float).ravel()
    if arr.size < minimum:
        raise DensityError(f"need at least {minimum} samples, got {arr.size}")
    if not np.isfinite(arr).all():
        raise DensityError("samples must be finite")
    return arr


@dataclass(frozen=True)
class KdeModel:
    """Gaussian-kernel density estimate: samples plus a positive bandwidth."""

    samples: tuple[float, ...]
    bandwidth: float

    def __post_init__(self):
        object.__setattr__(self, "samples",
                           tuple(float(v) for v in np.ravel(self.samples)))
        if len(self.samples) < 1:
            raise DensityError("KDE model needs at least one sample point")
        if not self.bandwidth > 0:
            raise DensityError("bandwidth must be positive")

    @property
    def mean(self) -> float:
        return float(np.mean(self.samples))

    @property
    def variance(self) -> float:
        """Variance of the KDE law: population data variance + bandwidth^2."""
        return float(np.var(self.samples) + self.bandwidth ** 2)

    def pdf(self, x):
        return kde_pdf(self, x)

    def sample(self, n, seed):
        return kde_sample(self, n, seed)


def silverman_bandwidth(samples) -> float:
    """0.9 * min(sample std, IQR/1.34) * n^(-1/5), skipping zero candidates.

    The sample standard deviation uses ddof=1.  When the IQR collapses to
    zero on tied data the rule falls back to the standard deviation alone;
    all-identical samples have no positive candidate and raise.
    """
    arr = _as_samples(samples, minimum=2)
    std = float(np.std(arr, ddof=1))
    q75, q25 = np.percentile(arr, [75, 25])
    iqr_term = float(q75 - q25) / 1.34
    candidates = [v for v in (std, iqr_term) if v > 0]
    if not candidates:
        raise DensityError("all samples identical: Silverman bandwidth is zero")
    return 0.9 * min(candidates) * arr.size ** (-1.0 / 5.0)


def kde_fit(samples, bandwidth="silverman") -> KdeModel:
    """Fit a Gaussian KDE; bandwidth is 'silverman' or a fixed positive value."""
    arr = _as_samples(samples, minimum=2)
    if isinstance(bandwidth, str):
        if bandwidth != "silverman":
            raise DensityError(f"unknown bandwidth rule {bandwidth!r}")
        h = silverman_bandwidth(arr)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise DensityError("fixed bandwidth must be positive")
    return KdeModel(samples=tuple(arr), bandwidth=h)


def kde_pdf(model: KdeModel, x):
    """Density (1/(n h)) sum_k phi((x - x_k)/h); scalar in, scalar out."""
    pts = np.asarray(model.samples)
    xval = np.asarray(x, dtype=float)
    z = (xval[..., None] - pts) / model.bandwidth
    dens = np.exp(-0.5 * z * z).sum(axis=-1) / (pts.size * model.bandwidth * _SQRT_2PI)
    return float(dens) if np.isscalar(x) or xval.ndim == 0 else dens


def kde_sample(model: KdeModel, n, seed) -> np.ndarray:
    """Draw from the KDE law: uniform data point plus N(0, h^2) noise."""
    if n < 1:
        raise DensityError("n must be at least 1")
    rng = np.random.default_rng(seed)
    pts = np.asarray(model.samples)
    picks = rng.integers(0, pts.size, size=n)
    return pts[picks] + rng.normal(0.0, model.bandwidth, size=n)


@dataclass(frozen=True)
class ParamModel:
    """Fitted parametric family; params are family-specific:

    gaussian (mean, variance), laplace (location, scale),
    lognormal (log-mean, log-variance), exponential (rate,).
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DensityError(f"unknown family {self.family!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        spread = self.params[1] if len(self.params) > 1 else self.params[0]
        if not spread > 0:
            raise DensityError(f"{self.family} spread/rate parameter must be positive")

    @property
    def mean(self) -> float:
        if self.family == "gaussian":
            return self.params[0]
        if self.family == "laplace":
            return self.params[0]
        if self.family == "lognormal":
            mu, var = self.params
            return math.exp(mu + var / 2.0)
        return 1.0 / self.params[0]

    def pdf(self, x):
        return parametric_pdf(self, x)

    def sample(self, n, seed):
        return parametric_sample(self, n, seed)


def parametric_fit(samples, family: str) -> ParamModel:
    """Maximum-likelihood fit of one family.

    gaussian: mean and population variance; laplace: median and mean
    absolute deviation about it; lognormal: gaussian fit on logs;
    exponential: rate 1/mean.  lognormal/exponential require strictly
    positive data.
    """
    arr = _as_samples(samples, minimum=2)
    if family == "gaussian":
        var = float(np.var(arr))
        if var <= 0:
            raise DensityError("gaussian fit needs nonzero variance")
        return ParamModel("gaussian", (float(np.mean(arr)), var))
    if family == "laplace":
        loc = float(np.median(arr))
        scale = float(np.mean(np.abs(arr - loc)))
        if scale <= 0:
            raise DensityError("laplace fit needs nonzero spread")
        return ParamModel("laplace", (loc, scale))
    if family == "lognormal":
        if (arr <= 0).any():
            raise DensityError("lognormal fit requires strictly positive samples")
        logs = np.log(arr)
        var = float(np.var(logs))
        if var <= 0:
            raise DensityError("lognormal fit needs nonzero log variance")
        return ParamModel("lognormal", (float(np.mean(logs)), var))
    if family == "exponential":
        if (arr <= 0).any():
            raise DensityError("exponential fit requires strictly positive samples")
        return ParamModel("exponential", (1.0 / float(np.mean(arr)),))
    raise DensityError(f"unknown family {family!r}")


def parametric_pdf(model: ParamModel, x):
    xv = np.asarray(x, dtype=float)
    if model.family == "gaussian":
        mu, var = model.params
        dens = np.exp(-0.5 * (xv - mu) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
    elif model.family == "laplace":
        loc, scale = model.params
        dens = np.exp(-np.abs(xv - loc) / scale) / (2.0 * scale)
    elif model.family == "lognormal":
        mu, var = model.params
        dens = np.where(
            xv > 0,
            np.exp(-0.5 * (np.log(np.where(xv > 0, xv, 1.0)) - mu) ** 2 / var)
            / (np.where(xv > 0, xv, 1.0) * math.sqrt(2.0 * math.pi * var)),
            0.0)
    else:
        rate = model.params[0]
        dens = np.where(xv >= 0, rate * np.exp(-rate * np.maximum(xv, 0.0)), 0.0)
    return float(dens) if np.isscalar(x) or xv.ndim == 0 else dens


def parametric_sample(model: ParamModel, n, seed) -> np.ndarray:
    if n < 1:
        raise DensityError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if model.family == "gaussian":
        mu, var = model.params
        return rng.normal(mu, math.sqrt(var), size=n)
    if model.family == "laplace":
        loc, scale = model.params
        return rng.laplace(loc, scale, size=n)
    if model.family == "lognormal":
        mu, var = model.params
        return rng.lognormal(mu, math.sqrt(var), size=n)
    rate = model.params[0]
    return rng.exponential(1.0 / rate, size=n)


DensityModel = KdeModel | ParamModel


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Integer demand matrix (scenarios x locations) with probabilities."""

    locations: tuple[int, ...]
    demands: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "locations", tuple(int(v) for v in self.locations))
        d = np.asarray(self.demands)
        p = np.asarray(self.probabilities, dtype=float)
        if d.ndim != 2 or d.shape[1] != len(self.locations):
            raise DensityError("demand matrix must be scenarios x locations")
        if d.shape[0] != p.size:
            raise DensityError("one probability per scenario required")
        if (d < 0).any():
            raise DensityError("demands must be nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise DensityError(f"probabilities sum to {p.sum():.15f}, not 1")
        if (p < 0).any():
            raise DensityError("probabilities must be nonnegative")
        object.__setattr__(self, "demands", d.astype(np.int64))
        object.__setattr__(self, "probabilities", p)

    @property
    def n_scenarios(self) -> int:
        return self.demands.shape[0]

    @property
    def mean_demand(self) -> np.ndarray:
        return self.probabilities @ self.demands


def round_half_away(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def make_scenarios(models, n, seed) -> ScenarioSet:
    """Draw an n-scenario set from per-location models with p^s = 1/n.

    ``models`` maps location id -> fitted model (order preserved).  Each
    continuous draw is rounded half-away-from-zero, then clamped at 0;
    no clamping against fleet capacity is applied.
    """
    if n < 1:
        raise DensityError("scenario count must be at least 1")
    locations = list(models.keys())
    seeds = np.random.SeedSequence(seed).generate_state(len(locations), np.uint64)
    demands = np.zeros((n, len(locations)), dtype=np.int64)
    for k, loc in enumerate(locations):
        draws = models[loc].sample(n, int(seeds[k]))
        demands[:, k] = np.maximum(round_half_away(draws), 0.0).astype(np.int64)
    probs = np.full(n, 1.0 / n)
    return ScenarioSet(locations=tuple(locations), demands=demands,
                       probabilities=probs)


# --- serialization ------------------------------------------------------------

def write_scenarios(scenarios: ScenarioSet, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("scenario,probability," +
                 ",".join(f"loc_{v}" for v in scenarios.locations) + "\n")
        for s in range(scenarios.n_scenarios):
            row = ",".join(str(int(v)) for v in scenarios.demands[s])
            fh.write(f"{s},{scenarios.probabilities[s]:.17g},{row}\n")


def read_scenarios(path) -> ScenarioSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    header = lines[0].split(",")
    if header[:2] != ["scenario", "probability"]:
        raise DensityError(f"{path}: unexpected scenario header")
    locations = tuple(int(c.removeprefix("loc_")) for c in header[2:])
    probs, rows = [], []
    for ln in lines[1:]:
        parts = ln.split(",")
        probs.append(float(parts[1]))
        rows.append([int(v) for v in parts[2:]])
    return ScenarioSet(locations=locations, demands=np.array(rows, dtype=np.int64),
                       probabilities=np.array(probs))


def write_densities(models, path, samples_path=""):
    """One CSV row per location: family, params, bandwidth, samples pointer."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("location,family,param1,param2,bandwidth,samples\n")
        for loc, model in models.items():
            if isinstance(model, KdeModel):
                fh.write(f"{loc},kde,,,{model.bandwidth:.17g},{samples_path}\n")
            else:
                p1 = f"{model.params[0]:.17g}"
                p2 = f"{model.params[1]:.17g}" if len(model.params) > 1 else ""
                fh.write(f"{loc},{model.family},{p1},{p2},,\n")


def read_density_grid(path) -> dict:
    """Inverse of the fit command's grid dump: location -> (x, pdf) arrays."""
    xs, pdfs = {}, {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "location,x,pdf":
            raise DensityError(f"{path}: unexpected grid header {header!r}")
        for ln in fh:
            if not ln.strip():
                continue
            loc_s, x_s, p_s = ln.strip().split(",")
            xs.setdefault(int(loc_s), []).append(float(x_s))
            pdfs.setdefault(int(loc_s), []).append(float(p_s))
    return {loc: (np.array(xs[loc]), np.array(pdfs[loc])) for loc in xs}


def read_densities(path, samples_loader=None) -> dict:
    """Rebuild models from a densities CSV.

    KDE rows reference a demand-series file; ``samples_loader`` maps that
    path (resolved by the caller) to {location: samples array}.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if lines[0] != "location,family,param1,param2,bandwidth,samples":
        raise DensityError(f"{path}: unexpected densities header")
    models = {}
    cached = {}
    for ln in lines[1:]:
        loc_s, family, p1, p2, bw, samples_ref = ln.split(",")
        loc = int(loc_s)
        if family == "kde":
            if samples_loader is None:
                raise DensityError("KDE densities need a samples_loader")
            if samples_ref not in cached:
                cached[samples_ref] = samples_loader(samples_ref)
            samples = cached[samples_ref][loc]
            models[loc] = KdeModel(samples=tuple(float(v) for v in samples),
                                   bandwidth=float(bw))
        else:
            params = (float(p1),) if p2 == "" else (float(p1), float(p2))
            models[loc] = ParamModel(family=family, params=params)
    return models
