"""Problem data, uncertainty geometry, grids, and config parsing.

All container types are immutable after construction; `validate_problem`
is the single entry point that certifies an `LQProblem` for the solvers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    NotDetectable,
    NotPD,
    NotPSD,
    NotStabilizable,
)

SYMMETRY_TOL = 1e-12      # max allowed relative asymmetry before (X+X^T)/2
PSD_EIG_FLOOR = -1e-10    # eigenvalue floor for "numerically PSD"
PBH_RANK_RTOL = 1e-9      # singular values below rtol*smax count as zero

GEOMETRY_KINDS = ("Ball2", "BallInf", "Ellipsoid")


def _as_matrix(x, name: str) -> np.ndarray:
    a = np.array(x, dtype=float)
    if a.ndim != 2 or a.size == 0:
        raise DimensionMismatch(f"{name} must be a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ConfigError(f"{name} contains non-finite entries")
    a.flags.writeable = False
    return a


def _symmetrize(x: np.ndarray, name: str) -> np.ndarray:
    """Return (X+X^T)/2, rejecting matrices that are not close to symmetric."""
    scale = max(1.0, float(np.abs(x).max()))
    asym = float(np.abs(x - x.T).max())
    if asym > SYMMETRY_TOL * scale:
        raise NotPSD(f"{name} is not symmetric (max |X-X^T| = {asym:.3e})")
    s = (x + x.T) / 2.0
    s.flags.writeable = False
    return s


@dataclass(frozen=True, eq=False)
class LQProblem:
    """Linear dynamics dX = (A X + B u) dt + Sigma dW with cost x'Qx + u'Ru,
    discount rho, and gradient-uncertainty aversion eta."""

    A: np.ndarray
    B: np.ndarray
    Sigma: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    rho: float
    eta: float

    def __post_init__(self):
        for name in ("A", "B", "Sigma", "Q", "R"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return self.B.shape[1]

    @property
    def m(self) -> int:
        return self.Sigma.shape[1]

    def noise_cov(self) -> np.ndarray:
        """Sigma Sigma^T."""
        return self.Sigma @ self.Sigma.T


@dataclass(frozen=True, eq=False)
class UncertaintyGeometry:
    """Admissible set for the adversarial gradient perturbation delta.

    kind "Ball2": ||delta||_2 <= epsilon; "BallInf": ||delta||_inf <= epsilon;
    "Ellipsoid": delta' M delta <= epsilon^2 with M symmetric positive definite.
    """

    kind: str
    epsilon: float
    M: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in GEOMETRY_KINDS:
            raise ConfigError(
                f"geometry kind must be one of {GEOMETRY_KINDS}, got {self.kind!r}"
            )
        eps = float(self.epsilon)
        if not np.isfinite(eps) or eps < 0:
            raise ConfigError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        object.__setattr__(self, "epsilon", eps)
        if self.kind == "Ellipsoid":
            if self.M is None:
                raise ConfigError("Ellipsoid geometry requires matrix M")
            m = _symmetrize(_as_matrix(self.M, "M"), "M")
            if np.linalg.eigvalsh(m).min() <= 0:
                raise NotPD("geometry matrix M must be positive definite")
            object.__setattr__(self, "M", m)
        elif self.M is not None:
            raise ConfigError(f"geometry kind {self.kind} does not take matrix M")


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid. Flat indexing is row-major (last axis fastest)."""

    bounds: tuple[tuple[float, float], ...]
    n_points: tuple[int, ...]

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        n_points = tuple(int(n) for n in self.n_points)
        if len(bounds) != len(n_points) or len(bounds) == 0:
            raise DimensionMismatch("bounds and n_points must have equal nonzero length")
        for (lo, hi), n in zip(bounds, n_points):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ConfigError(f"invalid axis bounds ({lo}, {hi})")
            if n < 2:
                raise ConfigError(f"each axis needs >= 2 points, got {n}")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "n_points", n_points)

    @property
    def dim(self) -> int:
        return len(self.n_points)

    @property
    def n_total(self) -> int:
        return int(np.prod(self.n_points))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(
            (hi - lo) / (n - 1) for (lo, hi), n in zip(self.bounds, self.n_points)
        )

    @property
    def diameter(self) -> float:
        return float(np.hypot.reduce([hi - lo for lo, hi in self.bounds]))

    def axis(self, i: int) -> np.ndarray:
        lo, hi = self.bounds[i]
        return np.linspace(lo, hi, self.n_points[i])

    def points(self) -> np.ndarray:
        """All grid points, shape (n_total, dim), in flat-index order."""
        axes = [self.axis(i) for i in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def flat_index(self, multi: tuple[int, ...]) -> int:
        return int(np.ravel_multi_index(multi, self.n_points))

    def multi_index(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.n_points))

    def coord(self, flat: int) -> np.ndarray:
        multi = self.multi_index(flat)
        return np.array(
            [self.axis(i)[j] for i, j in enumerate(multi)], dtype=float
        )


@dataclass(frozen=True, eq=False)
class GridField:
    """Values attached to a grid, flat point-major (component index fastest)."""

    grid: Grid
    values: np.ndarray
    components: int = 1

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if self.components < 1:
            raise DimensionMismatch("components must be >= 1")
        if v.size != self.grid.n_total * self.components:
            raise DimensionMismatch(
                f"values length {v.size} != {self.components} x {self.grid.n_total}"
            )
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def point_values(self) -> np.ndarray:
        """Shape (n_total, components)."""
        return self.values.reshape(self.grid.n_total, self.components)

    def as_array(self) -> np.ndarray:
        """Shape n_points (scalar field) or n_points + (components,)."""
        if self.components == 1:
            return self.values.reshape(self.grid.n_points)
        return self.values.reshape(self.grid.n_points + (self.components,))


@dataclass(frozen=True, eq=False)
class RiccatiSolution:
    """Stabilizing solution of the robust algebraic Riccati equation."""

    P0: np.ndarray
    c0: float
    A_cl: np.ndarray
    A_eff: np.ndarray
    residual: float
    notes: tuple[str, ...] = ()

    def to_jsonable(self) -> dict:
        return {
            "P0": self.P0.tolist(),
            "c0": self.c0,
            "A_cl": self.A_cl.tolist(),
            "A_eff": self.A_eff.tolist(),
            "residual": self.residual,
            "metadata": {"notes": list(self.notes)},
        }


# ---------------------------------------------------------------------------
# validation


def _psd_sqrt(q: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(q)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def _pbh_rank_deficient(a: np.ndarray, b: np.ndarray) -> complex | None:
    """First eigenvalue of A with Re >= 0 where [lam I - A, B] loses rank."""
    n = a.shape[0]
    for lam in np.linalg.eigvals(a):
        if lam.real < -1e-12:
            continue
        pencil = np.hstack([lam * np.eye(n) - a, b.astype(complex)])
        sv = np.linalg.svd(pencil, compute_uv=False)
        if sv[n - 1] <= PBH_RANK_RTOL * sv[0]:
            return complex(lam)
    return None


def validate_problem(problem: LQProblem) -> LQProblem:
    """Check shapes, definiteness, and PBH stabilizability/detectability.

    Returns the problem (a symmetrized copy if Q or R carried asymmetry
    within tolerance); validating an already-validated problem returns
    the same object.
    """
    n = problem.A.shape[0]
    if problem.A.shape != (n, n):
        raise DimensionMismatch(f"A must be square, got {problem.A.shape}")
    if problem.B.shape[0] != n:
        raise DimensionMismatch(f"B has {problem.B.shape[0]} rows, expected {n}")
    if problem.Sigma.shape[0] != n:
        raise DimensionMismatch(f"Sigma has {problem.Sigma.shape[0]} rows, expected {n}")
    if problem.Q.shape != (n, n):
        raise DimensionMismatch(f"Q must be {n}x{n}, got {problem.Q.shape}")
    k = problem.B.shape[1]
    if problem.R.shape != (k, k):
        raise DimensionMismatch(f"R must be {k}x{k}, got {problem.R.shape}")
    if not (np.isfinite(problem.rho) and problem.rho > 0):
        raise ConfigError(f"rho must be > 0, got {problem.rho}")
    if not (np.isfinite(problem.eta) and problem.eta >= 0):
        raise ConfigError(f"eta must be >= 0, got {problem.eta}")

    q = _symmetrize(problem.Q, "Q")
    r = _symmetrize(problem.R, "R")
    if np.linalg.eigvalsh(q).min() < PSD_EIG_FLOOR:
        raise NotPSD(f"Q has eigenvalue {np.linalg.eigvalsh(q).min():.3e} < 0")
    if np.linalg.eigvalsh(r).min() <= 0:
        raise NotPD("R must be positive definite")

    bad = _pbh_rank_deficient(problem.A, problem.B)
    if bad is not None:
        raise NotStabilizable(f"(A, B) uncontrollable unstable mode at lambda = {bad}")
    bad = _pbh_rank_deficient(problem.A.T, _psd_sqrt(q).T)
    if bad is not None:
        raise NotDetectable(f"(A, Q^1/2) unobservable unstable mode at lambda = {bad}")

    if q is not problem.Q or r is not problem.R:
        if np.array_equal(q, problem.Q) and np.array_equal(r, problem.R):
            return problem
        return replace(problem, Q=q, R=r)
    return problem


# ---------------------------------------------------------------------------
# config format


@dataclass(frozen=True, eq=False)
class SweepSpec:
    """Parameter lists for the sensitivity sweep."""

    eta: tuple[float, ...]
    epsilon: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class ParsedConfig:
    problem: LQProblem
    geometry: UncertaintyGeometry
    grid: Grid
    sweep: SweepSpec | None = None


_TOP_KEYS = {"A", "B", "Sigma", "Q", "R", "rho", "eta", "geometry", "grid", "sweep"}
_GEOMETRY_KEYS = {"kind", "epsilon", "M"}
_GRID_KEYS = {"bounds", "n_points"}
_SWEEP_KEYS = {"eta", "epsilon"}


def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing key {key!r} in {where}")
    return mapping[key]


def _check_keys(mapping: dict, allowed: set, where: str):
    unknown = sorted(set(mapping) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


def _as_number(x, name: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(f"{name} must be a number, got {type(x).__name__}")
    return float(x)


def parse_config(data: dict) -> ParsedConfig:
    """Parse a config mapping (decoded JSON). Unknown keys are an error."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(data, _TOP_KEYS, "config")

    problem = LQProblem(
        A=_require(data, "A", "config"),
        B=_require(data, "B", "config"),
        Sigma=_require(data, "Sigma", "config"),
        Q=_require(data, "Q", "config"),
        R=_require(data, "R", "config"),
        rho=_as_number(_require(data, "rho", "config"), "rho"),
        eta=_as_number(_require(data, "eta", "config"), "eta"),
    )

    geo = _require(data, "geometry", "config")
    if not isinstance(geo, dict):
        raise ConfigError("geometry must be an object")
    _check_keys(geo, _GEOMETRY_KEYS, "geometry")
    geometry = UncertaintyGeometry(
        kind=_require(geo, "kind", "geometry"),
        epsilon=_as_number(_require(geo, "epsilon", "geometry"), "epsilon"),
        M=geo.get("M"),
    )

    gr = _require(data, "grid", "config")
    if not isinstance(gr, dict):
        raise ConfigError("grid must be an object")
    _check_keys(gr, _GRID_KEYS, "grid")
    bounds = _require(gr, "bounds", "grid")
    n_points = _require(gr, "n_points", "grid")
    try:
        grid = Grid(
            bounds=tuple(tuple(b) for b in bounds), n_points=tuple(n_points)
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid grid block: {exc}") from exc

    sweep = None
    if "sweep" in data:
        sw = data["sweep"]
        if not isinstance(sw, dict):
            raise ConfigError("sweep must be an object")
        _check_keys(sw, _SWEEP_KEYS, "sweep")
        sweep = SweepSpec(
            eta=tuple(_as_number(v, "sweep.eta") for v in _require(sw, "eta", "sweep")),
            epsilon=tuple(
                _as_number(v, "sweep.epsilon")
                for v in _require(sw, "epsilon", "sweep")
            ),
        )

    return ParsedConfig(problem=problem, geometry=geometry, grid=grid, sweep=sweep)


def serialize_config(
    problem: LQProblem,
    geometry: UncertaintyGeometry,
    grid: Grid,
    sweep: SweepSpec | None = None,
) -> dict:
    """Inverse of parse_config; round-trips all floats exactly (JSON repr)."""
    data = {
        "A": problem.A.tolist(),
        "B": problem.B.tolist(),
        "Sigma": problem.Sigma.tolist(),
        "Q": problem.Q.tolist(),
        "R": problem.R.tolist(),
        "rho": problem.rho,
        "eta": problem.eta,
        "geometry": {"kind": geometry.kind, "epsilon": geometry.epsilon},
        "grid": {
            "bounds": [list(b) for b in grid.bounds],
            "n_points": list(grid.n_points),
        },
    }
    if geometry.M is not None:
        data["geometry"]["M"] = geometry.M.tolist()
    if sweep is not None:
        data["sweep"] = {"eta": list(sweep.eta), "epsilon": list(sweep.epsilon)}
    return data


def load_config(path) -> ParsedConfig:
    """Read and parse a JSON config file."""
    try:
        with open(path, "r") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    return parse_config(data)
