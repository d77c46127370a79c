"""VPP dispatch problem: instances, inputs, uncertainty scenarios, compact form.

Variable ordering is ``u = [P_G^1..P_G^N, P_L^1..P_L^N]`` and the input
vector is ``x = [P_Sch, P_NG^1..P_NG^N, P_IL^1..P_IL^N]``.  Inequality rows
come in six blocks of N rows each, in the order

    G-upper, G-lower, L-upper, L-lower, O-upper, O-lower

and every row reads ``A u + B x + C eps + b <= 0``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import assets
from .qp import QpProblem, QpStatus, solve_qp

BLOCKS = ("g_upper", "g_lower", "l_upper", "l_lower", "o_upper", "o_lower")
OUTPUT_CONVENTIONS = ("consistent", "literal")


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator from an int, SeedSequence or Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def _range(pair, name):
    lo, hi = float(pair[0]), float(pair[1])
    if not np.isfinite(lo) or not np.isfinite(hi) or lo > hi:
        raise ValueError(f"invalid range for {name}: {pair}")
    return lo, hi


@dataclass(frozen=True)
class GenConfig:
    n_prosumers: int = 10
    pg_range: tuple = (0.0, 80.0)
    pl_range: tuple = (10.0, 25.0)
    po_range: tuple = (-100.0, 100.0)
    # sampled upper bound = lo + frac * (hi - lo), frac ~ U(capacity_fraction)
    capacity_fraction: tuple = (0.6, 1.0)
    beta_quadratic_range: tuple = (0.01, 0.1)
    beta_linear_range: tuple = (1.0, 5.0)
    pv_area_range: tuple = (200.0, 300.0)
    pv_efficiency_range: tuple = (0.15, 0.20)
    wind_air_density: float = 1.225
    wind_swept_area_range: tuple = (150.0, 200.0)
    wind_power_coeff_range: tuple = (0.35, 0.45)
    il_base_range: tuple = (10.0, 25.0)

    def validate(self):
        if self.n_prosumers < 1:
            raise ValueError("n_prosumers must be at least 1")
        for name in ("pg_range", "pl_range", "po_range", "capacity_fraction", "beta_quadratic_range",
                     "beta_linear_range", "pv_area_range", "pv_efficiency_range",
                     "wind_swept_area_range", "wind_power_coeff_range", "il_base_range"):
            _range(getattr(self, name), name)
        lo, hi = self.capacity_fraction
        if lo < 0 or hi > 1:
            raise ValueError("capacity_fraction must lie within [0, 1]")
        if self.beta_quadratic_range[0] <= 0 or self.beta_linear_range[0] < 0:
            raise ValueError("cost coefficients must be positive")
        if self.pv_efficiency_range[1] > 1:
            raise ValueError("PV efficiency cannot exceed 1")


@dataclass(frozen=True)
class ProfileConfig:
    radiation_range: tuple = (300.0, 1000.0)     # W/m^2
    wind_speed_range: tuple = (5.0, 11.0)        # m/s
    pv_cap: float = assets.PV_CAP_KW
    wind_limits: tuple = assets.WIND_RANGE_KW
    load_fluctuation: float = 0.10
    dispatch_fraction: tuple = (0.2, 0.8)
    output_margin: float = 10.0                  # kW kept clear of the output limits
    max_retries: int = 20


@dataclass(frozen=True)
class VppInstance:
    """Fixed prosumer fleet.  All per-prosumer fields are length-N arrays."""

    pg_min: np.ndarray
    pg_max: np.ndarray
    pl_min: np.ndarray
    pl_max: np.ndarray
    po_min: np.ndarray
    po_max: np.ndarray
    beta_g1: np.ndarray
    beta_g2: np.ndarray
    beta_l1: np.ndarray
    beta_l2: np.ndarray
    alpha_g: np.ndarray
    alpha_l: np.ndarray
    source_kind: tuple
    asset_params: dict = field(default_factory=dict)
    output_convention: str = "consistent"
    uncertainty_family: str = "gaussian"

    def __post_init__(self):
        n = self.n_prosumers
        for name in ("pg_min", "pg_max", "pl_min", "pl_max", "po_min", "po_max", "beta_g1",
                     "beta_g2", "beta_l1", "beta_l2", "alpha_g", "alpha_l"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if len(self.source_kind) != n or any(k not in ("pv", "wind") for k in self.source_kind):
            raise ValueError("source_kind must list 'pv' or 'wind' for every prosumer")
        for lo, hi in (("pg_min", "pg_max"), ("pl_min", "pl_max"), ("po_min", "po_max")):
            if np.any(getattr(self, lo) > getattr(self, hi)):
                raise ValueError(f"{lo} exceeds {hi}")
        if np.any(self.beta_g1 <= 0) or np.any(self.beta_l1 <= 0):
            raise ValueError("quadratic cost coefficients must be positive")
        if np.any(self.alpha_g < 0) or np.any(self.alpha_l < 0):
            raise ValueError("participation factors must be nonnegative")
        if abs(self.alpha_g.sum() + self.alpha_l.sum() - 1.0) > 1e-12:
            raise ValueError("participation factors must sum to one")
        if self.output_convention not in OUTPUT_CONVENTIONS:
            raise ValueError(f"unknown output convention {self.output_convention!r}")

    @property
    def n_prosumers(self) -> int:
        return len(self.source_kind)

    @property
    def renewable_cap(self) -> np.ndarray:
        """Upper limit of realized renewable power per prosumer (kW)."""
        return np.asarray(self.asset_params.get("ng_cap", np.full(self.n_prosumers, np.inf)), dtype=float)

    def to_json(self) -> dict:
        data = {}
        for key, value in asdict(self).items():
            if isinstance(value, np.ndarray):
                value = value.tolist()
            elif key == "asset_params":
                value = {k: np.asarray(v).tolist() for k, v in value.items()}
            elif key == "source_kind":
                value = list(value)
            data[key] = value
        data["n_prosumers"] = self.n_prosumers
        return data

    @classmethod
    def from_json(cls, data: dict) -> "VppInstance":
        data = dict(data)
        data.pop("n_prosumers", None)
        data["source_kind"] = tuple(data["source_kind"])
        data["asset_params"] = {k: np.asarray(v, dtype=float) for k, v in data.get("asset_params", {}).items()}
        return cls(**data)


@dataclass(frozen=True)
class InputVector:
    p_sch: float
    p_ng: np.ndarray
    p_il: np.ndarray

    def __post_init__(self):
        p_ng = np.asarray(self.p_ng, dtype=float)
        p_il = np.asarray(self.p_il, dtype=float)
        if p_ng.shape != p_il.shape or p_ng.ndim != 1:
            raise ValueError("p_ng and p_il must be vectors of equal length")
        if np.any(p_ng < 0) or np.any(p_il < 0):
            raise ValueError("renewable forecast and inflexible load must be nonnegative")
        object.__setattr__(self, "p_sch", float(self.p_sch))
        object.__setattr__(self, "p_ng", p_ng)
        object.__setattr__(self, "p_il", p_il)

    def as_array(self) -> np.ndarray:
        return np.concatenate([[self.p_sch], self.p_ng, self.p_il])

    @classmethod
    def from_array(cls, x) -> "InputVector":
        x = np.asarray(x, dtype=float)
        n = (x.size - 1) // 2
        return cls(x[0], x[1:1 + n], x[1 + n:])

    def to_json(self) -> dict:
        return {"p_sch": self.p_sch, "p_ng": self.p_ng.tolist(), "p_il": self.p_il.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "InputVector":
        return cls(data["p_sch"], data["p_ng"], data["p_il"])


@dataclass(frozen=True)
class ScenarioSet:
    """Renewable forecast deviations, one scenario per row (kW)."""

    eps: np.ndarray
    seed: object = None

    def __post_init__(self):
        eps = np.atleast_2d(np.asarray(self.eps, dtype=float))
        if eps.shape[0] < 1:
            raise ValueError("a scenario set needs at least one scenario")
        eps.setflags(write=False)
        object.__setattr__(self, "eps", eps)

    @property
    def n_scen(self) -> int:
        return self.eps.shape[0]

    def permuted(self, order) -> "ScenarioSet":
        return ScenarioSet(self.eps[np.asarray(order)], self.seed)


@dataclass(frozen=True)
class CompactProblem:
    """Matrices of ``A_eq u + B_eq x = 0`` and ``A u + B x + C eps + b <= 0``."""

    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ineq: np.ndarray
    b_ineq_mat: np.ndarray
    c_ineq: np.ndarray
    b_ineq_vec: np.ndarray
    p_obj: np.ndarray
    q_obj: np.ndarray

    @property
    def n_u(self) -> int:
        return self.a_ineq.shape[1]

    @property
    def n_rows(self) -> int:
        return self.a_ineq.shape[0]

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.p_obj @ u + self.q_obj @ u)

    def residuals(self, u, x, eps=None) -> np.ndarray:
        """Inequality row values ``A u + B x + C eps + b`` (eps defaults to 0)."""
        x = _x_array(x)
        out = self.a_ineq @ u + self.b_ineq_mat @ x + self.b_ineq_vec
        if eps is not None:
            out = out + self.c_ineq @ eps
        return out

    def equality_residual(self, u, x) -> np.ndarray:
        return self.a_eq @ u + self.b_eq @ _x_array(x)


def _x_array(x) -> np.ndarray:
    return x.as_array() if isinstance(x, InputVector) else np.asarray(x, dtype=float)


def participation_factors(instance_or_pg_max, pl_max=None):
    """Recourse shares ``alpha_g = pg_max / total``, ``alpha_l = pl_max / total``.

    Accepts a :class:`VppInstance` or the two capacity vectors.
    """
    if pl_max is None:
        pg_max, pl_max = instance_or_pg_max.pg_max, instance_or_pg_max.pl_max
    else:
        pg_max = instance_or_pg_max
    pg_max = np.asarray(pg_max, dtype=float)
    pl_max = np.asarray(pl_max, dtype=float)
    total = pg_max.sum() + pl_max.sum()
    if not total > 0:
        raise ValueError("zero total capacity")
    return pg_max / total, pl_max / total


def generate_instance(config: GenConfig | None = None, seed=0) -> VppInstance:
    """Sample a prosumer fleet: half PV, half wind (PV gets the odd one)."""
    config = config or GenConfig()
    config.validate()
    rng = make_rng(seed)
    n = config.n_prosumers

    def upper(pair):
        lo, hi = pair
        frac = rng.uniform(*config.capacity_fraction, size=n)
        return np.full(n, float(lo)), lo + frac * (hi - lo)

    pg_min, pg_max = upper(config.pg_range)
    pl_min, pl_max = upper(config.pl_range)
    po_min = np.full(n, float(config.po_range[0]))
    po_max = np.full(n, float(config.po_range[1]))
    beta_g1 = rng.uniform(*config.beta_quadratic_range, size=n)
    beta_l1 = rng.uniform(*config.beta_quadratic_range, size=n)
    beta_g2 = rng.uniform(*config.beta_linear_range, size=n)
    beta_l2 = rng.uniform(*config.beta_linear_range, size=n)
    n_pv = (n + 1) // 2
    source_kind = tuple(["pv"] * n_pv + ["wind"] * (n - n_pv))
    is_pv = np.array([k == "pv" for k in source_kind])
    params = {
        "pv_area": np.where(is_pv, rng.uniform(*config.pv_area_range, size=n), 0.0),
        "pv_efficiency": np.where(is_pv, rng.uniform(*config.pv_efficiency_range, size=n), 0.0),
        "wind_air_density": np.where(is_pv, 0.0, config.wind_air_density),
        "wind_swept_area": np.where(is_pv, 0.0, rng.uniform(*config.wind_swept_area_range, size=n)),
        "wind_power_coeff": np.where(is_pv, 0.0, rng.uniform(*config.wind_power_coeff_range, size=n)),
        "il_base": rng.uniform(*config.il_base_range, size=n),
        "ng_cap": np.where(is_pv, assets.PV_CAP_KW, assets.WIND_RANGE_KW[1]),
    }
    alpha_g, alpha_l = participation_factors(pg_max, pl_max)
    return VppInstance(pg_min=pg_min, pg_max=pg_max, pl_min=pl_min, pl_max=pl_max,
                       po_min=po_min, po_max=po_max, beta_g1=beta_g1, beta_g2=beta_g2,
                       beta_l1=beta_l1, beta_l2=beta_l2, alpha_g=alpha_g, alpha_l=alpha_l,
                       source_kind=source_kind, asset_params=params)


def renewable_forecast(instance: VppInstance, profile: ProfileConfig, rng) -> np.ndarray:
    """Forecast non-dispatchable power from a synthetic irradiance/wind draw."""
    n = instance.n_prosumers
    params = instance.asset_params
    radiation = rng.uniform(*profile.radiation_range)
    speed = rng.uniform(*profile.wind_speed_range)
    out = np.empty(n)
    for i, kind in enumerate(instance.source_kind):
        # per-prosumer site variation around the common weather draw
        local = rng.uniform(1.0 - profile.load_fluctuation, 1.0 + profile.load_fluctuation)
        if kind == "pv":
            out[i] = assets.pv_power(radiation * local, params["pv_area"][i], params["pv_efficiency"][i],
                                     cap=profile.pv_cap)
        else:
            out[i] = assets.wind_power(params["wind_air_density"][i], params["wind_swept_area"][i],
                                       params["wind_power_coeff"][i], speed * local ** (1 / 3),
                                       limits=profile.wind_limits)
    return out


def deterministic_qp(cp: CompactProblem, x) -> QpProblem:
    """The zero-uncertainty dispatch problem as a QP."""
    x = _x_array(x)
    return QpProblem(cp.p_obj, cp.q_obj, cp.a_ineq, -(cp.b_ineq_mat @ x + cp.b_ineq_vec),
                     cp.a_eq, -(cp.b_eq @ x))


def sample_input(instance: VppInstance, profile_config: ProfileConfig | None = None, seed=0) -> InputVector:
    """Draw one input vector whose deterministic dispatch problem is feasible.

    The schedule is the net output of a random dispatch drawn inside the
    middle of every operating range; feasibility is then confirmed by a QP
    solve.  Raises ``RuntimeError("infeasible schedule draw")`` after
    ``max_retries`` failures.
    """
    profile = profile_config or ProfileConfig()
    rng = make_rng(seed)
    n = instance.n_prosumers
    cp = assemble_compact(instance)
    lo_f, hi_f = profile.dispatch_fraction
    for _ in range(profile.max_retries):
        p_ng = renewable_forecast(instance, profile, rng)
        base = instance.asset_params["il_base"]
        p_il = base * rng.uniform(1.0 - profile.load_fluctuation, 1.0 + profile.load_fluctuation, size=n)
        p_g = instance.pg_min + rng.uniform(lo_f, hi_f, size=n) * (instance.pg_max - instance.pg_min)
        p_l = instance.pl_min + rng.uniform(lo_f, hi_f, size=n) * (instance.pl_max - instance.pl_min)
        p_o = p_g - p_l + p_ng - p_il
        if np.any(p_o < instance.po_min + profile.output_margin) or \
                np.any(p_o > instance.po_max - profile.output_margin):
            continue
        x = InputVector(p_o.sum(), p_ng, p_il)
        if solve_qp(deterministic_qp(cp, x)).status == QpStatus.OPTIMAL:
            return x
    raise RuntimeError("infeasible schedule draw")


def sample_scenarios(instance: VppInstance, x: InputVector, n_scen: int, seed=0,
                     rel_std: float = 0.10) -> ScenarioSet:
    """Gaussian forecast errors with std ``rel_std * p_ng``, clamped so that the
    realized renewable power stays within ``[0, cap]``."""
    if n_scen < 1:
        raise ValueError("n_scen must be at least 1")
    rng = make_rng(seed)
    std = rel_std * x.p_ng
    eps = rng.standard_normal((n_scen, instance.n_prosumers)) * std
    cap = instance.renewable_cap
    eps = np.clip(eps, -x.p_ng, np.maximum(cap - x.p_ng, 0.0))
    seed_tag = seed if isinstance(seed, (int, np.integer)) else None
    return ScenarioSet(eps, seed_tag)


def assemble_compact(instance: VppInstance, with_recourse: bool = True,
                     output_convention: str | None = None) -> CompactProblem:
    """Build the compact matrices of the chance-constrained dispatch problem.

    With recourse, generators absorb ``-alpha_g * sum(eps)`` and flexible loads
    ``+alpha_l * sum(eps)``; the output row is
    ``P_o = (P_G - alpha_g S) - (P_L + alpha_l S) + (P_NG + eps_i) - P_IL``.
    The ``"literal"`` convention adds a second ``P_NG`` term to the output row.
    """
    conv = output_convention or instance.output_convention
    if conv not in OUTPUT_CONVENTIONS:
        raise ValueError(f"unknown output convention {conv!r}")
    n = instance.n_prosumers
    eye = np.eye(n)
    zero = np.zeros((n, n))
    ones = np.ones((1, n))
    a_g = np.hstack([eye, zero])
    a_l = np.hstack([zero, eye])
    a_ineq = np.vstack([a_g, -a_g, a_l, -a_l, a_g - a_l, -(a_g - a_l)])

    ng_coef = 2.0 if conv == "literal" else 1.0
    b_o = np.hstack([np.zeros((n, 1)), ng_coef * eye, -eye])
    z_b = np.zeros((n, 2 * n + 1))
    b_ineq_mat = np.vstack([z_b, z_b, z_b, z_b, b_o, -b_o])

    if with_recourse:
        c_g = -instance.alpha_g[:, None] * ones
        c_l = instance.alpha_l[:, None] * ones
    else:
        c_g = np.zeros((n, n))
        c_l = np.zeros((n, n))
    c_o = c_g - c_l + eye
    c_ineq = np.vstack([c_g, -c_g, c_l, -c_l, c_o, -c_o])

    b_ineq_vec = np.concatenate([-instance.pg_max, instance.pg_min, -instance.pl_max, instance.pl_min,
                                 -instance.po_max, instance.po_min])
    a_eq = np.hstack([np.ones(n), -np.ones(n)])[None, :]
    b_eq = np.hstack([[-1.0], np.ones(n), -np.ones(n)])[None, :]
    p_obj = np.diag(2.0 * np.concatenate([instance.beta_g1, instance.beta_l1]))
    q_obj = np.concatenate([instance.beta_g2, instance.beta_l2])
    for arr in (a_eq, b_eq, a_ineq, b_ineq_mat, c_ineq, b_ineq_vec, p_obj, q_obj):
        arr.setflags(write=False)
    return CompactProblem(a_eq, b_eq, a_ineq, b_ineq_mat, c_ineq, b_ineq_vec, p_obj, q_obj)


def check_joint_violation(problem: CompactProblem, u, x, eps_row, tol: float = 1e-6) -> bool:
    """True if any inequality row exceeds ``tol`` under scenario ``eps_row``."""
    return bool(np.any(problem.residuals(u, x, eps_row) > tol))


# -- file formats -----------------------------------------------------------

def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")


def save_instance(instance: VppInstance, path) -> None:
    write_json(path, instance.to_json())


def load_instance(path) -> VppInstance:
    return VppInstance.from_json(json.loads(Path(path).read_text()))


def save_input(x: InputVector, path) -> None:
    write_json(path, x.to_json())


def load_input(path) -> InputVector:
    return InputVector.from_json(json.loads(Path(path).read_text()))


def save_scenarios(scen: ScenarioSet, path, rel_std: float = 0.10) -> None:
    """CSV with one scenario per row plus a ``.json`` sidecar (seed, shape)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = scen.eps.shape[1]
    header = ",".join(f"eps_{i + 1}" for i in range(n))
    lines = [header] + [",".join(repr(float(v)) for v in row) for row in scen.eps]
    path.write_text("\n".join(lines) + "\n")
    write_json(path.with_suffix(".json"), {
        "seed": scen.seed, "n_scen": scen.n_scen, "n_prosumers": n,
        "distribution": "gaussian", "relative_std": rel_std, "clamped_to": "[0, cap] realized power",
    })


def load_scenarios(path) -> ScenarioSet:
    path = Path(path)
    eps = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    sidecar = path.with_suffix(".json")
    seed = json.loads(sidecar.read_text()).get("seed") if sidecar.exists() else None
    return ScenarioSet(eps, seed)
