"""Strict TOML run configuration.

Grammar (every table and key optional unless noted; unknown keys are errors)::

    rng_seed = 0                  # u64
    task = "all"                  # default task when the CLI gives none
    out = "hamesc-out"

    [symbol]                      # required
    constructor = "klein_gordon"  # free | klein_gordon | polynomial
    dim = 2
    mu = 1.0
    signs = [1.0, 1.0]            # free only
    [[symbol.metric]]             # klein_gordon: added to the Minkowski g^{ij}
    i = 0
    j = 0
    profile = "gaussian"          # constant | gaussian | bump | japanese
    amplitude = 0.1
    width = 1.0
    [[symbol.vector_potential]]   # klein_gordon: component k of A
    [symbol.potential]            # klein_gordon: V
    m = 2                         # polynomial only
    [[symbol.terms]]              # polynomial: alpha, limit, coefficient
    alpha = [2, 0]
    limit = 1.0
    coefficient = { profile = "constant", value = 1.0 }

    [validate] [flow] [certify] [escape-check] [transport-check] [quantize-check]

Each task table is described by its model below.
"""

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional, Union

from pydantic import (BaseModel, ConfigDict, Field, NonNegativeFloat, NonNegativeInt,
                      PositiveFloat, PositiveInt, ValidationError, field_validator,
                      model_validator)

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ConfigError, HamescError
from .symbols import (Constant, Sum, make_free, make_klein_gordon, make_polynomial,
                      minkowski_inverse, profile)

TASKS = ("validate", "flow", "certify", "escape-check", "transport-check", "quantize-check")
TASK_CHOICES = TASKS + ("all",)
U64_MAX = 2**64 - 1


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)


# ---------------------------------------------------------------------------
# symbol
# ---------------------------------------------------------------------------

class ProfileSpec(Strict):
    profile: Literal["constant", "gaussian", "bump", "japanese"]
    value: Optional[float] = None
    amplitude: Optional[float] = None
    width: Optional[PositiveFloat] = None
    center: Optional[list[float]] = None
    power: Optional[float] = None

    def coefficient(self):
        keys = ("profile", "value", "amplitude", "width", "center", "power")
        return profile({k: getattr(self, k) for k in keys if getattr(self, k) is not None})


class MetricTerm(ProfileSpec):
    i: NonNegativeInt
    j: NonNegativeInt


class VectorTerm(ProfileSpec):
    k: NonNegativeInt


class PolyTerm(Strict):
    alpha: list[NonNegativeInt]
    limit: float = 0.0
    coefficient: Union[float, ProfileSpec]


class SymbolConfig(Strict):
    constructor: Literal["free", "klein_gordon", "polynomial"]
    dim: PositiveInt = 2
    mu: PositiveFloat = 1.0
    name: Optional[str] = None
    signs: Optional[list[float]] = None
    metric: list[MetricTerm] = []
    vector_potential: list[VectorTerm] = []
    potential: Optional[ProfileSpec] = None
    m: Optional[PositiveInt] = None
    terms: list[PolyTerm] = []

    @model_validator(mode="after")
    def _fields_match_constructor(self):
        kg = bool(self.metric or self.vector_potential or self.potential)
        if self.constructor != "free" and self.signs is not None:
            raise ValueError("signs apply to the free constructor only")
        if self.constructor != "klein_gordon" and kg:
            raise ValueError("metric/vector_potential/potential apply to klein_gordon only")
        if self.constructor != "polynomial" and (self.terms or self.m is not None):
            raise ValueError("m/terms apply to the polynomial constructor only")
        if self.constructor == "polynomial" and (self.m is None or not self.terms):
            raise ValueError("polynomial needs m and at least one term")
        for t in self.metric:
            if max(t.i, t.j) >= self.dim:
                raise ValueError(f"metric index ({t.i}, {t.j}) out of range for dim {self.dim}")
        for t in self.vector_potential:
            if t.k >= self.dim:
                raise ValueError(f"vector potential index {t.k} out of range")
        for t in self.terms:
            if len(t.alpha) != self.dim:
                raise ValueError(f"term alpha {t.alpha} must have length {self.dim}")
        return self

    def build(self):
        spec = self.model_dump(mode="json", exclude_none=True)
        name = self.name or self.constructor
        if self.constructor == "free":
            return make_free(self.dim, self.signs, self.mu, name=name)
        if self.constructor == "klein_gordon":
            g = minkowski_inverse(self.dim)
            for t in self.metric:
                g[t.i][t.j] = Sum([g[t.i][t.j], t.coefficient()])
                if t.i != t.j:
                    g[t.j][t.i] = g[t.i][t.j]
            A = None
            if self.vector_potential:
                A = [Constant(0.0)] * self.dim
                for t in self.vector_potential:
                    A[t.k] = t.coefficient()
            V = self.potential.coefficient() if self.potential else None
            return make_klein_gordon(g, A, V, mu=self.mu, name=name, spec=spec)
        terms = {}
        for t in self.terms:
            c = t.coefficient if isinstance(t.coefficient, float) else t.coefficient.coefficient()
            terms[tuple(t.alpha)] = (c, t.limit)
        return make_polynomial(self.m, self.dim, terms, mu=self.mu, name=name, spec=spec)


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

class IntegratorConfig(Strict):
    rtol: PositiveFloat = 1e-10
    atol: PositiveFloat = 1e-12
    drift_tol: PositiveFloat = 1e-8
    max_steps: PositiveInt = 200_000


class SeedSpec(Strict):
    x: list[float]
    xi: list[float]


Box = list[tuple[float, float]]


def _check_box(box):
    for lo, hi in box:
        if not lo < hi:
            raise ValueError(f"region bound [{lo}, {hi}] is empty")
    return box


class ValidateConfig(Strict):
    radii: list[NonNegativeFloat] = [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0,
                                     24.0, 32.0, 64.0]
    n_x_dirs: PositiveInt = 24
    n_xi: PositiveInt = 48
    nondeg_cap: PositiveFloat = 1e6


class FlowConfig(Strict):
    seeds: list[SeedSpec] = []
    count: NonNegativeInt = 8
    region: Box = [(-2.0, 2.0), (-2.0, 2.0)]
    tol_char: PositiveFloat = 1e-10
    t_end: PositiveFloat = 50.0
    scaling_lambdas: list[PositiveFloat] = [0.5, 2.0, 10.0]
    scaling_t: PositiveFloat = 5.0
    scaling_tol: PositiveFloat = 1e-6
    integrator: IntegratorConfig = IntegratorConfig()

    _box = field_validator("region")(_check_box)


class CertifyConfig(Strict):
    region: Box = [(-2.0, 2.0), (-2.0, 2.0)]
    count: PositiveInt = 64
    mourre_safety: float = Field(1.0, gt=0, le=1)
    r1_safety: float = Field(2.0, ge=1)
    T_factor: PositiveFloat = 100.0
    T_max: Optional[PositiveFloat] = None
    reentry_threshold: PositiveInt = 3
    tol_char: PositiveFloat = 1e-10
    keep_rows: bool = True
    integrator: IntegratorConfig = IntegratorConfig()

    _box = field_validator("region")(_check_box)


class EscapeCheckConfig(Strict):
    delta: float = Field(0.6, gt=0.5, lt=0.875)
    gamma: float = Field(0.2, gt=0, lt=0.25)
    k: NonNegativeFloat = 0.0
    M: PositiveFloat = 2.0
    nu: PositiveFloat = 0.5
    count: PositiveInt = 10_000
    tol: PositiveFloat = 1e-8
    smallness_count: PositiveInt = 2000


class TransportCheckConfig(Strict):
    seed: Optional[SeedSpec] = None
    delta1: PositiveFloat = 0.2
    delta2: PositiveFloat = 0.02
    T00: PositiveFloat = 1.0
    t_hi: PositiveFloat = 20.0
    count: PositiveInt = 10_000
    tol: PositiveFloat = 1e-9
    psi_tol: PositiveFloat = 1e-9
    tune_count: PositiveInt = 4096
    integrator: IntegratorConfig = IntegratorConfig()


class QuantizeCheckConfig(Strict):
    L: PositiveFloat = 40.0
    N: PositiveInt = 256
    N_refine: PositiveInt = 512
    trials: PositiveInt = 64
    im_z: list[PositiveFloat] = [1.0, 0.1, 0.01]
    delta: float = Field(0.6, gt=0.5, lt=0.875)
    gamma: float = Field(0.2, gt=0, lt=0.25)
    M: PositiveFloat = 2.0
    nu: PositiveFloat = 0.5
    hermitian_tol: PositiveFloat = 1e-12
    commutator_tol: PositiveFloat = 1e-8
    z_spread_max: PositiveFloat = 2.0
    refine_max: PositiveFloat = 0.2
    garding_L: PositiveFloat = 20.0
    garding_N: list[PositiveInt] = [256, 512]

    @field_validator("N", "N_refine")
    @classmethod
    def _even(cls, v):
        if v % 2 or v > 2048:
            raise ValueError("grid sizes must be even and at most 2048")
        return v


class RunConfig(Strict):
    rng_seed: int = Field(0, ge=0, le=U64_MAX)
    task: Optional[Literal[TASK_CHOICES]] = None
    out: str = "hamesc-out"
    jobs: Optional[PositiveInt] = None
    symbol: SymbolConfig
    validate_: ValidateConfig = Field(ValidateConfig(), alias="validate")
    flow: FlowConfig = FlowConfig()
    certify: CertifyConfig = CertifyConfig()
    escape_check: EscapeCheckConfig = Field(EscapeCheckConfig(), alias="escape-check")
    transport_check: TransportCheckConfig = Field(TransportCheckConfig(),
                                                  alias="transport-check")
    quantize_check: QuantizeCheckConfig = Field(QuantizeCheckConfig(), alias="quantize-check")

    def section(self, task):
        return {"validate": self.validate_, "flow": self.flow, "certify": self.certify,
                "escape-check": self.escape_check, "transport-check": self.transport_check,
                "quantize-check": self.quantize_check}[task]

    def echo(self):
        """Result-relevant settings; output location and worker count are left out."""
        return self.model_dump(mode="json", by_alias=True, exclude={"out", "jobs", "task"})

    def content_hash(self):
        blob = json.dumps(self.echo(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _format_errors(exc):
    lines = []
    for e in exc.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(text, **overrides):
    """Parse TOML text; ``overrides`` replace top-level keys before validation."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    data.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from exc
    try:
        cfg.symbol.build()
    except (HamescError, ValueError, TypeError) as exc:
        raise ConfigError(f"symbol: {exc}") from exc
    return cfg


def load_config(path, **overrides):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, **overrides)
