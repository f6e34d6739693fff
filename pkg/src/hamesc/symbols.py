"""Real principal type symbols polynomial in the momentum variable.

A symbol is stored as a map from multi-indices ``alpha`` to coefficient
functions ``a_alpha(x)``, together with the constant limits ``b_alpha`` of the
top-order coefficients.  All evaluators are vectorised: ``x`` and ``xi`` are
arrays of shape ``(..., n)`` and results carry the leading shape.
"""

from dataclasses import dataclass, field
from itertools import product as iproduct

import numpy as np

from .errors import SymbolRejected, UsageError

PARTS = ("full", "principal", "free", "lower")


def japanese(x):
    """``<x> = (1 + |x|^2)^(1/2)`` over the last axis."""
    x = np.asarray(x, dtype=float)
    return np.sqrt(1.0 + np.sum(x * x, axis=-1))


# ---------------------------------------------------------------------------
# coefficient functions
# ---------------------------------------------------------------------------

def fd_grad(f, x, rel_step=1e-6):
    """Central-difference gradient with step ``<x> * rel_step``."""
    x = np.asarray(x, dtype=float)
    h = japanese(x)[..., None] * rel_step
    n = x.shape[-1]
    out = np.empty(x.shape)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        out[..., j] = (f(x + h * e) - f(x - h * e)) / (2 * h[..., 0])
    return out


class CoefficientFunction:
    """Smooth real function of ``x`` with gradient and Hessian.

    Subclasses override ``value``, ``grad`` and ``hessian``.  The base
    ``grad``/``hessian`` fall back to central differences; ``analytic`` is
    then False and validation reports flag it.
    """

    analytic = True

    def value(self, x):
        raise NotImplementedError

    def grad(self, x):
        return fd_grad(self.value, x)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        h = japanese(x)[..., None, None] * 1e-4
        n = x.shape[-1]
        out = np.empty(x.shape + (n,))
        for j in range(n):
            e = np.zeros(n)
            e[j] = 1.0
            out[..., j, :] = (self.grad(x + h[..., 0] * e)
                              - self.grad(x - h[..., 0] * e)) / (2 * h[..., 0])
        return 0.5 * (out + np.swapaxes(out, -1, -2))

    def __call__(self, x):
        return self.value(x)

    def __add__(self, other):
        return Sum([self, as_coefficient(other)])

    __radd__ = __add__

    def __mul__(self, other):
        if np.isscalar(other):
            return Scaled(float(other), self)
        return Product(self, as_coefficient(other))

    __rmul__ = __mul__

    def __neg__(self):
        return Scaled(-1.0, self)

    def is_zero(self):
        return False

    def describe(self):
        return {"profile": type(self).__name__.lower()}


class Constant(CoefficientFunction):
    def __init__(self, c):
        self.c = float(c)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.c)

    def grad(self, x):
        return np.zeros(np.shape(x))

    def hessian(self, x):
        x = np.asarray(x)
        return np.zeros(x.shape + (x.shape[-1],))

    def is_zero(self):
        return self.c == 0.0

    def describe(self):
        return {"profile": "constant", "value": self.c}


class Gaussian(CoefficientFunction):
    """``amplitude * exp(-|x - center|^2 / width^2)``."""

    def __init__(self, amplitude=1.0, width=1.0, center=None):
        self.amplitude = float(amplitude)
        self.width = float(width)
        self.center = None if center is None else np.asarray(center, dtype=float)

    def _d(self, x):
        x = np.asarray(x, dtype=float)
        return x if self.center is None else x - self.center

    def value(self, x):
        d = self._d(x)
        return self.amplitude * np.exp(-np.sum(d * d, axis=-1) / self.width**2)

    def grad(self, x):
        d = self._d(x)
        return (-2.0 / self.width**2) * d * self.value(x)[..., None]

    def hessian(self, x):
        d = self._d(x)
        f = self.value(x)[..., None, None]
        w2 = self.width**2
        n = d.shape[-1]
        outer = d[..., :, None] * d[..., None, :]
        return f * (4.0 / w2**2 * outer - 2.0 / w2 * np.eye(n))

    def describe(self):
        out = {"profile": "gaussian", "amplitude": self.amplitude, "width": self.width}
        if self.center is not None:
            out["center"] = self.center.tolist()
        return out


class JapanesePower(CoefficientFunction):
    """``amplitude * <x>^(-power)`` (long-range decay at rate ``power``)."""

    def __init__(self, amplitude=1.0, power=1.0):
        self.amplitude = float(amplitude)
        self.power = float(power)

    def value(self, x):
        return self.amplitude * japanese(x) ** (-self.power)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        j2 = japanese(x) ** 2
        return (-self.power * self.amplitude) * x * (j2 ** (-self.power / 2 - 1))[..., None]

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        s = self.power
        j2 = japanese(x)[..., None, None] ** 2
        n = x.shape[-1]
        outer = x[..., :, None] * x[..., None, :]
        return self.amplitude * (-s * j2 ** (-s / 2 - 1) * np.eye(n)
                                 + s * (s + 2) * outer * j2 ** (-s / 2 - 2))

    def describe(self):
        return {"profile": "japanese", "amplitude": self.amplitude, "power": self.power}


class Scaled(CoefficientFunction):
    def __init__(self, c, f):
        self.c = float(c)
        self.f = f
        self.analytic = f.analytic

    def value(self, x):
        return self.c * self.f.value(x)

    def grad(self, x):
        return self.c * self.f.grad(x)

    def hessian(self, x):
        return self.c * self.f.hessian(x)

    def is_zero(self):
        return self.c == 0.0 or self.f.is_zero()

    def describe(self):
        return {"profile": "scaled", "factor": self.c, "of": self.f.describe()}


class Sum(CoefficientFunction):
    def __init__(self, terms):
        flat = []
        for t in terms:
            flat.extend(t.terms if isinstance(t, Sum) else [t])
        self.terms = [t for t in flat if not t.is_zero()]
        self.analytic = all(t.analytic for t in self.terms)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for t in self.terms:
            out = out + t.value(x)
        return out

    def grad(self, x):
        out = np.zeros(np.shape(x))
        for t in self.terms:
            out = out + t.grad(x)
        return out

    def hessian(self, x):
        x = np.asarray(x)
        out = np.zeros(x.shape + (x.shape[-1],))
        for t in self.terms:
            out = out + t.hessian(x)
        return out

    def is_zero(self):
        return not self.terms

    def describe(self):
        return {"profile": "sum", "terms": [t.describe() for t in self.terms]}


class Product(CoefficientFunction):
    def __init__(self, a, b):
        self.a, self.b = a, b
        self.analytic = a.analytic and b.analytic

    def value(self, x):
        return self.a.value(x) * self.b.value(x)

    def grad(self, x):
        return (self.a.grad(x) * self.b.value(x)[..., None]
                + self.a.value(x)[..., None] * self.b.grad(x))

    def hessian(self, x):
        ga, gb = self.a.grad(x), self.b.grad(x)
        cross = ga[..., :, None] * gb[..., None, :]
        return (self.a.hessian(x) * self.b.value(x)[..., None, None]
                + self.a.value(x)[..., None, None] * self.b.hessian(x)
                + cross + np.swapaxes(cross, -1, -2))

    def is_zero(self):
        return self.a.is_zero() or self.b.is_zero()

    def describe(self):
        return {"profile": "product", "factors": [self.a.describe(), self.b.describe()]}


class CallableCoefficient(CoefficientFunction):
    """Wraps user callables; missing derivatives fall back to differences.

    Instances holding lambdas cannot be pickled, so parallel sweeps over
    symbols built from them run serially.
    """

    def __init__(self, value, grad=None, hessian=None, label="callable"):
        self._value = value
        self._grad = grad
        self._hessian = hessian
        self.label = label
        self.analytic = grad is not None

    def value(self, x):
        return np.asarray(self._value(np.asarray(x, dtype=float)), dtype=float)

    def grad(self, x):
        if self._grad is None:
            return super().grad(x)
        return np.asarray(self._grad(np.asarray(x, dtype=float)), dtype=float)

    def hessian(self, x):
        if self._hessian is None:
            return super().hessian(x)
        return np.asarray(self._hessian(np.asarray(x, dtype=float)), dtype=float)

    def describe(self):
        return {"profile": "callable", "label": self.label}


def as_coefficient(obj):
    if isinstance(obj, CoefficientFunction):
        return obj
    if np.isscalar(obj):
        return Constant(obj)
    raise TypeError(f"cannot interpret {obj!r} as a coefficient function")


PROFILES = {
    "constant": lambda spec: Constant(spec.get("value", 0.0)),
    "gaussian": lambda spec: Gaussian(spec.get("amplitude", 1.0), spec.get("width", 1.0),
                                      spec.get("center")),
    "bump": lambda spec: Gaussian(spec.get("amplitude", 1.0), spec.get("width", 1.0),
                                  spec.get("center")),
    "japanese": lambda spec: JapanesePower(spec.get("amplitude", 1.0), spec.get("power", 1.0)),
}


def profile(spec):
    """Build a coefficient function from a named-profile dict."""
    spec = dict(spec)
    name = spec.pop("profile", None)
    if name not in PROFILES:
        raise UsageError(f"unknown profile {name!r}; known: {sorted(PROFILES)}")
    allowed = {"constant": {"value"}, "gaussian": {"amplitude", "width", "center"},
               "bump": {"amplitude", "width", "center"},
               "japanese": {"amplitude", "power"}}[name]
    extra = set(spec) - allowed
    if extra:
        raise UsageError(f"profile {name!r} got unknown keys {sorted(extra)}")
    return PROFILES[name](spec)


# ---------------------------------------------------------------------------
# phase points and symbols
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        xi = np.asarray(self.xi, dtype=float).reshape(-1)
        if x.shape != xi.shape:
            raise UsageError("x and xi must have the same length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise UsageError("phase point must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)

    @property
    def dim(self):
        return self.x.size

    def as_dict(self):
        return {"x": self.x.tolist(), "xi": self.xi.tolist()}


def multi_indices(n, max_order, min_order=0):
    """All multi-indices with ``min_order <= |alpha| <= max_order``, grlex."""
    out = [a for a in iproduct(range(max_order + 1), repeat=n)
           if min_order <= sum(a) <= max_order]
    return sorted(out, key=lambda a: (sum(a), tuple(-k for k in a)))


def _grlex_key(alpha):
    return (sum(alpha), tuple(-k for k in alpha))


@dataclass(frozen=True)
class Symbol:
    """``p(x, xi) = sum_alpha a_alpha(x) xi^alpha`` of order ``m``.

    ``limits`` holds ``b_alpha`` for ``|alpha| = m`` (missing entries are 0);
    the free symbol is ``p_0(xi) = sum b_alpha xi^alpha``.
    """

    m: int
    mu: float
    dim: int
    coeffs: dict
    limits: dict = field(default_factory=dict)
    name: str = "symbol"
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise UsageError("order m must be an integer >= 2")
        if not self.mu > 0:
            raise UsageError("decay rate mu must be positive")
        coeffs = {}
        for alpha, f in self.coeffs.items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != self.dim or min(alpha) < 0 or sum(alpha) > self.m:
                raise UsageError(f"bad multi-index {alpha} for dim={self.dim}, m={self.m}")
            f = as_coefficient(f)
            if not f.is_zero():
                coeffs[alpha] = f
        limits = {}
        for alpha, b in self.limits.items():
            alpha = tuple(int(a) for a in alpha)
            if sum(alpha) != self.m:
                raise UsageError("limits b_alpha are only defined for |alpha| = m")
            if float(b) != 0.0:
                limits[alpha] = float(b)
        keys = sorted(set(coeffs) | set(limits), key=_grlex_key)
        object.__setattr__(self, "coeffs", {a: coeffs[a] for a in sorted(coeffs, key=_grlex_key)})
        object.__setattr__(self, "limits", {a: limits[a] for a in sorted(limits, key=_grlex_key)})
        object.__setattr__(self, "_alphas", keys)
        A = np.array(keys, dtype=int).reshape(len(keys), self.dim)
        object.__setattr__(self, "_A", A)
        object.__setattr__(self, "_order", A.sum(axis=1))
        zero = Constant(0.0)
        object.__setattr__(self, "_funcs", [coeffs.get(a, zero) for a in keys])
        object.__setattr__(self, "_b", np.array([limits.get(a, 0.0) for a in keys]))
        tables = {}
        for part in ("full", "principal"):
            idx = [k for k in np.flatnonzero(self._mask(part)) if not self._funcs[k].is_zero()]
            Ap = A[idx]
            E = np.maximum(Ap[:, None, :] - np.eye(self.dim, dtype=int)[None], 0)
            tables[part] = ([self._funcs[k] for k in idx], Ap, E)
        object.__setattr__(self, "_field_tables", tables)

    # -- internal helpers ----------------------------------------------------

    def _mask(self, part):
        if part == "full" or part == "free":
            return np.ones(len(self._alphas), dtype=bool)
        if part == "principal":
            return self._order == self.m
        if part == "lower":
            return self._order < self.m
        raise UsageError(f"unknown part {part!r}; expected one of {PARTS}")

    def _coef(self, x, part, what="value"):
        """Stacked coefficient data for ``part``: (..., K) / (..., K, n) / (..., K, n, n)."""
        x = np.asarray(x, dtype=float)
        mask = self._mask(part)
        K = len(self._alphas)
        n = self.dim
        lead = x.shape[:-1]
        shape = {"value": (K,), "grad": (K, n), "hessian": (K, n, n)}[what]
        out = np.zeros(lead + shape)
        if part == "free":
            if what == "value":
                out[...] = self._b
            return out
        tail = (slice(None),) * (len(shape) - 1)
        for k, f in enumerate(self._funcs):
            if mask[k] and not f.is_zero():
                out[(Ellipsis, k) + tail] = getattr(f, what)(x)
        return out

    def _powers(self, xi):
        # xi_j ** e for e = 0..m by repeated multiplication -> (..., n, m + 1)
        xi = np.asarray(xi, dtype=float)
        pw = np.empty(xi.shape + (self.m + 1,))
        pw[..., 0] = 1.0
        for e in range(1, self.m + 1):
            pw[..., e] = pw[..., e - 1] * xi
        return pw

    def _mono(self, xi, exps, pw=None):
        # prod_j xi_j ** exps[k, j] -> (..., K)
        pw = self._powers(xi) if pw is None else pw
        cols = np.arange(self.dim)[None, :]
        return np.prod(pw[..., cols, exps], axis=-1)

    def _mono_d1(self, xi):
        # d/dxi_j xi^alpha -> (..., K, n)
        A = self._A
        n = self.dim
        pw = self._powers(xi)
        out = []
        for j in range(n):
            e = np.zeros(n, dtype=int)
            e[j] = 1
            out.append(A[:, j] * self._mono(xi, np.maximum(A - e, 0), pw))
        return np.stack(out, axis=-1)

    def _mono_d2(self, xi):
        # d^2/dxi_j dxi_k xi^alpha -> (..., K, n, n)
        A = self._A
        n = self.dim
        xi = np.asarray(xi, dtype=float)
        pw = self._powers(xi)
        out = np.zeros(xi.shape[:-1] + (len(self._alphas), n, n))
        for j in range(n):
            for k in range(j, n):
                e = np.zeros(n, dtype=int)
                e[j] += 1
                e[k] += 1
                fac = A[:, j] * (A[:, k] - (1 if j == k else 0))
                out[..., j, k] = fac * self._mono(xi, np.maximum(A - e, 0), pw)
                out[..., k, j] = out[..., j, k]
        return out

    # -- public evaluators ---------------------------------------------------

    def eval(self, x, xi, part="full"):
        c = self._coef(x, part)
        return np.sum(c * self._mono(xi, self._A), axis=-1)

    def dxi(self, x, xi, part="full"):
        c = self._coef(x, part)
        return np.einsum("...k,...kj->...j", c, self._mono_d1(xi))

    def dx(self, x, xi, part="full"):
        g = self._coef(x, part, "grad")
        return np.einsum("...kj,...k->...j", g, self._mono(xi, self._A))

    def dxi_dxi(self, x, xi, part="full"):
        c = self._coef(x, part)
        return np.einsum("...k,...kjl->...jl", c, self._mono_d2(xi))

    def dx_dxi(self, x, xi, part="full"):
        """``out[..., k, j] = d^2 p / dx_k dxi_j``."""
        g = self._coef(x, part, "grad")
        return np.einsum("...kc,...kj->...cj", g, self._mono_d1(xi))

    def dx_dx(self, x, xi, part="full"):
        h = self._coef(x, part, "hessian")
        return np.einsum("...kab,...k->...ab", h, self._mono(xi, self._A))

    def field(self, x, xi, part="principal"):
        """Fused ``(d_xi p, d_x p)`` for a single point (the flow's hot path)."""
        funcs, Ap, E = self._field_tables[part]
        n = self.dim
        if not funcs:
            return np.zeros(n), np.zeros(n)
        vals = np.empty(len(funcs))
        grads = np.empty((len(funcs), n))
        x2 = x[None, :]
        for k, f in enumerate(funcs):
            vals[k] = f.value(x2)[0]
            grads[k] = f.grad(x2)[0]
        mono = np.prod(xi ** Ap, axis=-1)
        d1 = Ap * np.prod(xi ** E, axis=-1)
        return vals @ d1, mono @ grads

    def v(self, xi):
        """Free velocity ``v(xi) = d p_0 / d xi``."""
        xi = np.asarray(xi, dtype=float)
        return np.einsum("k,...kj->...j", self._b, self._mono_d1(xi))

    # views
    def q(self, x, xi):
        """``q = p - p_0``."""
        return self.eval(x, xi, "full") - self.eval(x, xi, "free")

    def V(self, x, xi):
        """``V = p - p_m``."""
        return self.eval(x, xi, "lower")

    @property
    def alphas(self):
        return list(self._alphas)

    @property
    def picklable(self):
        return all(not isinstance(f, CallableCoefficient) for f in self.coeffs.values())

    def describe(self):
        return {
            "name": self.name, "m": self.m, "mu": self.mu, "dim": self.dim,
            "coeffs": {",".join(map(str, a)): f.describe() for a, f in self.coeffs.items()},
            "limits": {",".join(map(str, a)): b for a, b in self.limits.items()},
        }


def eval_symbol(sym, pt, part="full"):
    """Value of ``p``, ``p_m``, ``p_0`` or ``V`` at a phase point."""
    if part not in PARTS:
        raise UsageError(f"unknown part {part!r}; expected one of {PARTS}")
    return float(sym.eval(pt.x, pt.xi, part))


def hamiltonian_field(sym, pt, part="principal"):
    """``(d_xi p, -d_x p)`` for the principal part or the full symbol."""
    if part not in ("full", "principal"):
        raise UsageError("hamiltonian_field part must be 'full' or 'principal'")
    return sym.dxi(pt.x, pt.xi, part), -sym.dx(pt.x, pt.xi, part)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def make_free(dim, signs=None, mu=1.0, name="free"):
    """Constant-coefficient quadratic ``sum_j s_j xi_j^2`` (default all +1)."""
    signs = [1.0] * dim if signs is None else [float(s) for s in signs]
    if len(signs) != dim or any(s == 0 for s in signs):
        raise UsageError("signs must be nonzero, one per dimension")
    coeffs, limits = {}, {}
    for j, s in enumerate(signs):
        a = tuple(2 if i == j else 0 for i in range(dim))
        coeffs[a] = Constant(s)
        limits[a] = s
    spec = {"constructor": "free", "dim": dim, "signs": signs, "mu": mu}
    return Symbol(2, mu, dim, coeffs, limits, name=name, spec=spec)


def minkowski_inverse(dim):
    """Dual Minkowski metric ``diag(1, -1, ..., -1)`` as coefficient functions."""
    return [[Constant((1.0 if j == 0 else -1.0) if j == k else 0.0) for k in range(dim)]
            for j in range(dim)]


def _check_symmetric(g, dim):
    probes = np.array([[0.0] * dim, [0.3 + 0.1 * j for j in range(dim)],
                       [-1.7 + 0.5 * j for j in range(dim)], [2.5] * dim])
    for j in range(dim):
        for k in range(j + 1, dim):
            a, b = g[j][k], g[k][j]
            if a is b:
                continue
            if not np.allclose(a.value(probes), b.value(probes), rtol=1e-14, atol=1e-14):
                raise UsageError(f"g_inverse is not symmetric at entry ({j}, {k})")


def make_klein_gordon(g_inverse, A=None, V=None, mu=1.0, name="klein_gordon", spec=None):
    """Expand ``sum g^{jk}(xi_j - A_j)(xi_k - A_k) + V`` into coefficients.

    ``g_inverse`` is an ``n x n`` nested list of coefficient functions (or
    numbers).  The top-order limits are those of the Minkowski metric.
    """
    dim = len(g_inverse)
    g = [[as_coefficient(g_inverse[j][k]) for k in range(dim)] for j in range(dim)]
    if any(len(row) != dim for row in g_inverse):
        raise UsageError("g_inverse must be square")
    _check_symmetric(g, dim)
    A = [None] * dim if A is None else [None if a is None else as_coefficient(a) for a in A]
    A = [None if (a is None or a.is_zero()) else a for a in A]
    if len(A) != dim:
        raise UsageError("vector potential must have one component per dimension")

    coeffs = {}

    def add(alpha, f):
        if f is None or f.is_zero():
            return
        coeffs[alpha] = coeffs[alpha] + f if alpha in coeffs else f

    def e(*idx):
        a = [0] * dim
        for i in idx:
            a[i] += 1
        return tuple(a)

    for j in range(dim):
        add(e(j, j), g[j][j])
        for k in range(j + 1, dim):
            add(e(j, k), Scaled(2.0, g[j][k]) if not g[j][k].is_zero() else None)
    for j in range(dim):
        terms = [Product(g[j][k], A[k]) for k in range(dim)
                 if A[k] is not None and not g[j][k].is_zero()]
        if terms:
            add(e(j), Scaled(-2.0, Sum(terms)))
    zeroth = [Product(Product(g[j][k], A[j]), A[k]) for j in range(dim) for k in range(dim)
              if A[j] is not None and A[k] is not None and not g[j][k].is_zero()]
    if V is not None:
        zeroth.append(as_coefficient(V))
    if zeroth:
        add(e(), Sum(zeroth))
    limits = {e(0, 0): 1.0}
    for j in range(1, dim):
        limits[e(j, j)] = -1.0
    spec = spec if spec is not None else {"constructor": "klein_gordon", "dim": dim, "mu": mu}
    return Symbol(2, mu, dim, coeffs, limits, name=name, spec=spec)


def bump_metric_kg(dim=2, amplitude=0.1, width=1.0, mu=1.0):
    """Minkowski with ``g^{11} = 1 + amplitude * exp(-|x|^2/width^2)``."""
    g = minkowski_inverse(dim)
    g[0][0] = Sum([Constant(1.0), Gaussian(amplitude, width)])
    spec = {"constructor": "klein_gordon", "dim": dim, "mu": mu,
            "metric": [{"i": 0, "j": 0, "profile": "gaussian",
                        "amplitude": amplitude, "width": width}]}
    return make_klein_gordon(g, mu=mu, name="klein_gordon_bump", spec=spec)


def make_polynomial(m, dim, terms, mu=1.0, name="polynomial", spec=None):
    """Symbol from explicit terms ``{alpha: (coefficient, limit)}``."""
    coeffs, limits = {}, {}
    for alpha, (f, b) in terms.items():
        coeffs[tuple(alpha)] = as_coefficient(f)
        if sum(alpha) == m:
            limits[tuple(alpha)] = float(b)
        elif b:
            raise UsageError("nonzero limit given for a lower-order term")
    spec = spec if spec is not None else {"constructor": "polynomial", "m": m, "dim": dim}
    return Symbol(m, mu, dim, coeffs, limits, name=name, spec=spec)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def sphere_points(dim, count, rng=None):
    """Deterministic, roughly uniform unit vectors in ``R^dim``."""
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = (np.arange(count) + 0.5) * (2 * np.pi / count)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)
    if dim == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (1 + 5**0.5) * i
        r = np.sqrt(1 - z * z)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)
    rng = np.random.default_rng(0) if rng is None else rng
    v = rng.standard_normal((count, dim))
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


@dataclass(frozen=True)
class ValidationLattice:
    radii: tuple = (0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 24.0, 32.0, 64.0)
    n_x_dirs: int = 24
    n_xi: int = 48
    nondeg_cap: float = 1e6

    def x_points(self, dim):
        dirs = sphere_points(dim, self.n_x_dirs)
        pts = [np.zeros((1, dim))] if 0.0 in self.radii else []
        pts += [r * dirs for r in self.radii if r > 0]
        if not pts:
            raise UsageError("validation lattice has no x samples")
        return np.concatenate(pts)

    def xi_points(self, dim):
        return sphere_points(dim, self.n_xi)

    def describe(self):
        return {"radii": list(self.radii), "n_x_dirs": self.n_x_dirs, "n_xi": self.n_xi,
                "nondeg_cap": self.nondeg_cap}


@dataclass
class ValidationReport:
    nondeg_C: float
    nondeg_C_principal: float
    nondeg_C_free: float
    decay_constants: dict
    decay_by_alpha: dict
    C0: float
    C0_witness: dict
    gradient_check: dict
    lattice: dict

    def to_dict(self):
        return {
            "nondeg_C": self.nondeg_C,
            "nondeg_C_principal": self.nondeg_C_principal,
            "nondeg_C_free": self.nondeg_C_free,
            "decay_constants": {str(k): v for k, v in self.decay_constants.items()},
            "decay_by_alpha": self.decay_by_alpha,
            "C0": self.C0,
            "C0_witness": self.C0_witness,
            "gradient_check": self.gradient_check,
            "lattice": self.lattice,
        }


def _nondeg_ratio(grad_norm, xi_norm, m):
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = xi_norm ** (m - 1)
        r = np.maximum(scale / grad_norm, grad_norm / scale)
    return np.where(grad_norm > 0, r, np.inf)


def validate(sym, lattice=None):
    """Lattice estimates of the non-degeneracy, decay and ``C_0`` constants."""
    lattice = ValidationLattice() if lattice is None else lattice
    X = lattice.x_points(sym.dim)
    XI = lattice.xi_points(sym.dim)
    if len(X) == 0 or len(XI) == 0:
        raise UsageError("empty validation lattice")
    if np.any(np.linalg.norm(XI, axis=-1) == 0):
        raise UsageError("lattice momentum samples must exclude xi = 0")
    x = np.repeat(X, len(XI), axis=0)
    xi = np.tile(XI, (len(X), 1))
    xin = np.linalg.norm(xi, axis=-1)

    r_pm = _nondeg_ratio(np.linalg.norm(sym.dxi(x, xi, "principal"), axis=-1), xin, sym.m)
    r_p0 = _nondeg_ratio(np.linalg.norm(sym.v(xi), axis=-1), xin, sym.m)
    C_pm, C_p0 = float(np.max(r_pm)), float(np.max(r_p0))
    C = max(C_pm, C_p0)
    if not np.isfinite(C) or C > lattice.nondeg_cap:
        worst = int(np.argmax(np.maximum(r_pm, r_p0)))
        witness = {"x": x[worst].tolist(), "xi": xi[worst].tolist(),
                   "ratio": float(max(r_pm[worst], r_p0[worst]))}
        raise SymbolRejected(f"non-degeneracy constant {C} exceeds cap "
                             f"{lattice.nondeg_cap}", witness)

    jx = japanese(X)
    decay_by_alpha = {}
    decay = {0: 0.0, 1: 0.0, 2: 0.0}
    grad_err = 0.0
    fallback = []
    for alpha, f in sym.coeffs.items():
        b = sym.limits.get(alpha, 0.0)
        c0 = float(np.max(np.abs(f.value(X) - b) * jx ** sym.mu))
        c1 = float(np.max(np.max(np.abs(f.grad(X)), axis=-1) * jx ** (sym.mu + 1)))
        c2 = float(np.max(np.max(np.abs(f.hessian(X)), axis=(-1, -2)) * jx ** (sym.mu + 2)))
        key = ",".join(map(str, alpha))
        decay_by_alpha[key] = [c0, c1, c2]
        for k, c in enumerate((c0, c1, c2)):
            decay[k] = max(decay[k], c)
        if not f.analytic:
            fallback.append(key)
        else:
            fd = fd_grad(f.value, X)
            ag = f.grad(X)
            scale = np.maximum(np.abs(ag), np.max(np.abs(ag)) * 1e-3 + 1e-300)
            mask = np.max(np.abs(ag)) > 0
            if mask:
                grad_err = max(grad_err, float(np.max(np.abs(fd - ag) / scale)))

    # C0 with |d_x p_m| <= C0 |x|^(-1-mu) |xi|^m, over x != 0
    nz = np.linalg.norm(x, axis=-1) > 0
    dxp = np.linalg.norm(sym.dx(x[nz], xi[nz], "principal"), axis=-1)
    ratio = dxp * np.linalg.norm(x[nz], axis=-1) ** (1 + sym.mu) / xin[nz] ** sym.m
    k = int(np.argmax(ratio)) if ratio.size else 0
    C0 = float(ratio[k]) if ratio.size else 0.0
    witness = {"x": x[nz][k].tolist(), "xi": xi[nz][k].tolist()} if ratio.size else {}

    return ValidationReport(
        nondeg_C=C, nondeg_C_principal=C_pm, nondeg_C_free=C_p0,
        decay_constants=decay, decay_by_alpha=decay_by_alpha,
        C0=C0, C0_witness=witness,
        gradient_check={"max_rel_err": grad_err, "passed": grad_err <= 1e-6,
                        "fd_fallback": fallback},
        lattice=lattice.describe(),
    )
