"""Composite convex test problems with a query-metered function oracle.

A problem is F(x) = f(x) + psi(x) where f is L-smooth and convex and only
function values of f are available to solvers (each call is metered), while
psi is a simple regularizer (zero, box indicator, scaled squared norm, or
squared norm plus box) handled in closed form by proximal steps.  Total
strong convexity mu = mu_f + mu_psi must be positive.

Exact gradients, where a problem carries them, are reserved for reference
solutions and instrumentation; they never touch the query meter.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "OracleError",
    "PsiSpec",
    "QuadraticFunction",
    "LogisticLoss",
    "LogisticDataset",
    "OracleProblem",
    "synthesize_dataset",
    "save_dataset_csv",
    "load_dataset_csv",
    "make_quadratic_problem",
    "make_logistic_problem",
    "solve_reference",
]


class OracleError(RuntimeError):
    """The function oracle returned a non-finite value."""


def _as_bound(value, d: int) -> np.ndarray | None:
    if value is None:
        return None
    arr = np.broadcast_to(np.asarray(value, dtype=float), (d,)).copy()
    return arr


@dataclass(frozen=True, eq=False)
class PsiSpec:
    """Simple part psi(x) = (mu_psi/2)||x||^2 plus an optional box indicator.

    The four supported regularizers are the cases mu_psi = 0 / > 0 crossed
    with box absent / present.  lo and hi may be scalars or vectors; they are
    broadcast against the iterate when used.
    """

    mu_psi: float = 0.0
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        if self.mu_psi < 0:
            raise ValueError(f"mu_psi must be >= 0, got {self.mu_psi}")
        if (self.lo is None) != (self.hi is None):
            raise ValueError("box bounds must be given together")
        if self.lo is not None:
            lo = np.asarray(self.lo, dtype=float)
            hi = np.asarray(self.hi, dtype=float)
            if np.any(lo > hi):
                raise ValueError("box requires lo <= hi componentwise")
            object.__setattr__(self, "lo", lo)
            object.__setattr__(self, "hi", hi)

    # -- constructors -----------------------------------------------------
    @staticmethod
    def zero() -> "PsiSpec":
        return PsiSpec()

    @staticmethod
    def box(lo, hi) -> "PsiSpec":
        return PsiSpec(0.0, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))

    @staticmethod
    def l2(mu_psi: float) -> "PsiSpec":
        if mu_psi <= 0:
            raise ValueError("l2 variant requires mu_psi > 0")
        return PsiSpec(mu_psi)

    @staticmethod
    def l2_box(mu_psi: float, lo, hi) -> "PsiSpec":
        if mu_psi <= 0:
            raise ValueError("l2_box variant requires mu_psi > 0")
        return PsiSpec(mu_psi, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))

    # -- queries -----------------------------------------------------------
    @property
    def has_box(self) -> bool:
        return self.lo is not None

    @property
    def kind(self) -> str:
        if self.mu_psi > 0:
            return "l2_box" if self.has_box else "l2"
        return "box" if self.has_box else "zero"

    def value(self, x: np.ndarray) -> float:
        """psi(x); +inf outside the box."""
        v = 0.5 * self.mu_psi * float(x @ x) if self.mu_psi > 0 else 0.0
        if self.has_box and (np.any(x < self.lo) or np.any(x > self.hi)):
            return float("inf")
        return v

    def feasible(self, x: np.ndarray) -> bool:
        return not self.has_box or bool(np.all(x >= self.lo) and np.all(x <= self.hi))


@dataclass
class QuadraticFunction:
    """f(x) = 1/2 (x - c)' H (x - c) for symmetric PSD H."""

    H: np.ndarray
    c: np.ndarray

    def __call__(self, x: np.ndarray) -> float:
        r = x - self.c
        return 0.5 * float(r @ (self.H @ r))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.H @ (x - self.c)

    def batch_values(self, X: np.ndarray) -> np.ndarray:
        R = X - self.c
        return 0.5 * np.einsum("ij,ij->i", R, R @ self.H.T)


@dataclass
class LogisticLoss:
    """f(x) = (1/n) sum_i log(1 + exp(-b_i a_i' x)) for labels b_i in {-1, +1}."""

    A: np.ndarray
    b: np.ndarray

    @staticmethod
    def _softplus(z: np.ndarray) -> np.ndarray:
        # log(1 + exp(z)) without overflow for large |z|
        return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))

    def __call__(self, x: np.ndarray) -> float:
        z = -self.b * (self.A @ x)
        return float(np.mean(self._softplus(z)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        z = -self.b * (self.A @ x)
        # sigmoid(z) evaluated stably on both tails
        s = np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))),
                     np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))
        return -(self.A.T @ (self.b * s)) / self.b.size

    def batch_values(self, X: np.ndarray) -> np.ndarray:
        Z = -(X @ self.A.T) * self.b
        return np.mean(self._softplus(Z), axis=1)


@dataclass
class LogisticDataset:
    """Feature matrix A (n rows of dimension d) and labels b in {-1, +1}^n."""

    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.A.ndim != 2:
            raise ValueError("A must be 2-D")
        if self.b.shape != (self.A.shape[0],):
            raise ValueError("labels must match the number of rows")
        if not np.all(np.abs(self.b) == 1.0):
            raise ValueError("labels must be +1 or -1")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]


@dataclass
class OracleProblem:
    """A composite problem whose smooth part is only reachable through eval_f.

    Every eval_f call increments `queries` by exactly one; that meter is the
    unit in which solver cost is reported.  Instrumentation goes through
    f_exact / F_exact which leave the meter untouched.
    """

    dimension: int
    smooth_part: "callable"
    psi: PsiSpec
    L: float
    mu_f: float = 0.0
    reference_gradient: "callable | None" = None
    queries: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.L <= 0:
            raise ValueError("L must be positive")
        if self.mu_f < 0:
            raise ValueError("mu_f must be >= 0")
        if self.L < self.mu_f:
            raise ValueError(f"need L >= mu_f, got L={self.L} < mu_f={self.mu_f}")
        if self.mu <= 0:
            raise ValueError("mu_f + mu_psi must be positive")

    @property
    def mu_psi(self) -> float:
        return self.psi.mu_psi

    @property
    def mu(self) -> float:
        return self.mu_f + self.psi.mu_psi

    # -- metered oracle ----------------------------------------------------
    def eval_f(self, x: np.ndarray) -> float:
        """Metered smooth-part value; the only road to f for solvers."""
        self.queries += 1
        return float(self.smooth_part(x))

    def eval_F(self, x: np.ndarray) -> float:
        """Metered composite value f(x) + psi(x) (one meter tick, via eval_f)."""
        return self.eval_f(x) + self.psi.value(x)

    # -- meterless instrumentation ------------------------------------------
    def f_exact(self, x: np.ndarray) -> float:
        return float(self.smooth_part(x))

    def F_exact(self, x: np.ndarray) -> float:
        return float(self.smooth_part(x)) + self.psi.value(x)

    def clone(self) -> "OracleProblem":
        """Fresh meter, shared (immutable) problem data."""
        return dataclasses.replace(self, queries=0)


# ---------------------------------------------------------------------------
# dataset synthesis and CSV round trip
# ---------------------------------------------------------------------------

def synthesize_dataset(d: int, n: int, seed: int) -> LogisticDataset:
    """Build a deterministic synthetic classification dataset.

    Rows are standard normal draws scaled to unit norm; labels follow a fixed
    random ground-truth direction through b_i = sign(a_i' xbar + 0.1 z_i)
    with standard normal z_i, and exact zeros resolve to +1.
    """
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    xbar = rng.standard_normal(d)
    raw = A @ xbar + 0.1 * rng.standard_normal(n)
    b = np.where(raw >= 0, 1.0, -1.0)
    return LogisticDataset(A, b)


def save_dataset_csv(dataset: LogisticDataset, path) -> None:
    """Write `d,n` on the first line, then one row per sample: d features, label."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([dataset.d, dataset.n])
        for row, label in zip(dataset.A, dataset.b):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])


def load_dataset_csv(path) -> LogisticDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d, n = int(header[0]), int(header[1])
        rows = list(reader)
    if len(rows) != n:
        raise ValueError(f"expected {n} data rows, found {len(rows)}")
    A = np.empty((n, d))
    b = np.empty(n)
    for i, row in enumerate(rows):
        if len(row) != d + 1:
            raise ValueError(f"row {i} has {len(row)} fields, expected {d + 1}")
        A[i] = [float(v) for v in row[:d]]
        b[i] = float(row[d])
    return LogisticDataset(A, b)


# ---------------------------------------------------------------------------
# problem factories
# ---------------------------------------------------------------------------

def make_quadratic_problem(H: np.ndarray, c: np.ndarray, psi: PsiSpec) -> OracleProblem:
    """Quadratic smooth part with L, mu_f taken from the spectrum of H."""
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    evals = np.linalg.eigvalsh(H)
    fn = QuadraticFunction(H, c)
    return OracleProblem(
        dimension=c.size,
        smooth_part=fn,
        psi=psi,
        L=float(evals[-1]),
        mu_f=float(max(evals[0], 0.0)),
        reference_gradient=fn.gradient,
    )


def make_logistic_problem(dataset: LogisticDataset, mu: float, box=None) -> OracleProblem:
    """Regularized logistic regression, optionally box constrained.

    The smooth part is the plain logistic loss with L = lambda_max(A'A)/(4n);
    the regularizer (mu/2)||x||^2 and the box both live in psi, so mu_f = 0
    and the strong convexity is carried entirely by the proximal step.
    box is a (lo, hi) pair (scalars or vectors) or None.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    loss = LogisticLoss(dataset.A, dataset.b)
    L = float(np.linalg.eigvalsh(dataset.A.T @ dataset.A)[-1]) / (4.0 * dataset.n)
    if box is None:
        psi = PsiSpec.l2(mu)
    else:
        lo, hi = box
        psi = PsiSpec.l2_box(mu, _as_bound(lo, dataset.d), _as_bound(hi, dataset.d))
    return OracleProblem(
        dimension=dataset.d,
        smooth_part=loss,
        psi=psi,
        L=L,
        mu_f=0.0,
        reference_gradient=loss.gradient,
    )


# ---------------------------------------------------------------------------
# reference solutions
# ---------------------------------------------------------------------------

def solve_reference(problem: OracleProblem, tol: float = 1e-12,
                    x0: np.ndarray | None = None, max_iters: int = 200_000):
    """High-accuracy minimizer via accelerated proximal gradient steps.

    Uses the problem's exact gradient (required) and never touches the query
    meter.  Stops when ||x_{k+1} - x_k|| <= tol * max(1, ||x_k||).  Returns
    (x_star, F_star).
    """
    from .prox import prox, project_feasible  # local import avoids a cycle

    if problem.reference_gradient is None:
        raise ValueError("solve_reference needs a problem with an exact gradient")
    grad = problem.reference_gradient
    psi = problem.psi
    step = 1.0 / problem.L

    x = project_feasible(np.zeros(problem.dimension) if x0 is None
                         else np.asarray(x0, dtype=float), psi)
    y = x.copy()
    t = 1.0
    for _ in range(max_iters):
        x_next = prox(y - step * grad(y), step, psi)
        # gradient-based adaptive restart keeps the momentum honest
        if float((y - x_next) @ (x_next - x)) > 0:
            t = 1.0
            y = x.copy()
            x_next = prox(y - step * grad(y), step, psi)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = x_next + ((t - 1.0) / t_next) * (x_next - x)
        delta = float(np.linalg.norm(x_next - x))
        x, t = x_next, t_next
        if delta <= tol * max(1.0, float(np.linalg.norm(x))):
            break
    else:
        raise RuntimeError("reference solve did not converge within max_iters")
    return x, problem.F_exact(x)
