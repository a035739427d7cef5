"""Finite probabilistic objects for dynamic inference.

Every element of every space is represented by its integer index. Tensors
follow a fixed axis convention:

* ``init[x]`` -- distribution of the first observation
* ``obs_kernels[k][x, yhat, x_next]`` -- observation transition after round ``k``
* ``quantity[x, y]`` -- known quantity-generation kernel
* ``family[w, x, y]`` -- parametric family of quantity kernels, with ``prior[w]``
* ``loss[x, y, yhat]`` -- per-round loss
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from dyninfer.errors import InvalidScenario

PROB_TOL = 1e-9
DRIFT_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Violation:
    tensor: str
    index: tuple
    message: str
    defect: float = 0.0

    def __str__(self):
        idx = ",".join(str(i) for i in self.index)
        where = f"{self.tensor}[{idx}]" if self.index else self.tensor
        if self.defect:
            return f"{where}: {self.message} (defect {self.defect:.3g})"
        return f"{where}: {self.message}"


@dataclass(frozen=True, eq=False)
class Scenario:
    """A finite dynamic-inference instance.

    Exactly one of ``quantity`` (known-model mode) or ``family`` + ``prior``
    (learning mode) is set. ``obs_kernels`` holds either ``horizon - 1``
    per-round kernels or a single kernel shared by every round.
    """

    n_x: int
    n_y: int
    n_yhat: int
    horizon: int
    init: np.ndarray
    obs_kernels: tuple
    loss: np.ndarray
    quantity: Optional[np.ndarray] = None
    family: Optional[np.ndarray] = None
    prior: Optional[np.ndarray] = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "init", _frozen(self.init))
        set_(self, "obs_kernels", tuple(_frozen(k) for k in self.obs_kernels))
        set_(self, "loss", _frozen(self.loss))
        if self.quantity is not None:
            set_(self, "quantity", _frozen(self.quantity))
        if self.family is not None:
            set_(self, "family", _frozen(self.family))
        if self.prior is not None:
            set_(self, "prior", _frozen(self.prior))

    @property
    def mode(self) -> str:
        return "known" if self.quantity is not None else "learning"

    @property
    def n_w(self) -> int:
        return 1 if self.family is None else self.family.shape[0]

    def kernel(self, k: int) -> np.ndarray:
        """Observation kernel governing the transition out of round ``k`` (0-based).

        Rounds past the configured kernels reuse the last one.
        """
        if not self.obs_kernels:
            raise ValueError("scenario has no observation kernel")
        return self.obs_kernels[min(k, len(self.obs_kernels) - 1)]

    def members(self) -> np.ndarray:
        """Quantity kernels as a ``[w, x, y]`` stack; a known model is a one-member family."""
        if self.quantity is not None:
            return self.quantity[None]
        return self.family

    def weights(self) -> np.ndarray:
        if self.quantity is not None:
            return np.ones(1)
        return self.prior

    def with_quantity(self, quantity) -> "Scenario":
        """Known-model copy of this scenario using ``quantity`` as the kernel."""
        return Scenario(
            self.n_x, self.n_y, self.n_yhat, self.horizon, self.init, self.obs_kernels,
            self.loss, quantity=quantity, labels=self.labels,
        )

    def with_family(self, family, prior) -> "Scenario":
        return Scenario(
            self.n_x, self.n_y, self.n_yhat, self.horizon, self.init, self.obs_kernels,
            self.loss, family=family, prior=prior, labels=self.labels,
        )

    def with_loss(self, loss) -> "Scenario":
        return Scenario(
            self.n_x, self.n_y, self.n_yhat, self.horizon, self.init, self.obs_kernels,
            loss, quantity=self.quantity, family=self.family, prior=self.prior,
            labels=self.labels,
        )


@dataclass(frozen=True)
class Dataset:
    pairs: tuple
    w: Optional[int] = None
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple((int(x), int(y)) for x, y in self.pairs))

    def __len__(self):
        return len(self.pairs)


def _check_rows(name, table, out, expect_shape):
    table = np.asarray(table, dtype=float)
    if table.shape != expect_shape:
        out.append(Violation(name, (), f"shape {table.shape}, expected {expect_shape}"))
        return
    if not np.all(np.isfinite(table)):
        for idx in zip(*np.nonzero(~np.isfinite(table))):
            out.append(Violation(name, tuple(int(i) for i in idx), "non-finite probability"))
        return
    for idx in zip(*np.nonzero(table < 0)):
        out.append(Violation(name, tuple(int(i) for i in idx), "negative probability",
                             float(-table[idx])))
    sums = table.sum(axis=-1)
    for idx in np.ndindex(sums.shape):
        defect = abs(float(sums[idx]) - 1.0)
        if defect > PROB_TOL:
            out.append(Violation(name, idx + (":",), f"row sums to {float(sums[idx]):.12g}",
                                 defect))


def validate_scenario(s: Scenario) -> list:
    """Check every structural and probabilistic invariant of ``s``.

    Returns a list of :class:`Violation`; an empty list means the scenario is valid.
    """
    out = []
    for name, size in (("spaces.x", s.n_x), ("spaces.y", s.n_y), ("spaces.yhat", s.n_yhat)):
        if int(size) < 1:
            out.append(Violation(name, (), f"size {size} < 1"))
    if int(s.horizon) < 1:
        out.append(Violation("horizon", (), f"horizon {s.horizon} < 1"))
    if out:
        return out
    X, Y, Yh, n = s.n_x, s.n_y, s.n_yhat, s.horizon

    _check_rows("init", s.init, out, (X,))

    nk = len(s.obs_kernels)
    if n > 1 and nk not in (1, n - 1):
        out.append(Violation("obs_kernels", (), f"{nk} kernels given, expected 1 or {n - 1}"))
    for k, kern in enumerate(s.obs_kernels):
        _check_rows(f"obs_kernels[{k}]", kern, out, (X, Yh, X))

    if (s.quantity is None) == (s.family is None):
        out.append(Violation("quantity", (), "exactly one of quantity or family must be given"))
    if s.quantity is not None:
        _check_rows("quantity", s.quantity, out, (X, Y))
    if s.family is not None:
        fam = np.asarray(s.family)
        if fam.ndim != 3 or fam.shape[0] < 1:
            out.append(Violation("family", (), f"shape {fam.shape}, expected (|W|>=1, {X}, {Y})"))
        else:
            _check_rows("family", fam, out, (fam.shape[0], X, Y))
            if s.prior is None:
                out.append(Violation("prior", (), "learning mode requires a prior"))
            else:
                _check_rows("prior", s.prior, out, (fam.shape[0],))

    loss = np.asarray(s.loss, dtype=float)
    if loss.shape != (X, Y, Yh):
        out.append(Violation("loss", (), f"shape {loss.shape}, expected {(X, Y, Yh)}"))
    else:
        for idx in zip(*np.nonzero(~np.isfinite(loss))):
            out.append(Violation("loss", tuple(int(i) for i in idx), "non-finite loss"))
    return out


def ensure_valid(s: Scenario, mode: Optional[str] = None) -> None:
    violations = validate_scenario(s)
    if violations:
        raise InvalidScenario(violations)
    if mode is not None and s.mode != mode:
        raise ValueError(f"scenario is in {s.mode} mode, {mode} mode required")


def renormalize(rows: np.ndarray) -> np.ndarray:
    """Rescale the last axis to sum to one where accumulation drift exceeds DRIFT_TOL."""
    sums = rows.sum(axis=-1, keepdims=True)
    drift = np.abs(sums - 1.0) > DRIFT_TOL
    if np.any(drift):
        rows = np.where(drift, rows / np.where(sums == 0, 1.0, sums), rows)
    return rows


def mixture_kernel(family: np.ndarray, belief: Sequence[float]) -> np.ndarray:
    """Belief-weighted mixture ``sum_w b[w] * family[w]`` of the quantity kernels."""
    family = np.asarray(family, dtype=float)
    b = np.asarray(belief, dtype=float)
    if b.shape != (family.shape[0],):
        raise ValueError(f"belief of length {b.size} does not match |W|={family.shape[0]}")
    mix = np.tensordot(b, family, axes=1)
    return renormalize(mix)


def sample_index(rng: np.random.Generator, probs: np.ndarray) -> int:
    """Inverse-CDF draw over the stored entry order.

    One uniform from ``rng.random()`` per draw; the first index whose cumulative
    mass exceeds the uniform is returned. Trailing zero-mass entries are never
    selected even under rounding.
    """
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    last = int(np.flatnonzero(probs > 0)[-1])
    return min(idx, last)


def sample_rows(rng: np.random.Generator, rows: np.ndarray) -> np.ndarray:
    """Vectorised inverse-CDF draw, one uniform per row of ``rows``."""
    cdf = np.cumsum(rows, axis=-1)
    u = rng.random(rows.shape[0]) * cdf[:, -1]
    idx = (u[:, None] >= cdf).sum(axis=1)
    last = rows.shape[1] - 1 - np.argmax((rows > 0)[:, ::-1], axis=1)
    return np.minimum(idx, last)


def generate_dataset(s: Scenario, w: int, m: int, seed: int) -> Dataset:
    """Draw an imitation-style training set of ``m`` pairs under parameter ``w``.

    ``X'_1 ~ init``, ``Y'_j ~ family[w, X'_j]`` and ``X'_{j+1}`` follows the
    observation kernel of round ``j`` with the true ``Y'_j`` in the estimate
    slot. Randomness is ``numpy.random.default_rng(seed)`` (PCG64), consumed as
    one uniform per draw in the order x_1, y_1, x_2, y_2, ...
    """
    ensure_valid(s, "learning")
    if not 0 <= w < s.n_w:
        raise IndexError(f"parameter index {w} outside 0..{s.n_w - 1}")
    if m < 0:
        raise ValueError("sample count must be non-negative")
    if m > 1 and s.n_y > s.n_yhat:
        raise ValueError("imitation data model feeds y into the estimate slot; needs |Y| <= |Yhat|")
    rng = np.random.default_rng(seed)
    member = s.family[w]
    pairs = []
    x = None
    for j in range(m):
        if j == 0:
            x = sample_index(rng, s.init)
        else:
            x = sample_index(rng, s.kernel(j - 1)[x, pairs[-1][1]])
        y = sample_index(rng, member[x])
        pairs.append((x, y))
    return Dataset(tuple(pairs), w=w, seed=seed)


def enumerate_datasets(s: Scenario, m: int) -> Iterator[tuple]:
    """Yield every length-``m`` dataset with its likelihood under each parameter.

    Datasets come in lexicographic order of their flattened ``(x, y)`` pairs; the
    likelihood vector has one entry per ``w`` and may be all zeros.
    """
    members = s.members()
    n_w = members.shape[0]
    if m == 0:
        yield Dataset(()), np.ones(n_w)
        return
    if m > 1 and s.n_y > s.n_yhat:
        raise ValueError("imitation data model needs |Y| <= |Yhat|")
    for pairs in itertools.product(itertools.product(range(s.n_x), range(s.n_y)), repeat=m):
        lik = np.empty(n_w)
        for w in range(n_w):
            p = s.init[pairs[0][0]]
            for j, (x, y) in enumerate(pairs):
                if j > 0:
                    px, py = pairs[j - 1]
                    p *= s.kernel(j - 1)[px, py, x]
                p *= members[w, x, y]
            lik[w] = p
        yield Dataset(pairs), lik
