"""Ground truth by exhaustive enumeration.

Nothing here calls the DP solvers. Expected losses are sums over the full
joint support of the parameter, training data, observations and quantities.
Posteriors are computed in exact rational arithmetic from the likelihood
product, so two histories share a belief key only when their posteriors are
mathematically equal.

Strategy classes and their information sets at round ``i`` (0-based):

==================  =====================================================
``markov-known``    ``x_i``
``history-known``   ``x_0 .. x_i``
``markov-offline``  posterior given the training set, ``x_i``
``history-offline`` training set, ``x_0 .. x_i``
``markov-online``   posterior given ``(x_j, y_j)_{j<i}``, ``x_i``
``history-online``  ``x_0 .. x_i``, ``y_0 .. y_{i-1}``
==================  =====================================================

Past estimates are left out of the history classes. A deterministic
strategy's past estimates are a function of the other history entries, so
including them adds no strategies, only unreachable table entries.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from dyninfer.errors import CapExceeded, ImpossibleDataset, NodeNotFound
from dyninfer.known_dp import KnownPolicy, bar_loss_table
from dyninfer.model import Dataset, Scenario, enumerate_datasets, ensure_valid, sample_rows
from dyninfer.offline import OfflinePolicy, tilde_loss_table
from dyninfer.online import OnlinePolicy

CLASSES = (
    "markov-known",
    "history-known",
    "markov-offline",
    "history-offline",
    "markov-online",
    "history-online",
)
STRATEGY_CAP = 10**7
WALK_CAP = 10**7
LOOKUP_CAP = 10**7


def _setting(cls: str) -> str:
    if cls not in CLASSES:
        raise ValueError(f"unknown strategy class {cls!r}; expected one of {', '.join(CLASSES)}")
    return cls.split("-")[1]


@dataclass(frozen=True, eq=False)
class EvaluationReport:
    mode: str  # "exact" or "monte-carlo"
    loss: float
    stderr: float = 0.0
    samples: int = 1
    seed: Optional[int] = None


class _Context:
    """Everything about the generative process a strategy class is evaluated under.

    ``kind`` is one of ``known``, ``offline-cond`` (training set or posterior
    held fixed), ``offline-uncond`` (training set drawn from the data model)
    and ``online``.
    """

    def __init__(self, s: Scenario, cls: str, d: Optional[Dataset] = None,
                 belief=None, m: Optional[int] = None):
        setting = _setting(cls)
        if setting == "known" and s.mode != "known":
            raise ValueError(f"class {cls} needs a known-model scenario")
        if setting != "known" and s.mode != "learning":
            raise ValueError(f"class {cls} needs a learning-mode scenario")
        self.s = s
        self.cls = cls
        self.members = s.members()
        self._frac_members = [[[Fraction(float(p)) for p in row] for row in mem] for mem in self.members]
        self._frac_prior = [Fraction(float(p)) for p in s.weights()]
        self._posteriors = {}
        self._tilde = {}
        self.d = d
        self.m = m
        if setting == "known":
            self.kind = "known"
        elif setting == "online":
            self.kind = "online"
        elif d is not None or belief is not None:
            self.kind = "offline-cond"
            if d is not None:
                self.fixed_key = ("data", d.pairs)
                self.fixed_belief = self.posterior_key(d.pairs)
                if self.fixed_belief is None:
                    raise ImpossibleDataset("dataset has zero probability under every parameter")
            else:
                self.fixed_belief = tuple(Fraction(float(b)) for b in belief)
                self.fixed_key = ("belief", self.fixed_belief)
        else:
            if m is None:
                raise ValueError("unconditional offline evaluation needs the training-set size m")
            self.kind = "offline-uncond"

    # -- exact posteriors -------------------------------------------------

    def posterior_key(self, pairs):
        """Exact posterior over the parameter given ``(x, y)`` pairs, or None if undefined."""
        key = tuple(sorted(pairs))
        if key not in self._posteriors:
            weights = []
            for w, pw in enumerate(self._frac_prior):
                lik = pw
                for x, y in key:
                    lik *= self._frac_members[w][x][y]
                weights.append(lik)
            z = sum(weights)
            self._posteriors[key] = None if z == 0 else tuple(wt / z for wt in weights)
        return self._posteriors[key]

    def tilde_table(self, bkey):
        if bkey not in self._tilde:
            if self.kind == "known":
                self._tilde[bkey] = bar_loss_table(self.s)
            else:
                b = np.array([float(p) for p in bkey])
                self._tilde[bkey] = tilde_loss_table(self.s.family, self.s.loss, b)
        return self._tilde[bkey]

    # -- roots of the joint distribution ------------------------------------

    def roots(self):
        """Yield ``(prob, w, data_key)`` over the parameter and the training set."""
        if self.kind in ("known", "online"):
            for w, pw in enumerate(self.s.weights()):
                if pw > 0:
                    yield float(pw), w, None
        elif self.kind == "offline-cond":
            for w, pw in enumerate(self.fixed_belief):
                if pw > 0:
                    yield float(pw), w, self.fixed_key
        else:
            for d, lik in enumerate_datasets(self.s, self.m):
                for w, pw in enumerate(self.s.prior):
                    p = float(pw) * float(lik[w])
                    if p > 0:
                        yield p, w, ("data", d.pairs)

    def data_belief(self, data_key):
        if data_key is None:
            return None
        if data_key[0] == "belief":
            return data_key[1]
        return self.posterior_key(data_key[1])

    # -- information sets ---------------------------------------------------

    def info(self, i, data_key, xs, ys):
        cls = self.cls
        if cls == "markov-known":
            return (i, xs[-1])
        if cls == "history-known":
            return (i, tuple(xs))
        if cls == "markov-offline":
            return (i, self.data_belief(data_key), xs[-1])
        if cls == "history-offline":
            return (i, data_key, tuple(xs))
        if cls == "markov-online":
            return (i, self.posterior_key(zip(xs[:-1], ys)), xs[-1])
        return (i, tuple(xs), tuple(ys))

    def _data_keys(self):
        if self.kind == "offline-cond":
            return [self.fixed_key]
        return [("data", d.pairs) for d, _ in enumerate_datasets(self.s, self.m)]

    def entry_count(self) -> Optional[int]:
        """Exact number of information sets, or None when it depends on posterior collisions."""
        X, Y, n = self.s.n_x, self.s.n_y, self.s.horizon
        cls = self.cls
        if cls == "markov-known" or (cls == "markov-offline" and self.kind == "offline-cond"):
            return n * X
        if cls == "history-known" or (cls == "history-offline" and self.kind == "offline-cond"):
            return sum(X ** (i + 1) for i in range(n))
        if cls == "history-offline":
            return (X * Y) ** self.m * sum(X ** (i + 1) for i in range(n))
        if cls == "history-online":
            return sum(X ** (i + 1) * Y ** i for i in range(n))
        return None

    def key_work(self) -> int:
        """Histories visited while listing the information sets."""
        X, Y, n = self.s.n_x, self.s.n_y, self.s.horizon
        if self.kind == "offline-uncond":
            return (X * Y) ** self.m
        if self.cls == "markov-online":
            return sum((X * Y) ** i for i in range(n))
        return 0

    def keys(self):
        s, X, Y, n = self.s, self.s.n_x, self.s.n_y, self.s.horizon
        cls = self.cls
        out = []
        if cls == "markov-known":
            out = [(i, x) for i in range(n) for x in range(X)]
        elif cls == "history-known":
            out = [(i, xs) for i in range(n) for xs in itertools.product(range(X), repeat=i + 1)]
        elif cls == "markov-offline":
            bkeys = list(dict.fromkeys(self.data_belief(dk) for dk in self._data_keys()))
            out = [(i, bk, x) for i in range(n) for bk in bkeys for x in range(X)]
        elif cls == "history-offline":
            dkeys = self._data_keys()
            out = [(i, dk, xs) for i in range(n) for dk in dkeys
                   for xs in itertools.product(range(X), repeat=i + 1)]
        elif cls == "markov-online":
            for i in range(n):
                hist = itertools.product(itertools.product(range(X), range(Y)), repeat=i)
                bkeys = dict.fromkeys(self.posterior_key(h) for h in hist)
                out.extend((i, bk, x) for bk in bkeys for x in range(X))
        else:
            for i in range(n):
                for xs in itertools.product(range(X), repeat=i + 1):
                    out.extend((i, xs, ys) for ys in itertools.product(range(Y), repeat=i))
        return out


def _strategy_count_guard(n_yhat, n_entries, cap):
    if n_yhat == 1:
        return 1
    if n_entries * math.log10(n_yhat) > math.log10(cap) + 1e-12:
        count = n_yhat ** n_entries if n_entries < 4096 else float("inf")
        raise CapExceeded("strategy count", count, cap)
    return n_yhat ** n_entries


@dataclass(frozen=True, eq=False)
class StrategyTable:
    """A deterministic strategy: one estimate per information set.

    ``keys`` lists the information sets in enumeration order, including those
    reached with probability zero; ``choices[k]`` is the estimate for ``keys[k]``.
    """

    cls: str
    keys: tuple
    choices: np.ndarray
    dataset: Optional[Dataset] = None
    belief: Optional[tuple] = None
    m: Optional[int] = None

    def __post_init__(self):
        ch = np.array(self.choices, dtype=np.int64)
        ch.setflags(write=False)
        object.__setattr__(self, "choices", ch)
        object.__setattr__(self, "index", {k: e for e, k in enumerate(self.keys)})

    def __len__(self):
        return len(self.keys)

    def act(self, key) -> int:
        return int(self.choices[self.index[key]])

    def with_choices(self, choices) -> "StrategyTable":
        return StrategyTable(self.cls, self.keys, choices, self.dataset, self.belief, self.m)


def _context_for(s, cls, d=None, belief=None, m=None) -> _Context:
    return _Context(s, cls, d=d, belief=belief, m=m)


def strategy_space(s: Scenario, cls: str, d: Optional[Dataset] = None, belief=None,
                   m: Optional[int] = None, cap: int = STRATEGY_CAP) -> StrategyTable:
    """The all-zeros strategy of a class; its ``keys`` enumerate the information sets.

    Raises :class:`CapExceeded` if the class holds more than ``cap`` strategies.
    """
    ctx = _context_for(s, cls, d, belief, m)
    exact = ctx.entry_count()
    if exact is not None:
        _strategy_count_guard(s.n_yhat, exact, cap)
    if ctx.key_work() > LOOKUP_CAP:
        raise CapExceeded("information-set enumeration", ctx.key_work(), LOOKUP_CAP)
    keys = ctx.keys()
    _strategy_count_guard(s.n_yhat, len(keys), cap)
    b = None if belief is None else tuple(float(p) for p in belief)
    return StrategyTable(cls, tuple(keys), np.zeros(len(keys), dtype=np.int64), d, b, m)


def strategy_count(s: Scenario, cls: str, d=None, belief=None, m=None) -> int:
    ctx = _context_for(s, cls, d, belief, m)
    return s.n_yhat ** len(ctx.keys())


def random_strategy(s: Scenario, cls: str, rng: np.random.Generator, d=None, belief=None,
                    m=None) -> StrategyTable:
    base = strategy_space(s, cls, d, belief, m, cap=10**300)
    return base.with_choices(rng.integers(0, s.n_yhat, size=len(base)))


def _walk(ctx: _Context, index: dict, choose, form: str):
    """Accumulate expected loss over the joint support, keyed by decision path.

    ``choose(entry)`` lists the estimates to branch on at an information set.
    The result maps each path ``((entry, yhat), ...)`` to the probability mass
    times loss collected at its last decision; a strategy's expected loss is
    the sum over the paths it follows.
    """
    s = ctx.s
    n, loss = s.horizon, s.loss
    online = ctx.kind == "online"
    acc = {}
    visited = [0]

    def rec(i, w, data_key, xs, ys, prob, path):
        visited[0] += 1
        if visited[0] > WALK_CAP:
            raise CapExceeded("joint-support walk", visited[0], WALK_CAP)
        x = xs[-1]
        member = ctx.members[w]
        e = index[ctx.info(i, data_key, xs, ys)]
        ys_support = np.flatnonzero(member[x])
        for yh in choose(e):
            p2 = path + ((e, yh),)
            if form == "loss":
                c = 0.0
                for y in ys_support:
                    c += prob * member[x, y] * loss[x, y, yh]
            else:
                if ctx.kind == "known":
                    bkey = None
                elif online:
                    bkey = ctx.posterior_key(zip(xs[:-1], ys))
                else:
                    bkey = ctx.data_belief(data_key)
                c = prob * ctx.tilde_table(bkey)[x, yh]
            acc[p2] = acc.get(p2, 0.0) + c
            if i + 1 < n:
                row = s.kernel(i)[x, yh]
                nxt = np.flatnonzero(row)
                if online:
                    for y in ys_support:
                        py = prob * member[x, y]
                        for xn in nxt:
                            rec(i + 1, w, data_key, xs + (int(xn),), ys + (int(y),), py * row[xn], p2)
                else:
                    for xn in nxt:
                        rec(i + 1, w, data_key, xs + (int(xn),), ys, prob * row[xn], p2)

    for p0, w, data_key in ctx.roots():
        for x0 in np.flatnonzero(s.init):
            rec(0, w, data_key, (int(x0),), (), p0 * s.init[x0], ())
    return acc


def _context_of_table(s, t: StrategyTable, d=None, m=None):
    d = d if d is not None else t.dataset
    m = m if m is not None else t.m
    return _context_for(s, t.cls, d=d, belief=t.belief if d is None else None, m=m)


def exact_loss(s: Scenario, t: StrategyTable, d: Optional[Dataset] = None,
               form: str = "loss", m: Optional[int] = None) -> float:
    """Expected accumulated loss of strategy ``t`` by full joint enumeration.

    ``form="loss"`` sums the raw loss over the hidden quantities;
    ``form="reduced"`` sums the quantity-free per-round loss evaluated at the
    current posterior (the known-kernel average in known mode). For offline
    classes the training set ``d`` is held fixed when given; otherwise it is
    enumerated under the data model with ``m`` samples.
    """
    ensure_valid(s)
    if form not in ("loss", "reduced"):
        raise ValueError("form must be 'loss' or 'reduced'")
    ctx = _context_of_table(s, t, d, m)
    acc = _walk(ctx, t.index, lambda e: (int(t.choices[e]),), form)
    return float(sum(acc.values()))


class _Compiled:
    """Expected loss as a polynomial in strategy-entry indicators."""

    def __init__(self, acc: dict, n_entries: int, n_yhat: int, depth: int):
        self.n_entries = n_entries
        self.n_yhat = n_yhat
        paths = list(acc)
        self.coef = np.array([acc[p] for p in paths])
        self.ent = np.full((len(paths), depth), n_entries, dtype=np.int64)
        self.yh = np.zeros((len(paths), depth), dtype=np.int64)
        for r, p in enumerate(paths):
            for j, (e, yh) in enumerate(p):
                self.ent[r, j] = e
                self.yh[r, j] = yh
        self.count = n_yhat ** n_entries

    def digits(self, start, stop):
        """Strategies ``start .. stop-1`` in lexicographic order, entry 0 most significant."""
        idx = np.arange(start, stop, dtype=np.int64)
        out = np.zeros((idx.size, self.n_entries + 1), dtype=np.int64)
        for j in range(self.n_entries - 1, -1, -1):
            out[:, j] = idx % self.n_yhat
            idx //= self.n_yhat
        return out

    def evaluate(self, digits):
        hit = np.all(digits[:, self.ent] == self.yh, axis=2)
        return hit.astype(float) @ self.coef

    def chunks(self):
        step = max(1, 2**22 // max(1, self.ent.size))
        for a in range(0, self.count, step):
            b = min(self.count, a + step)
            dg = self.digits(a, b)
            yield a, dg, self.evaluate(dg)


def _compile(s, cls, d, belief, m, form, cap) -> tuple:
    base = strategy_space(s, cls, d, belief, m, cap)
    ctx = _context_of_table(s, base, d, m)
    acc = _walk(ctx, base.index, lambda e: range(s.n_yhat), form)
    return base, _Compiled(acc, len(base), s.n_yhat, s.horizon)


def brute_force_optimum(s: Scenario, cls: str, d: Optional[Dataset] = None, belief=None,
                        m: Optional[int] = None, cap: int = STRATEGY_CAP):
    """Minimise expected loss over every deterministic strategy of class ``cls``.

    Returns ``(table, loss)``. Ties go to the first strategy in lexicographic
    order of the table entries. The returned loss is re-evaluated with
    :func:`exact_loss` on the minimiser.
    """
    ensure_valid(s)
    base, comp = _compile(s, cls, d, belief, m, "loss", cap)
    best, best_loss = None, math.inf
    for a, dg, losses in comp.chunks():
        k = int(np.argmin(losses))
        if losses[k] < best_loss:
            best_loss = float(losses[k])
            best = dg[k, :-1].copy()
    table = base.with_choices(best)
    return table, exact_loss(s, table, d=d)


def all_strategy_losses(s: Scenario, cls: str, d: Optional[Dataset] = None, belief=None,
                        m: Optional[int] = None, form: str = "loss",
                        cap: int = STRATEGY_CAP) -> np.ndarray:
    """Expected loss of every strategy of ``cls`` in enumeration order."""
    ensure_valid(s)
    _, comp = _compile(s, cls, d, belief, m, form, cap)
    return np.concatenate([losses for _, _, losses in comp.chunks()])


def strategy_from_policy(s: Scenario, p, d: Optional[Dataset] = None) -> StrategyTable:
    """Tabulate a DP policy as a strategy of the matching Markov class."""
    if isinstance(p, KnownPolicy):
        base = strategy_space(s, "markov-known", cap=10**300)
        return base.with_choices([p.psi[i][x] for i, x in base.keys])
    if isinstance(p, OfflinePolicy):
        d = d if d is not None else p.dataset
        belief = None if d is not None else p.belief
        base = strategy_space(s, "markov-offline", d=d, belief=belief, cap=10**300)
        return base.with_choices([p.psi[i][x] for i, _, x in base.keys])
    if isinstance(p, OnlinePolicy):
        base = strategy_space(s, "markov-online", cap=10**300)
        choices = []
        for i, bkey, x in base.keys:
            if bkey is None:
                choices.append(0)
                continue
            k = p.find_node(i, np.array([float(b) for b in bkey]))
            if k is None:
                raise NodeNotFound(f"exact posterior at round {i + 1} has no policy node")
            choices.append(p.psi[i][k, x])
        return base.with_choices(choices)
    raise TypeError(f"unsupported policy type {type(p).__name__}")


# -- Monte Carlo -------------------------------------------------------------


def _lookup_tables(ctx: _Context, t: StrategyTable):
    """Per-round arrays mapping an encoded observable history to an estimate.

    Encodings: ``x_i`` for Markov known/conditional-offline classes, the
    mixed-radix code of ``x_0..x_i`` for history ones, the code of
    ``(x_0..x_i, y_0..y_{i-1})`` for online classes; unconditional offline
    classes prepend the training-set code.
    """
    s = ctx.s
    X, Y, n = s.n_x, s.n_y, s.horizon
    data_keys = [None]
    if ctx.kind == "offline-cond":
        data_keys = [ctx.fixed_key]
    elif ctx.kind == "offline-uncond":
        data_keys = ctx._data_keys()
    tables = []
    for i in range(n):
        if ctx.kind == "online":
            shape = (X,) * (i + 1) + (Y,) * i
        elif t.cls.startswith("markov"):
            shape = (X,)
        else:
            shape = (X,) * (i + 1)
        size = len(data_keys) * int(np.prod(shape))
        if size > LOOKUP_CAP:
            raise CapExceeded("Monte Carlo history lookup", size, LOOKUP_CAP, round=i)
        arr = np.empty(size, dtype=np.int64)
        pos = 0
        for dk in data_keys:
            for code in itertools.product(*(range(k) for k in shape)):
                if ctx.kind == "online":
                    xs, ys = code[: i + 1], code[i + 1:]
                elif len(code) == 1 and i > 0:
                    xs, ys = (0,) * i + code, ()
                else:
                    xs, ys = code, ()
                key = ctx.info(i, dk, xs, ys)
                arr[pos] = t.choices[t.index[key]] if key in t.index else 0
                pos += 1
        tables.append(arr)
    return tables


def monte_carlo_loss(s: Scenario, t: StrategyTable, samples: int, seed: int,
                     d: Optional[Dataset] = None, m: Optional[int] = None) -> EvaluationReport:
    """Sample mean of the accumulated loss over ``samples`` simulated trajectories.

    One ``numpy.random.default_rng(seed)`` stream drives all trajectories in
    lock-step, one uniform per trajectory per draw, in the order: parameter,
    training set (unconditional offline), then per round ``x``, ``y``.
    """
    ensure_valid(s)
    if samples < 1:
        raise ValueError("samples must be >= 1")
    ctx = _context_of_table(s, t, d, m)
    tables = _lookup_tables(ctx, t)
    rng = np.random.default_rng(seed)
    N, X, Y, n = samples, s.n_x, s.n_y, s.horizon
    members = ctx.members

    if ctx.kind == "offline-cond":
        wdist = np.array([float(b) for b in ctx.fixed_belief])
    else:
        wdist = np.asarray(s.weights(), dtype=float)
    w = sample_rows(rng, np.broadcast_to(wdist, (N, wdist.size)))

    dcode = np.zeros(N, dtype=np.int64)
    if ctx.kind == "offline-uncond" and ctx.m > 0:
        xprev = yprev = None
        for j in range(ctx.m):
            if j == 0:
                xj = sample_rows(rng, np.broadcast_to(s.init, (N, X)))
            else:
                xj = sample_rows(rng, s.kernel(j - 1)[xprev, yprev])
            yj = sample_rows(rng, members[w, xj])
            dcode = (dcode * X + xj) * Y + yj
            xprev, yprev = xj, yj

    x = sample_rows(rng, np.broadcast_to(s.init, (N, X)))
    xs_code = np.zeros(N, dtype=np.int64)
    ys_code = np.zeros(N, dtype=np.int64)
    total = np.zeros(N)
    for i in range(n):
        xs_code = xs_code * X + x
        if ctx.kind == "online":
            span = X ** (i + 1) * Y ** i
            code = xs_code * Y ** i + ys_code
        elif t.cls.startswith("markov"):
            span, code = X, x
        else:
            span, code = X ** (i + 1), xs_code
        yh = tables[i][dcode * span + code]
        y = sample_rows(rng, members[w, x])
        total += s.loss[x, y, yh]
        if i + 1 < n:
            ys_code = ys_code * Y + y
            x = sample_rows(rng, s.kernel(i)[x, yh])
    mean = float(total.mean())
    stderr = float(total.std(ddof=1) / math.sqrt(N)) if N > 1 else 0.0
    return EvaluationReport("monte-carlo", mean, stderr, N, seed)


# -- irrelevant-information check --------------------------------------------


def check_blackwell(loss, f, px):
    """Best expected loss estimating ``f(X)`` from ``X`` versus from ``f(X)``.

    ``loss[y, yhat]``; ``f[x]`` gives the image of each ``x``; both minima are
    taken over every lookup table. Returns ``(lhs, rhs)``.
    """
    loss = np.asarray(loss, dtype=float)
    f = np.asarray(f, dtype=np.int64)
    px = np.asarray(px, dtype=float)
    n_y, n_yhat = loss.shape
    n_x = f.size

    g_x = np.array(list(itertools.product(range(n_yhat), repeat=n_x)), dtype=np.int64)
    lhs = float(np.min((loss[f[None, :], g_x] * px[None, :]).sum(axis=1)))

    g_y = np.array(list(itertools.product(range(n_yhat), repeat=n_y)), dtype=np.int64)
    rhs = float(np.min((loss[f[None, :], g_y[:, f]] * px[None, :]).sum(axis=1)))
    return lhs, rhs
