"""JSON file formats: scenario configs, datasets, policies and reports.

All writers emit sorted keys and ``repr`` floats so that identical inputs give
byte-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from dyninfer.known_dp import KnownPolicy
from dyninfer.model import Dataset, Scenario
from dyninfer.offline import OfflinePolicy
from dyninfer.online import BeliefIndex, BeliefTree, OnlinePolicy


class ConfigError(ValueError):
    """The document is not well-formed or lacks required structure."""


def _dump(obj, path):
    text = json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def _load_json(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def _array(doc, key, ndim=None):
    if key not in doc:
        raise ConfigError(f"missing key {key!r}")
    try:
        arr = np.array(doc[key], dtype=float)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{key!r} is not a rectangular numeric array: {exc}") from exc
    if ndim is not None and arr.ndim != ndim:
        raise ConfigError(f"{key!r} must be a {ndim}-d array, got {arr.ndim}-d")
    return arr


def scenario_from_dict(doc) -> Scenario:
    if not isinstance(doc, dict):
        raise ConfigError("scenario document must be an object")
    try:
        spaces = doc["spaces"]
        sizes = int(spaces["x"]), int(spaces["y"]), int(spaces["yhat"])
        horizon = int(doc["horizon"])
        mode = doc["mode"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"missing or malformed key: {exc}") from exc
    init = _array(doc, "init", 1)
    kern = _array(doc, "obs_kernels")
    if kern.ndim == 3:
        kernels = [kern]
    elif kern.ndim == 4:
        kernels = list(kern)
    else:
        raise ConfigError("'obs_kernels' must be one 3-d array or a list of them")
    loss = _array(doc, "loss", 3)
    labels = doc.get("labels", {})
    if mode == "known":
        return Scenario(*sizes, horizon, init, kernels, loss,
                        quantity=_array(doc, "quantity", 2), labels=labels)
    if mode == "learning":
        return Scenario(*sizes, horizon, init, kernels, loss, family=_array(doc, "family", 3),
                        prior=_array(doc, "prior", 1), labels=labels)
    raise ConfigError(f"mode must be 'known' or 'learning', got {mode!r}")


def load_scenario(path) -> Scenario:
    return scenario_from_dict(_load_json(path))


def scenario_to_dict(s: Scenario) -> dict:
    doc = {
        "spaces": {"x": s.n_x, "y": s.n_y, "yhat": s.n_yhat},
        "horizon": s.horizon,
        "mode": s.mode,
        "init": s.init.tolist(),
        "obs_kernels": [k.tolist() for k in s.obs_kernels],
        "loss": s.loss.tolist(),
    }
    if s.mode == "known":
        doc["quantity"] = s.quantity.tolist()
    else:
        doc["family"] = s.family.tolist()
        doc["prior"] = s.prior.tolist()
    if s.labels:
        doc["labels"] = s.labels
    return doc


def save_scenario(s: Scenario, path) -> None:
    _dump(scenario_to_dict(s), path)


def _canon(a) -> str:
    a = np.asarray(a, dtype=float)
    shape = "x".join(str(d) for d in a.shape)
    return shape + ":" + ",".join(format(v, ".17g") for v in a.ravel())


def scenario_hash(s: Scenario) -> str:
    """SHA-256 of the canonicalised numeric content; labels and formatting do not count."""
    parts = [f"mode={s.mode}", f"sizes={s.n_x},{s.n_y},{s.n_yhat}", f"horizon={s.horizon}",
             "init=" + _canon(s.init), "loss=" + _canon(s.loss)]
    parts += [f"obs_kernels[{k}]=" + _canon(kern) for k, kern in enumerate(s.obs_kernels)]
    if s.mode == "known":
        parts.append("quantity=" + _canon(s.quantity))
    else:
        parts += ["family=" + _canon(s.family), "prior=" + _canon(s.prior)]
    return hashlib.sha256(";".join(parts).encode()).hexdigest()


def dataset_hash(d: Dataset) -> str:
    text = ";".join(f"{x},{y}" for x, y in d.pairs)
    return hashlib.sha256(text.encode()).hexdigest()


def save_dataset(d: Dataset, path) -> None:
    _dump({"format": "dyninfer-dataset", "w": d.w, "seed": d.seed, "m": len(d),
           "pairs": [list(p) for p in d.pairs]}, path)


def load_dataset(path) -> Dataset:
    doc = _load_json(path)
    try:
        pairs = [(int(x), int(y)) for x, y in doc["pairs"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed dataset: {exc}") from exc
    return Dataset(tuple(pairs), w=doc.get("w"), seed=doc.get("seed"))


# -- policies ------------------------------------------------------------------


def _tabular_rounds(p):
    return [{"round": i + 1, "psi": p.psi[i].tolist(), "v": p.v[i].tolist(), "q": p.q[i].tolist()}
            for i in range(p.psi.shape[0])]


def policy_to_dict(s: Scenario, p, value: float) -> dict:
    doc = {
        "format": "dyninfer-policy",
        "scenario_hash": scenario_hash(s),
        "shape": {"x": s.n_x, "y": s.n_y, "yhat": s.n_yhat, "horizon": s.horizon, "w": s.n_w},
        "value": value,
    }
    if isinstance(p, KnownPolicy):
        doc["setting"] = "known"
        doc["rounds"] = _tabular_rounds(p)
    elif isinstance(p, OfflinePolicy):
        doc["setting"] = "offline"
        doc["belief"] = p.belief.tolist()
        doc["dataset_hash"] = None if p.dataset is None else dataset_hash(p.dataset)
        doc["rounds"] = _tabular_rounds(p)
    elif isinstance(p, OnlinePolicy):
        doc["setting"] = "online"
        rounds = []
        for i in range(len(p.psi)):
            nodes = [{"id": k, "belief": p.tree.beliefs[i][k].tolist(), "psi": p.psi[i][k].tolist(),
                      "v": p.v[i][k].tolist(), "q": p.q[i][k].tolist()}
                     for k in range(p.tree.beliefs[i].shape[0])]
            entry = {"round": i + 1, "nodes": nodes}
            if i < len(p.tree.transitions):
                t = p.tree.transitions[i]
                entry["transitions"] = [[int(k), int(x), int(y), int(t[k, x, y])]
                                        for k, x, y in zip(*np.nonzero(t >= 0))]
            rounds.append(entry)
        doc["rounds"] = rounds
    else:
        raise TypeError(f"unsupported policy type {type(p).__name__}")
    return doc


def save_policy(s: Scenario, p, value: float, path) -> None:
    _dump(policy_to_dict(s, p, value), path)


def _ro(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def load_policy(path, s: Scenario):
    """Read a policy file; returns ``(policy, document)``.

    Online policies need the scenario's family to rebuild the belief index.
    """
    doc = _load_json(path)
    try:
        setting = doc["setting"]
        rounds = doc["rounds"]
        if setting in ("known", "offline"):
            psi = _ro([r["psi"] for r in rounds], np.int64)
            v = _ro([r["v"] for r in rounds])
            q = _ro([r["q"] for r in rounds])
            if setting == "known":
                return KnownPolicy(psi, v, q), doc
            return OfflinePolicy(_ro(doc["belief"]), psi, v, q), doc
        if setting == "online":
            beliefs, indexes, transitions = [], [], []
            psi, v, q = [], [], []
            for i, r in enumerate(rounds):
                b = _ro([nd["belief"] for nd in r["nodes"]])
                idx = BeliefIndex(b.shape[1])
                for row in b:
                    idx.add(row)
                beliefs.append(b)
                indexes.append(idx)
                psi.append(_ro([nd["psi"] for nd in r["nodes"]], np.int64))
                v.append(_ro([nd["v"] for nd in r["nodes"]]))
                q.append(_ro([nd["q"] for nd in r["nodes"]]))
                if "transitions" in r:
                    t = np.full((b.shape[0], s.n_x, s.n_y), -1, dtype=np.int64)
                    for k, x, y, nxt in r["transitions"]:
                        t[k, x, y] = nxt
                    t.setflags(write=False)
                    transitions.append(t)
            tree = BeliefTree(tuple(beliefs), tuple(transitions), tuple(indexes))
            return OnlinePolicy(tree, s.family, tuple(psi), tuple(v), tuple(q)), doc
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError(f"malformed policy file: {exc}") from exc
    raise ConfigError(f"unknown policy setting {setting!r}")


def save_report(report, path, strategy_class: str, s_hash: str) -> None:
    _dump({
        "format": "dyninfer-report",
        "mode": report.mode,
        "loss": report.loss,
        "stderr": report.stderr,
        "samples": report.samples,
        "seed": report.seed,
        "strategy_class": strategy_class,
        "scenario_hash": s_hash,
    }, path)
