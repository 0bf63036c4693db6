"""Scenario runner: synthetic data, end-to-end protocol runs with optional
tampering, and aggregation of run reports."""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .circuits import (
    CostCircuitParams,
    WeightCircuitParams,
    count_cost_constraints,
    count_weight_constraints,
    weight_from_inverse,
)
from .dpnoise import NoiseDraw, PrivacyParams, build_noise_table
from .fieldcodec import ScaledMatrix
from .ledger import Contract, ContractError, GenericParams, fedavg
from .linreg import BoundSet, Dataset, TrainingError, TrainedModel, default_bounds, normalize, train
from .merklehash import HashAlg
from .pipeline import (
    ClientState,
    EncodedData,
    client_cost,
    client_from_model,
    cost_witness,
    decoded_weight,
    perturb,
    prepare_client,
    weight_witness,
)

DEPLOYER = "initclient"
NOISE_SIGMA = 0.5

# attack kind -> (proof that must fail, check it must fail on)
ATTACKS = {
    "flip-data": ("weight", "merkle_train"),
    "fake-weight": ("weight", "noisy_weight"),
    "wrong-noise": ("weight", "noisy_weight"),
    "skip-noise": ("weight", "noisy_weight"),
    "bad-inverse": ("weight", "inverse_residual"),
    "forged-cost": ("cost", "cost"),
    "swapped-test-set": ("cost", "merkle_test"),
}
BAD_INVERSE_VARIANTS = ("perturbed", "singular")


class ScenarioError(ValueError):
    """Fatal configuration problem."""


@dataclass(frozen=True)
class Attack:
    client: int
    kind: str
    variant: Optional[str] = None


@dataclass(frozen=True)
class Scenario:
    k: int = 4
    n: int = 100
    n_test: Optional[int] = None
    d: int = 5
    d_L: int = 1000
    epsilon: float = 1.0
    clients: int = 3
    admission_fee: int = 10
    bounds: dict = field(default_factory=dict)
    hash_alg: str = "poseidon_lite"
    seed: int = 0
    dataset_path: Optional[str] = None
    attacks: tuple = ()
    eps_inverse: float = 1e-3

    def __post_init__(self):
        if self.n_test is None:
            object.__setattr__(self, "n_test", math.ceil(0.1 * self.n))
        atk = tuple(a if isinstance(a, Attack) else Attack(**a) for a in self.attacks)
        object.__setattr__(self, "attacks", atk)
        self.validate()

    def validate(self) -> None:
        if self.k < 1:
            raise ScenarioError("k must be at least 1")
        if self.n < self.k + 2:
            raise ScenarioError(f"n = {self.n} too small for k = {self.k}; need n >= k + 2")
        if self.n_test < 2:
            raise ScenarioError("n_test must be at least 2")
        if self.clients < 1:
            raise ScenarioError("clients must be at least 1")
        if self.d < 1 or self.d_L < 2 or self.epsilon <= 0:
            raise ScenarioError("need d >= 1, d_L >= 2 and epsilon > 0")
        if self.admission_fee < 0:
            raise ScenarioError("admission_fee must be non-negative")
        try:
            HashAlg.parse(self.hash_alg)
        except ValueError as e:
            raise ScenarioError(str(e)) from None
        unknown = set(self.bounds) - set(BoundSet.__dataclass_fields__)
        if unknown:
            raise ScenarioError(f"unknown bound override(s): {sorted(unknown)}")
        for a in self.attacks:
            if a.kind not in ATTACKS:
                raise ScenarioError(f"unknown attack kind {a.kind!r}")
            if not 0 <= a.client < self.clients:
                raise ScenarioError(f"attack targets client {a.client}, only {self.clients} exist")
            if a.kind == "bad-inverse" and a.variant not in (None, *BAD_INVERSE_VARIANTS):
                raise ScenarioError(f"unknown bad-inverse variant {a.variant!r}")
            if a.variant == "singular" and self.k < 2:
                raise ScenarioError("a singular design needs k >= 2 to duplicate a column")
        if len({a.client for a in self.attacks}) != len(self.attacks):
            raise ScenarioError("at most one attack per client")

    @property
    def alg(self) -> HashAlg:
        return HashAlg.parse(self.hash_alg)

    def to_json(self) -> dict:
        out = asdict(self)
        out["attacks"] = [{k: v for k, v in asdict(a).items() if v is not None} for a in self.attacks]
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Scenario":
        if not isinstance(obj, dict):
            raise ScenarioError("scenario must be a JSON object")
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ScenarioError(f"unknown scenario field(s): {sorted(unknown)}")
        try:
            return cls(**obj)
        except TypeError as e:
            raise ScenarioError(str(e)) from None

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            obj = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ScenarioError(f"cannot read scenario {path}: {e}") from None
        return cls.from_json(obj)


# -- data -----------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticTask:
    slopes: np.ndarray
    intercept: float
    clients: list  # raw Dataset per client
    test: Dataset


def _draw(rng, slopes, intercept, rows: int) -> Dataset:
    X = rng.normal(size=(rows, len(slopes)))
    y = intercept + X @ slopes + NOISE_SIGMA * rng.normal(size=rows)
    return Dataset(X, y)


def synthesize(k: int, n: int, clients: int, seed: int, n_test: Optional[int] = None) -> SyntheticTask:
    """Gaussian features with one planted linear model shared by every client."""
    rng = np.random.default_rng(seed)
    slopes = rng.normal(size=k)
    intercept = float(rng.normal())
    parts = [_draw(rng, slopes, intercept, n) for _ in range(clients)]
    test = _draw(rng, slopes, intercept, n_test or math.ceil(0.1 * n))
    return SyntheticTask(slopes, intercept, parts, test)


def write_csv(ds: Dataset, path) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow([f"x{j + 1}" for j in range(ds.k)] + ["y"])
        for row, y in zip(ds.features.tolist(), ds.targets.tolist()):
            wr.writerow([repr(v) for v in row] + [repr(y)])


def read_csv(path) -> Dataset:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0][-1] != "y":
        raise ScenarioError(f"{path}: expected header x1,...,xk,y")
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ScenarioError(f"{path}: no data rows")
    return Dataset(data[:, :-1], data[:, -1])


def gen_data(k: int, n: int, clients: int, seed: int, out, n_test: Optional[int] = None) -> list[Path]:
    """Write ``client_<i>.csv`` per client plus ``test.csv``; returns the paths."""
    if k < 1 or n < k + 2 or clients < 1:
        raise ScenarioError("gen_data needs k >= 1, n >= k + 2 and clients >= 1")
    task = synthesize(k, n, clients, seed, n_test)
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, ds in enumerate(task.clients):
            paths.append(out / f"client_{i}.csv")
            write_csv(ds, paths[-1])
        paths.append(out / "test.csv")
        write_csv(task.test, paths[-1])
    except OSError as e:
        raise ScenarioError(f"cannot write data to {out}: {e}") from None
    return paths


def _load_task(sc: Scenario) -> tuple[list, Dataset, Optional[SyntheticTask]]:
    if sc.dataset_path is None:
        task = synthesize(sc.k, sc.n, sc.clients, sc.seed, sc.n_test)
        return task.clients, task.test, task
    root = Path(sc.dataset_path)
    try:
        parts = [read_csv(root / f"client_{i}.csv") for i in range(sc.clients)]
        test = read_csv(root / "test.csv")
    except OSError as e:
        raise ScenarioError(f"cannot read dataset: {e}") from None
    for ds in parts:
        if ds.k != sc.k or ds.n != sc.n:
            raise ScenarioError(f"client file has shape {ds.n}x{ds.k}, scenario says {sc.n}x{sc.k}")
    if test.k != sc.k or test.n != sc.n_test:
        raise ScenarioError(f"test file has shape {test.n}x{test.k}, scenario says {sc.n_test}x{sc.k}")
    return parts, test, None


# -- tampering ------------------------------------------------------------------


def _pinv_client(raw: Dataset, d: int, alg: HashAlg) -> ClientState:
    """Training on a rank-deficient design: the attacker falls back to a pseudo-inverse."""
    data = EncodedData.from_dataset(normalize(raw), d)
    A = data.decoded().design()
    G = A.T @ A
    Z = np.linalg.pinv(G)
    resid = G @ Z - np.eye(len(G))
    model = TrainedModel(w=Z @ A.T @ data.decoded().targets, Z=Z, residual=resid,
                         inverse_residual=float(np.abs(resid).max() * len(G)))
    return client_from_model(data, model, d, alg)


def _train_client(raw: Dataset, sc: Scenario, attack: Optional[Attack]) -> ClientState:
    d, alg = sc.d, sc.alg
    kind = attack.kind if attack else None
    if kind == "bad-inverse" and attack.variant == "singular":
        f = raw.features.copy()
        f[:, 1] = f[:, 0]
        return _pinv_client(Dataset(f, raw.targets), d, alg)
    client = prepare_client(raw, d, alg)
    if kind == "bad-inverse":
        Z = client.Z.to_array() * 1.01
        client.Z = ScaledMatrix.from_array(Z, d)
        client.w = weight_from_inverse(client.Z, client.data.features, client.data.targets)
    elif kind == "flip-data":
        # commit honestly, then train and prove on data shifted by one unit
        flipped = client.data.with_value(0, 0, 1)
        model = train(flipped.decoded())
        honest_root = client.commitment
        client = client_from_model(flipped, model, d, alg)
        client.commitment = honest_root
    return client


def _tampered_upload(client: ClientState, kind: Optional[str], table) -> tuple:
    """Return (w_noisy to submit, draws used as witness hints)."""
    if kind == "fake-weight":
        vals = client.w_noisy.ints()
        vals[0] += 10 ** (client.w.scale - 1)
        return ScaledMatrix.from_ints(client.w.rows, client.w.cols, vals, client.w.scale), client.draws
    if kind == "skip-noise":
        return client.w, client.draws
    if kind == "wrong-noise":
        d_L = table.params.d_L
        draws, vals = [], []
        for wj, dr in zip(client.w.ints(), client.draws):
            p = d_L // 2 if dr.p != d_L // 2 else dr.p % (d_L - 1) + 1
            q = table.entries[p - 1]
            draws.append(NoiseDraw(p=p, h=dr.h, q=q))
            vals.append(wj + q.to_int())
        return ScaledMatrix.from_ints(client.w.rows, client.w.cols, vals, client.w.scale), draws
    return client.w_noisy, client.draws


def _verdict_json(res=None, error: Optional[str] = None) -> dict:
    if res is None:
        return {"ok": False, "check": None, "label": None, "error": error}
    v = res.verdict
    return {
        "ok": res.ok,
        "check": None if v is None else v.check,
        "label": None if v is None else v.label,
        "error": res.error,
    }


def _decode(m: Optional[ScaledMatrix]) -> Optional[list]:
    return None if m is None else [float(x) for x in decoded_weight(m)]


# -- run ------------------------------------------------------------------------


def run(sc: Scenario) -> dict:
    """Execute the full protocol once and return the report dictionary."""
    timings: dict = {}

    def tick(phase, t0):
        timings[phase] = timings.get(phase, 0.0) + time.perf_counter() - t0

    alg, d = sc.alg, sc.d
    raws, test_raw, task = _load_task(sc)
    attacks = {a.client: a for a in sc.attacks}

    t0 = time.perf_counter()
    test = EncodedData.from_dataset(normalize(test_raw), d)
    table = build_noise_table(PrivacyParams.default(sc.epsilon, sc.d_L, d))
    bounds = default_bounds(sc.k, sc.n, d, sc.eps_inverse).with_overrides(**sc.bounds)
    generic = GenericParams(
        k=sc.k, n=sc.n, n_test=sc.n_test, d=d, d_L=sc.d_L, admission_fee=sc.admission_fee,
        rt_test=test.commit(alg).root, table=tuple(table.ints()), bounds=bounds, hash_alg=alg,
    )
    contract = Contract(generic, DEPLOYER)
    tick("deploy", t0)

    addrs = [f"client_{i}" for i in range(sc.clients)]
    states: list = [None] * sc.clients
    rows = [{"address": a, "attack": None, "expected": None, "error": None} for a in addrs]
    for i, a in attacks.items():
        proof, check = ATTACKS[a.kind]
        rows[i]["attack"] = {k: v for k, v in asdict(a).items() if v is not None and k != "client"}
        rows[i]["expected"] = {"proof": proof, "check": check}

    # steps 1-2: join and train
    for i, raw in enumerate(raws):
        t0 = time.perf_counter()
        try:
            states[i] = _train_client(raw, sc, attacks.get(i))
        except (TrainingError, ValueError) as e:
            rows[i]["error"] = f"training failed: {e}"
        tick("train", t0)
        if states[i] is not None:
            contract.register_client(addrs[i], states[i].commitment.root, sc.admission_fee)

    # steps 3-6: perturb, prove and submit the noisy weight; the ledger aggregates
    wp = generic.weight_params()
    for i, st in enumerate(states):
        if st is None:
            rows[i]["weight"] = _verdict_json(error=rows[i]["error"])
            continue
        kind = attacks[i].kind if i in attacks else None
        rec = contract.state.clients[addrs[i]]
        t0 = time.perf_counter()
        perturb(st, rec.hash_bc, table, alg)
        w_sub, draws = _tampered_upload(st, kind, table)
        wit = weight_witness(st, wp, table, rec.hash_bc, bounds, w_noisy=w_sub, draws=draws)
        tick("witness_weight", t0)
        t0 = time.perf_counter()
        res = contract.upload_beta(addrs[i], w_sub, wit)
        tick("verify_weight", t0)
        rows[i]["weight"] = _verdict_json(res)

    # steps 7-8: cost on the shared test set
    cp = generic.cost_params()
    for i, st in enumerate(states):
        if st is None:
            rows[i]["cost"] = _verdict_json(error=rows[i]["error"])
            continue
        kind = attacks[i].kind if i in attacks else None
        t0 = time.perf_counter()
        tset = test
        if kind == "swapped-test-set":
            rng = np.random.default_rng([sc.seed, i])
            other = _draw(rng, np.ones(sc.k), 0.0, sc.n_test)
            tset = EncodedData.from_dataset(normalize(other), d)
        c = client_cost(st, tset)
        wit = cost_witness(st, cp, tset, c, bounds.eps_w, generic.rt_test)
        if kind == "forged-cost":
            c -= 1
        tick("witness_cost", t0)
        t0 = time.perf_counter()
        try:
            rows[i]["cost"] = _verdict_json(contract.upload_cost(addrs[i], c, wit))
        except ContractError as e:
            rows[i]["cost"] = _verdict_json(error=str(e))
        tick("verify_cost", t0)

    # steps 9-10: incentives
    t0 = time.perf_counter()
    try:
        contract.incentivize(DEPLOYER)
        incentive_error = None
    except ContractError as e:
        incentive_error = str(e)
    tick("incentivize", t0)

    for i, row in enumerate(rows):
        exp = row["expected"]
        if exp is not None:
            got = row[exp["proof"]]
            row["detected"] = (not got["ok"]) and got["check"] == exp["check"]

    st = contract.state
    valid = [states[i] for i in range(sc.clients)
             if states[i] is not None and st.clients[addrs[i]].betaproof_valid]
    deviation = None
    if valid and st.global_w is not None:
        clean = fedavg([s.w for s in valid])
        diff = [a - b for a, b in zip(st.global_w.ints(), clean.ints())]
        deviation = {
            "noise_free_global_w": _decode(clean),
            "difference": [v / 10 ** d for v in diff],
            "l2": math.sqrt(sum(v * v for v in diff)) / 10 ** d,
        }

    return {
        "scenario": sc.to_json(),
        "clients": rows,
        "global_w": _decode(st.global_w),
        "local_w": [_decode(s.w) if s is not None else None for s in states],
        "planted": None if task is None else {
            "slopes": task.slopes.tolist(), "intercept": task.intercept,
        },
        "costs": [{"address": a, "cost": c / 10 ** (2 * d)} for a, c in st.cost_list],
        "incentives": {
            "amounts": None if st.incentives is None else list(st.incentives),
            "payouts": dict(sorted(st.payouts.items())),
            "total": None if st.incentives is None else sum(st.incentives),
            "error": incentive_error,
        },
        "constraints": {
            "hash_alg": alg.label,
            "pi_w": contract.weight_cs.num_constraints,
            "pi_c": contract.cost_cs.num_constraints,
            "pi_w_sections": contract.weight_cs.section_counts(),
            "pi_c_sections": contract.cost_cs.section_counts(),
        },
        "values": {"pi_w": (sc.k + 1) * sc.n, "pi_c": (sc.k + 1) * (sc.n + sc.n_test)},
        "aggregation": deviation,
        "ledger": {"head": str(contract.chain.head.hash), "transactions": contract.log,
                   "state": st.to_json()},
        "timings": timings,
    }


def strip_timings(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "timings"}


def dumps(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True)


# -- circuit-only counts and report aggregation ---------------------------------


def circuit_report(k: int, n: int, n_test: Optional[int] = None, d: int = 5, d_L: int = 1000,
                   hash_alg: str = "poseidon_lite") -> dict:
    """Constraint counts for one size without running the protocol."""
    n_test = n_test or math.ceil(0.1 * n)
    alg = HashAlg.parse(hash_alg)
    t0 = time.perf_counter()
    pw = count_weight_constraints(WeightCircuitParams(k, n, d, d_L, alg))
    t1 = time.perf_counter()
    pc = count_cost_constraints(CostCircuitParams(k, n, n_test, d, alg))
    t2 = time.perf_counter()
    return {
        "scenario": {"k": k, "n": n, "n_test": n_test, "d": d, "d_L": d_L, "hash_alg": alg.label},
        "constraints": {"hash_alg": alg.label, "pi_w": pw, "pi_c": pc},
        "values": {"pi_w": (k + 1) * n, "pi_c": (k + 1) * (n + n_test)},
        "timings": {"count_weight": t1 - t0, "count_cost": t2 - t1},
    }


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> dict:
    fit = stats.linregress(np.asarray(xs, float), np.asarray(ys, float))
    return {"slope": float(fit.slope), "intercept": float(fit.intercept),
            "r2": float(fit.rvalue ** 2), "points": len(xs)}


def _row(rep: dict) -> dict:
    try:
        sc, cons, vals = rep["scenario"], rep["constraints"], rep["values"]
        return {
            "hash_alg": cons["hash_alg"], "k": sc["k"], "n": sc["n"], "n_test": sc["n_test"],
            "values_w": vals["pi_w"], "values_c": vals["pi_c"],
            "pi_w": cons["pi_w"], "pi_c": cons["pi_c"], "timings": rep.get("timings", {}),
        }
    except (KeyError, TypeError) as e:
        raise ScenarioError(f"malformed report: missing {e}") from None


def summarize(reports: Sequence[dict]) -> dict:
    """Per-algorithm linear fits of constraint count against data size.

    A single report is returned unchanged.
    """
    if not reports:
        raise ScenarioError("need at least one report")
    if len(reports) == 1:
        _row(reports[0])
        return reports[0]
    rows = sorted((_row(r) for r in reports), key=lambda r: (r["hash_alg"], r["k"], r["n"]))
    fits = {}
    for alg in sorted({r["hash_alg"] for r in rows}):
        sub = [r for r in rows if r["hash_alg"] == alg]
        if len({r["values_w"] for r in sub}) < 2:
            continue
        fits[alg] = {
            "pi_w": linear_fit([r["values_w"] for r in sub], [r["pi_w"] for r in sub]),
            "pi_c": linear_fit([r["values_c"] for r in sub], [r["pi_c"] for r in sub]),
        }
    ratios = []
    by_size: dict = {}
    for r in rows:
        by_size.setdefault((r["k"], r["n"], r["n_test"]), {})[r["hash_alg"]] = r
    for (k, n, nt), algs in sorted(by_size.items()):
        if "mimc7" in algs and "poseidon_lite" in algs:
            m, p = algs["mimc7"], algs["poseidon_lite"]
            ratios.append({"k": k, "n": n, "n_test": nt,
                           "pi_w": m["pi_w"] / p["pi_w"], "pi_c": m["pi_c"] / p["pi_c"]})
    return {"runs": rows, "fits": fits, "hash_ratio": ratios}


def load_reports(paths: Sequence) -> list[dict]:
    out = []
    for p in paths:
        try:
            out.append(json.loads(Path(p).read_text()))
        except (OSError, json.JSONDecodeError) as e:
            raise ScenarioError(f"cannot read report {p}: {e}") from None
    return out


def report(paths: Sequence) -> dict:
    return summarize(load_reports(paths))
