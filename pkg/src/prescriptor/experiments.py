"""Synthetic experiment drivers behind the CLI subcommands.

Every random quantity is drawn from a stream keyed by (master seed, purpose,
sample size, replication, ...), so results do not depend on how tasks are
scheduled across threads.  Rows are always emitted in task order.
"""

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import datagen as dg
from . import erm
from ._rng import derive_seed
from .metrics import coefficient_of_prescriptiveness, perfect_foresight_risk, row_costs
from .problems import (CapacitatedNewsvendorProblem, NewsvendorProblem, PortfolioProblem,
                       ShipmentProblem, default_capacity)
from .solve import METHODS, full_info_oracle, make_prescription, prescribe

INSTANCES = ("portfolio", "shipment", "cap-newsvendor", "newsvendor")

# per-instance Monte Carlo sizes: (oracle fit draws, evaluation draws)
_MC_DEFAULTS = {
    "portfolio": (20000, 20000),
    "shipment": (2000, 4000),
    "cap-newsvendor": (2000, 4000),
    "newsvendor": (20000, 20000),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    instance: str = "portfolio"
    methods: tuple = ("knn", "kr", "cart", "rf", "saa")
    sample_sizes: tuple = (64, 256, 1024, 4096)
    replications: int = 10
    pollution_dims: tuple = (0, 4, 16, 64)
    censoring: dict = None
    seed: int = 0
    oracle_m: int = None
    eval_m: int = None
    oracle_halves: int = 0
    n_queries: int = 50
    validation_size: int = 200
    innovation_scale: float = 0.05
    hyperparams: dict = field(default_factory=dict)
    problem: dict = field(default_factory=dict)
    erm: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.instance not in INSTANCES:
            raise ConfigError(f"unknown instance {self.instance!r}")
        for name in ("methods", "sample_sizes", "pollution_dims"):
            val = getattr(self, name)
            object.__setattr__(self, name, tuple([val] if isinstance(val, (int, str)) else val))
        for m in self.methods:
            if m not in METHODS and m != "erm":
                raise ConfigError(f"unknown method {m!r}")
        sizes = self.sample_sizes
        if not sizes or any(int(n) != n or n < 2 for n in sizes):
            raise ConfigError("sample sizes must be integers >= 2")
        if list(sizes) != sorted(set(sizes)):
            raise ConfigError("sample sizes must be strictly ascending")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if any(p < 0 for p in self.pollution_dims):
            raise ConfigError("pollution dims must be >= 0")
        if self.n_queries < 1 or self.validation_size < 1:
            raise ConfigError("n_queries and validation_size must be >= 1")
        if not self.innovation_scale > 0:
            raise ConfigError("innovation_scale must be positive")
        if self.censoring is not None:
            rate = self.censoring.get("rate", 0.3)
            if not 0 <= rate < 1:
                raise ConfigError("censoring rate must lie in [0, 1)")
        fit, ev = _MC_DEFAULTS[self.instance]
        if self.oracle_m is None:
            object.__setattr__(self, "oracle_m", fit)
        if self.eval_m is None:
            object.__setattr__(self, "eval_m", ev)
        if self.oracle_m < 1 or self.eval_m < 1:
            raise ConfigError("Monte Carlo sizes must be >= 1")

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def with_seed(self, seed):
        d = asdict(self)
        d["seed"] = int(seed)
        return ExperimentConfig(**d)

    def to_dict(self):
        d = asdict(self)
        for k in ("methods", "sample_sizes", "pollution_dims"):
            d[k] = list(d[k])
        return d


# ---------------------------------------------------------------------------
# instances


class Instance:
    """Covariate process, outcome model and decision problem of a config."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.arma = dg.ArmaSpec.default(cfg.innovation_scale)
        opts = dict(cfg.problem)
        self.columns = None
        if cfg.instance == "portfolio":
            self.model = dg.FactorModelSpec.portfolio()
            self.problem = PortfolioProblem(opts.get("lam", 0.0), opts.get("epsilon", 0.15))
        elif cfg.instance == "shipment":
            self.model = dg.FactorModelSpec.shipment()
            self.problem = ShipmentProblem(None, opts.get("p1", 5.0), opts.get("p2", 100.0))
        elif cfg.instance == "cap-newsvendor":
            self.model = dg.FactorModelSpec.shipment()
            d = int(opts.get("d", dg.D_Y))
            self.columns = np.arange(d)
            cap = opts.get("capacity")
            if cap is None:
                Xp = dg.simulate_arma(self.arma, 2000, derive_seed(cfg.seed, "pilot"))
                cap = default_capacity(self.outcomes(Xp, derive_seed(cfg.seed, "pilot-y")))
            self.problem = CapacitatedNewsvendorProblem(d, float(cap))
        else:
            self.model = dg.FactorModelSpec.shipment()
            col = int((cfg.censoring or {}).get("column", opts.get("column", 0)))
            self.columns = np.array([col])
            self.problem = NewsvendorProblem(opts.get("tau", 0.5))

    def outcomes(self, X, seed):
        Y = dg.generate_outcomes(self.model, X[:, : dg.D_X], seed)
        return Y if self.columns is None else Y[:, self.columns]

    def conditional(self, x, m, seed):
        Y = dg.conditional_sample(self.model, np.asarray(x)[: dg.D_X], m, seed)
        return Y if self.columns is None else Y[:, self.columns]

    def training(self, n, rep, pollution=0):
        seed = self.cfg.seed
        X = dg.simulate_arma(self.arma, n, derive_seed(seed, "train-x", n, rep))
        Y = self.outcomes(X, derive_seed(seed, "train-y", n, rep))
        if pollution:
            X = dg.pollute_features(X, pollution, derive_seed(seed, "pollution", n, rep, pollution))
        return X, Y

    def validation(self, rep):
        seed = self.cfg.seed
        X = dg.simulate_arma(self.arma, self.cfg.validation_size, derive_seed(seed, "valid-x", rep))
        return X, self.outcomes(X, derive_seed(seed, "valid-y", rep))


class QueryBank:
    """Fresh query points shared by all methods, sizes and replications,
    each with conditional evaluation draws (common random numbers)."""

    def __init__(self, inst, threads=1, oracle=False):
        cfg = inst.cfg
        self.inst = inst
        self.X = np.vstack([dg.simulate_arma(inst.arma, 1, derive_seed(cfg.seed, "query", q))
                            for q in range(cfg.n_queries)])
        self.Y = [inst.conditional(x, cfg.eval_m, derive_seed(cfg.seed, "eval", q))
                  for q, x in enumerate(self.X)]
        self.benchmark = None
        if oracle:
            res = _map(self._oracle, range(cfg.n_queries), threads)
            self.z_star = [r[0] for r in res]
            self.oracle_se = [r[1] for r in res]
            self.benchmark = np.array([self.risk_at(q, z) for q, z in enumerate(self.z_star)])

    def _oracle(self, q):
        cfg = self.inst.cfg
        z, _, se = full_info_oracle(self.inst.problem, self.inst.conditional, self.X[q],
                                    cfg.oracle_m, derive_seed(cfg.seed, "oracle", q),
                                    n_halves=cfg.oracle_halves)
        return z, se

    def queries(self, pollution=0):
        if not pollution:
            return self.X
        noise = dg.pollute_features(self.X, pollution,
                                    derive_seed(self.inst.cfg.seed, "query-pollution", pollution))
        return noise

    def risk_at(self, q, z):
        Y = self.Y[q]
        costs = row_costs(self.inst.problem, np.tile(np.atleast_1d(z), (len(Y), 1)), Y)
        return math.fsum(costs) / len(costs)

    def true_risk(self, decide, pollution=0):
        """Mean over queries of the conditional risk of decide(x)."""
        Xq = self.queries(pollution)
        risks = [self.risk_at(q, decide(x)) for q, x in enumerate(Xq)]
        return math.fsum(risks) / len(risks)


def _map(fn, tasks, threads):
    tasks = list(tasks)
    if threads <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _timed(fn):
    def run(task):
        t0 = time.perf_counter()
        out = fn(task)
        return out, time.perf_counter() - t0
    return run


def _hp(cfg, method):
    return dict(cfg.hyperparams.get(method, {}))


def _fit(inst, method, X, Y, n, rep, censor=None):
    return make_prescription(method, _hp(inst.cfg, method), X, Y, inst.problem, censor=censor,
                             seed=derive_seed(inst.cfg.seed, "learner", n, rep))


def _summary(rows, key_cols, value_cols):
    groups = {}
    for r in rows:
        groups.setdefault(tuple(r[k] for k in key_cols), []).append(r)
    out = []
    for key, rs in groups.items():
        entry = dict(zip(key_cols, key))
        entry["count"] = len(rs)
        for v in value_cols:
            vals = np.array([r[v] for r in rs], dtype=float)
            entry[f"{v}_mean"] = math.fsum(vals) / len(vals)
            entry[f"{v}_se"] = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else 0.0
        out.append(entry)
    return out


@dataclass
class ExperimentReport:
    name: str
    columns: list
    rows: list
    summary: list
    wall_times: list
    extra: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# studies


def run_convergence(cfg, threads=1):
    """True conditional risk of each method by sample size, with the
    full-information benchmark computed at the same query points."""
    inst = Instance(cfg)
    bank = QueryBank(inst, threads, oracle=True)
    bench = math.fsum(bank.benchmark) / len(bank.benchmark)
    tasks = [(m, n, r) for m in cfg.methods for n in cfg.sample_sizes
             for r in range(cfg.replications)]

    def work(task):
        m, n, r = task
        X, Y = inst.training(n, r)
        p = _fit(inst, m, X, Y, n, r)
        risk = bank.true_risk(lambda x: prescribe(p, x))
        return {"method": m, "N": n, "replication": r, "true_risk": risk,
                "benchmark": bench, "gap": risk - bench}

    res = _map(_timed(work), tasks, threads)
    rows = [r for r, _ in res]
    cols = ["method", "N", "replication", "true_risk", "benchmark", "gap"]
    extra = {"benchmark": bench, "benchmark_per_query": bank.benchmark.tolist()}
    if cfg.oracle_halves > 1:
        extra["oracle_se_per_query"] = bank.oracle_se
    return ExperimentReport("convergence", cols, rows,
                            _summary(rows, ["method", "N"], ["true_risk", "gap"]),
                            [t for _, t in res], extra)


def run_dimension_study(cfg, threads=1):
    """True risk per method when x is padded with uninformative noise."""
    inst = Instance(cfg)
    bank = QueryBank(inst, threads)
    tasks = [(m, n, p, r) for m in cfg.methods for n in cfg.sample_sizes
             for p in cfg.pollution_dims for r in range(cfg.replications)]

    def work(task):
        m, n, p, r = task
        X, Y = inst.training(n, r, p)
        presc = _fit(inst, m, X, Y, n, r)
        risk = bank.true_risk(lambda x: prescribe(presc, x), pollution=p)
        return {"method": m, "N": n, "pollution_dims": p, "replication": r, "true_risk": risk}

    res = _map(_timed(work), tasks, threads)
    rows = [r for r, _ in res]
    cols = ["method", "N", "pollution_dims", "replication", "true_risk"]
    return ExperimentReport("dimension-study", cols, rows,
                            _summary(rows, ["method", "N", "pollution_dims"], ["true_risk"]),
                            [t for _, t in res])


def run_prescriptiveness(cfg, threads=1):
    """Out-of-sample coefficient of prescriptiveness on a validation set."""
    inst = Instance(cfg)
    valid = {r: inst.validation(r) for r in range(cfg.replications)}
    perfect = {r: perfect_foresight_risk(valid[r][1], inst.problem)
               for r in range(cfg.replications)}

    def validation_risk(p, r):
        Xv, Yv = valid[r]
        Z = np.array([np.atleast_1d(prescribe(p, x)) for x in Xv])
        costs = row_costs(inst.problem, Z, Yv)
        return math.fsum(costs) / len(costs)

    def saa_task(task):
        n, r = task
        X, Y = inst.training(n, r)
        return validation_risk(_fit(inst, "saa", X, Y, n, r), r)

    pairs = [(n, r) for n in cfg.sample_sizes for r in range(cfg.replications)]
    saa = dict(zip(pairs, _map(saa_task, pairs, threads)))
    tasks = [(m, n, r) for m in cfg.methods for n, r in pairs]

    def work(task):
        m, n, r = task
        X, Y = inst.training(n, r)
        risk = saa[(n, r)] if m == "saa" else validation_risk(_fit(inst, m, X, Y, n, r), r)
        P = coefficient_of_prescriptiveness(risk, saa[(n, r)], perfect[r])
        return {"method": m, "N": n, "replication": r, "true_risk": risk,
                "saa_risk": saa[(n, r)], "perfect_risk": perfect[r], "P": P}

    res = _map(_timed(work), tasks, threads)
    rows = [r for r, _ in res]
    cols = ["method", "N", "replication", "true_risk", "saa_risk", "perfect_risk", "P"]
    return ExperimentReport("prescriptiveness", cols, rows,
                            _summary(rows, ["method", "N"], ["true_risk", "P"]),
                            [t for _, t in res], {"n_validation": cfg.validation_size})


def censoring_setup(inst):
    """Threshold distribution hitting the configured censoring rate."""
    cfg = inst.cfg
    opts = cfg.censoring or {}
    rate = float(opts.get("rate", 0.3))
    Xp = dg.simulate_arma(inst.arma, 20000, derive_seed(cfg.seed, "censor-pilot"))
    yp = inst.outcomes(Xp, derive_seed(cfg.seed, "censor-pilot-y"))[:, 0]
    spread = float(opts.get("spread", yp.std()))
    if rate == 0:
        return rate, np.inf, spread
    mean = dg.calibrate_threshold_mean(yp, rate, spread, derive_seed(cfg.seed, "censor-calibrate"))
    return rate, mean, spread


def run_censoring_study(cfg, threads=1):
    """Kaplan-Meier-corrected versus censorship-ignoring weights."""
    if cfg.instance != "newsvendor":
        raise ConfigError("the censoring study uses the newsvendor instance")
    inst = Instance(cfg)
    bank = QueryBank(inst, threads)
    rate, mean, spread = censoring_setup(inst)
    tasks = [(m, n, r) for m in cfg.methods for n in cfg.sample_sizes
             for r in range(cfg.replications)]

    def work(task):
        m, n, r = task
        X, Y = inst.training(n, r)
        if np.isfinite(mean):
            cd = dg.censor_dataset(dg.Dataset(X, Y), mean, spread,
                                   derive_seed(cfg.seed, "censor", n, r))
        else:
            cd = dg.CensoredDataset(X, Y[:, 0], np.ones(n, dtype=bool), Y[:, 0])
        out = []
        for tag, censor in (("naive", None), ("km", (cd.U, cd.delta))):
            p = _fit(inst, m, X, cd.U, n, r, censor=censor)
            out.append({"method": f"{m}:{tag}", "N": n, "replication": r,
                        "censoring_rate": cd.censoring_rate,
                        "true_risk": bank.true_risk(lambda x: prescribe(p, x))})
        return out

    res = _map(_timed(work), tasks, threads)
    rows = [row for r, _ in res for row in r]
    cols = ["method", "N", "replication", "censoring_rate", "true_risk"]
    return ExperimentReport("censoring-study", cols, rows,
                            _summary(rows, ["method", "N"], ["true_risk", "censoring_rate"]),
                            [t for _, t in res],
                            {"target_rate": rate, "threshold_mean": mean,
                             "threshold_spread": spread})


def erm_settings(cfg, n):
    opts = dict(cfg.erm)
    norm = dict(opts.get("norm", {"kind": "none"}))
    if norm.get("kind") == erm.FROBENIUS_PENALTY and "lam_reg" not in norm:
        norm["lam_reg"] = 1.0 / math.sqrt(n)
    if "gamma" in norm and norm["gamma"] is not None:
        norm["gamma"] = tuple(norm["gamma"])
    conf = {k: opts[k] for k in ("optimizer", "iterations", "pilot_iterations", "tol")
            if k in opts}
    return erm.NormSpec(**norm), erm.ErmConfig(**conf)


def run_erm_study(cfg, threads=1):
    """Linear decision rules fitted by ERM against weighted prescriptions."""
    if cfg.instance not in ("shipment", "newsvendor"):
        raise ConfigError("the ERM study needs an unconstrained-decision instance")
    inst = Instance(cfg)
    bank = QueryBank(inst, threads)
    tasks = [(m, n, r) for m in cfg.methods for n in cfg.sample_sizes
             for r in range(cfg.replications)]

    def work(task):
        m, n, r = task
        X, Y = inst.training(n, r)
        if m == "erm":
            norm, conf = erm_settings(cfg, n)
            policy = erm.erm_fit(inst.problem, X, Y, norm, conf)
            decide = lambda x: erm.erm_predict(policy, x)  # noqa: E731
        else:
            p = _fit(inst, m, X, Y, n, r)
            decide = lambda x: prescribe(p, x)  # noqa: E731
        return {"method": m, "N": n, "replication": r, "true_risk": bank.true_risk(decide)}

    res = _map(_timed(work), tasks, threads)
    rows = [r for r, _ in res]
    cols = ["method", "N", "replication", "true_risk"]
    return ExperimentReport("erm-study", cols, rows,
                            _summary(rows, ["method", "N"], ["true_risk"]),
                            [t for _, t in res])


def generate_datasets(cfg):
    """Yield (filename, header, rows) for every (N, replication)."""
    inst = Instance(cfg)
    censor = cfg.censoring is not None and cfg.instance == "newsvendor"
    if censor:
        _, mean, spread = censoring_setup(inst)
    for n in cfg.sample_sizes:
        for r in range(cfg.replications):
            X, Y = inst.training(n, r, cfg.pollution_dims[0] if cfg.pollution_dims else 0)
            xcols = [f"x{j + 1}" for j in range(X.shape[1])]
            if censor:
                if np.isfinite(mean):
                    cd = dg.censor_dataset(dg.Dataset(X, Y), mean, spread,
                                           derive_seed(cfg.seed, "censor", n, r))
                else:
                    cd = dg.CensoredDataset(X, Y[:, 0], np.ones(n, dtype=bool))
                header = xcols + ["u", "delta"]
                data = np.column_stack([X, cd.U, cd.delta.astype(float)])
            else:
                header = xcols + [f"y{j + 1}" for j in range(Y.shape[1])]
                data = np.column_stack([X, Y])
            yield f"{cfg.instance}_N{n}_rep{r}.csv", header, data


STUDIES = {
    "convergence": run_convergence,
    "dimension-study": run_dimension_study,
    "prescriptiveness": run_prescriptiveness,
    "censoring-study": run_censoring_study,
    "erm-study": run_erm_study,
}
