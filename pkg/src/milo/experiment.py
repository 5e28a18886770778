"""Seeded studies at tabular scale: learner sweeps, starting states, horizon
scaling, the uncertainty trace, the expert-only model and a penalty sweep.

Every random draw comes from a generator keyed on ``(root_seed, seed, tag)``
so a cell's data does not depend on which other cells run or in what order.
Units of work are ``(mdp, profile, seed)``; rows are sorted before emission.
"""

from __future__ import annotations

import csv
import io
import json
import math
import zlib
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import suite
from .bounds import (check_lemma1, check_theorem2, check_theorem3, check_theorem4)
from .datagen import (TransitionDataset, make_behavior_policy, sample_dataset, sample_trajectories,
                      solve_expert)
from .imitation import (ConfigError, START_OPTIONS, TrainConfig, adversarial_il_true_model,
                        algorithm1, algorithm2, bc_fit, normalized_score, resolve_start)
from .mdp import MdpSpec, TabularPolicy, occupancy, random_mdp, value
from .models import ModelEnsemble, fit_ensemble, policy_uncertainty, uncertainty_table

LEARNERS = ("bc", "adv_il", "alg1", "alg2")
PROFILES = ("wide", "narrow", "expert_only")
M_UNITS = ("pairs", "per_state", "trajectories")
BOUND_FOR = {"bc": "lemma1", "adv_il": "thm2", "alg1": "thm3", "alg2": "thm4"}
CONFIG_VERSION = 1


class CellError(RuntimeError):
    """A sub-module failed inside one cell; the message names the cell."""


# --- configuration ----------------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    mdp_source: tuple = ("cliff_chain", "two_room", "random")
    m_grid: tuple = (2,)
    m_unit: str = "per_state"
    n_behavior: int = 100_000
    behavior_profiles: tuple = ("wide",)
    learners: tuple = ("bc", "alg2")
    seeds: tuple = (0,)
    train: TrainConfig = TrainConfig()
    gamma_grid: tuple | None = None
    ensemble_k: int = 5
    pseudocount: float = 0.1
    ensemble_prior: str = "randomized"
    bounds: bool = False
    root_seed: int = 0
    start_options: tuple = START_OPTIONS
    lambda_grid: tuple = (0.0, 0.5, 2.0)
    trace_horizon: int = 10
    trace_alpha: float = 1.0
    trace_beta: float = 1.0
    version: int = CONFIG_VERSION

    def __post_init__(self):
        if not self.mdp_source or not self.m_grid or not self.seeds:
            raise ConfigError("mdp_source, m_grid and seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if any(int(m) < 1 for m in self.m_grid):
            raise ConfigError("m_grid entries must be >= 1")
        if self.m_unit not in M_UNITS:
            raise ConfigError(f"m_unit must be one of {M_UNITS}")
        if self.n_behavior < 1:
            raise ConfigError("n_behavior must be >= 1")
        for p in self.behavior_profiles:
            if p not in PROFILES:
                raise ConfigError(f"unknown behavior profile {p!r}")
        for lr in self.learners:
            if lr not in LEARNERS:
                raise ConfigError(f"unknown learner {lr!r}")
        for o in self.start_options:
            if o not in START_OPTIONS:
                raise ConfigError(f"unknown start option {o!r}")
        if self.gamma_grid is not None and (not self.gamma_grid
                                            or any(not 0 < g < 1 for g in self.gamma_grid)):
            raise ConfigError("gamma_grid entries must lie in (0, 1)")
        if self.ensemble_k < 2:
            raise ConfigError("ensemble_k must be >= 2")
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {self.version}")
        for src in self.mdp_source:
            _source_name(src)
        object.__setattr__(self, "mdp_source", tuple(_freeze(x) for x in self.mdp_source))

    def replace(self, **kw) -> "SweepConfig":
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc.update(kw)
        return SweepConfig(**doc)

    def to_dict(self) -> dict:
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        doc["train"] = asdict(self.train)
        doc["mdp_source"] = [src if isinstance(src, str) else _source_dict(src)
                             for src in self.mdp_source]
        return json.loads(json.dumps(doc))

    @classmethod
    def from_dict(cls, doc: dict) -> "SweepConfig":
        unknown = set(doc) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kw = dict(doc)
        if "train" in kw:
            if not isinstance(kw["train"], dict):
                raise ConfigError("train must be an object")
            kw["train"] = TrainConfig.from_dict(kw["train"])
        src = kw.get("mdp_source")
        if isinstance(src, (str, dict)):
            kw["mdp_source"] = (src,)
        for k in ("mdp_source", "m_grid", "behavior_profiles", "learners", "seeds", "gamma_grid",
                  "start_options", "lambda_grid"):
            if kw.get(k) is not None:
                if not isinstance(kw[k], (list, tuple)):
                    raise ConfigError(f"{k} must be a list")
                kw[k] = tuple(_freeze(x) for x in kw[k])
        try:
            return cls(**kw)
        except TypeError as e:
            raise ConfigError(str(e)) from None


def _freeze(x):
    if isinstance(x, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in x.items()))
    if isinstance(x, list):
        return tuple(_freeze(v) for v in x)
    return x


def _source_dict(src) -> dict:
    if isinstance(src, str):
        return {"name": src}
    if isinstance(src, tuple):
        return {k: (dict(v) if isinstance(v, tuple) and v and isinstance(v[0], tuple) else v)
                for k, v in src}
    if isinstance(src, dict):
        return src
    raise ConfigError(f"bad mdp_source entry {src!r}")


def _source_name(src) -> str:
    doc = _source_dict(src)
    name = doc.get("name")
    if name == "random_mdp" or name in suite.BUILDERS:
        return name
    raise ConfigError(f"unknown mdp {name!r}; choose from {sorted(suite.BUILDERS) + ['random_mdp']}")


def build_mdp(src, gamma: float | None = None) -> tuple[str, MdpSpec]:
    """``(mdp_id, MdpSpec)`` from a source entry.

    Entries are a suite name, ``{"name": ..., "params": {...}}``, or
    ``{"name": "random_mdp", "params": {"n_states", "n_actions", "gamma", "seed"}}``.
    """
    doc = _source_dict(src)
    name = _source_name(src)
    params = dict(doc.get("params", {}))
    if gamma is not None:
        params["gamma"] = gamma
    if name == "random_mdp":
        p = {"n_states": 8, "n_actions": 3, "gamma": 0.9, "seed": 0, **params}
        mdp = random_mdp(p["n_states"], p["n_actions"], p["gamma"], np.random.default_rng(p["seed"]))
    else:
        try:
            mdp = suite.load(name, **params)
        except TypeError as e:
            raise ConfigError(f"bad params for {name}: {e}") from None
    tag = ",".join(f"{k}={params[k]}" for k in sorted(params))
    return (f"{name}[{tag}]" if tag else name), mdp


def cell_rng(root_seed: int, seed: int, *tags) -> np.random.Generator:
    """Generator keyed on the root seed, the trial seed and a tag path."""
    key = zlib.crc32("/".join(str(t) for t in tags).encode())
    return np.random.default_rng(np.random.SeedSequence([root_seed, int(seed), key]))


# --- results ------------------------------------------------------------------

ROW_FIELDS = ("mdp_id", "learner", "profile", "variant", "M", "seed", "normalized_score",
              "suboptimality", "U_hat_pi", "U_pi", "bound_id", "bound_slack")


@dataclass(frozen=True)
class Row:
    mdp_id: str
    learner: str
    profile: str
    variant: str
    M: int
    seed: int
    normalized_score: float
    suboptimality: float
    U_hat_pi: float
    U_pi: float
    bound_id: str = ""
    bound_slack: float = float("nan")

    def key(self):
        return (self.mdp_id, self.learner, self.profile, self.variant, self.M, self.seed)

    def cell(self):
        return self.key()[:-1]


def _fmt(v) -> str:
    if isinstance(v, float):
        if math.isnan(v):
            return ""
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def _parse(name: str, text: str):
    if name in ("M", "seed"):
        return int(text)
    if name in ("mdp_id", "learner", "profile", "variant", "bound_id"):
        return text
    return float("nan") if text == "" else float(text)


def sample_std(xs) -> float:
    """Sample standard deviation (``ddof=1``); zero for a single value."""
    xs = np.asarray(xs, dtype=np.float64)
    return 0.0 if xs.size < 2 else float(xs.std(ddof=1))


@dataclass
class ResultsTable:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=Row.key)
        keys = [r.key() for r in self.rows]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (cell, seed) rows")
        for r in self.rows:
            if not math.isfinite(r.normalized_score):
                raise ValueError(f"non-finite score in cell {r.key()}")

    def __len__(self):
        return len(self.rows)

    def select(self, **kw) -> list[Row]:
        return [r for r in self.rows if all(getattr(r, k) == v for k, v in kw.items())]

    def scores(self, **kw) -> np.ndarray:
        return np.array([r.normalized_score for r in self.select(**kw)])

    def aggregates(self, metric: str = "normalized_score") -> list[dict]:
        groups = defaultdict(list)
        for r in self.rows:
            groups[r.cell()].append(getattr(r, metric))
        out = []
        for cell in sorted(groups):
            xs = groups[cell]
            out.append(dict(zip(ROW_FIELDS[:5], cell), n=len(xs), mean=float(np.mean(xs)),
                            std=sample_std(xs), metric=metric))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.rows:
            w.writerow([_fmt(getattr(r, f)) for f in ROW_FIELDS])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultsTable":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or tuple(header) != ROW_FIELDS:
            raise ValueError("results CSV header does not match the row schema")
        rows = [Row(**{f: _parse(f, v) for f, v in zip(ROW_FIELDS, line)}) for line in reader if line]
        return cls(rows)

    def aggregates_json(self) -> str:
        doc = {"meta": self.meta, "aggregates": self.aggregates()}
        return json.dumps(doc, indent=1, sort_keys=True)


# --- one unit of work -----------------------------------------------------------

@dataclass(frozen=True)
class Variant:
    """One learner run inside a cell: a label, the learner and its config."""
    name: str
    learner: str
    train: TrainConfig


@dataclass
class CellData:
    mdp: MdpSpec
    expert: TabularPolicy
    expert_data: TransitionDataset
    behavior_data: TransitionDataset | None
    behavior_p: np.ndarray
    ensemble: ModelEnsemble | None = None
    tl: MdpSpec | None = None


def m_count(cfg: SweepConfig, m: int, mdp: MdpSpec) -> int:
    return int(m) * mdp.n_states if cfg.m_unit == "per_state" else int(m)


def expert_dataset(cfg: SweepConfig, mdp_id: str, mdp: MdpSpec, expert, m: int, seed: int):
    rng = cell_rng(cfg.root_seed, seed, mdp_id, "expert", m)
    if cfg.m_unit == "trajectories":
        return sample_trajectories(expert, mdp, int(m), rng, tag="expert", seed=int(seed))
    return sample_dataset(expert, mdp, m_count(cfg, m, mdp), rng, tag="expert", seed=int(seed))


def behavior_dataset(cfg: SweepConfig, mdp_id: str, mdp: MdpSpec, behavior, profile: str, seed: int):
    rng = cell_rng(cfg.root_seed, seed, mdp_id, "behavior", profile)
    return sample_dataset(behavior, mdp, cfg.n_behavior, rng, tag=f"behavior_{profile}",
                          seed=int(seed))


def prepare_cell(cfg: SweepConfig, mdp_id: str, mdp: MdpSpec, profile: str, m: int, seed: int,
                 expert=None, behavior=None, need_model: bool = True) -> CellData:
    expert = solve_expert(mdp) if expert is None else expert
    ed = expert_dataset(cfg, mdp_id, mdp, expert, m, seed)
    if profile == "expert_only":
        bd, model_data = None, ed
        bp = occupancy(expert, mdp, kind="state_action").values
    else:
        behavior = make_behavior_policy(mdp, profile) if behavior is None else behavior
        bd = behavior_dataset(cfg, mdp_id, mdp, behavior, profile, seed)
        model_data = ed.concat(bd)
        bp = behavior.occupancy(mdp)
    cell = CellData(mdp, expert, ed, bd, bp)
    if need_model:
        rng = cell_rng(cfg.root_seed, seed, mdp_id, "model", profile, m)
        cell.ensemble = fit_ensemble(model_data, mdp.shape, cfg.ensemble_k, cfg.pseudocount, rng,
                                     prior=cfg.ensemble_prior)
        cell.tl = cell.ensemble.mean_model().as_mdp(mdp)
    return cell


def train_learner(variant: Variant, cell: CellData):
    ed = cell.expert_data
    if variant.learner == "bc":
        return bc_fit(ed, cell.mdp.shape), None
    if variant.learner == "adv_il":
        out = adversarial_il_true_model(ed, cell.mdp, variant.train)
    elif variant.learner == "alg1":
        out = algorithm1(ed, cell.tl, variant.train)
    else:
        starts = cell.behavior_data if cell.behavior_data is not None else ed
        out = algorithm2(ed, cell.tl, cell.ensemble, variant.train, behavior_data=starts)
    return out.policy, out


def _bound(variant: Variant, cell: CellData, policy, out):
    kind = BOUND_FOR[variant.learner]
    ed, mdp = cell.expert_data, cell.mdp
    if kind == "lemma1":
        rep = check_lemma1(cell.expert, policy, mdp)
    elif kind == "thm2":
        rep = check_theorem2(ed, out, mdp, variant.train.delta, expert_policy=cell.expert)
    elif kind == "thm3":
        rep = check_theorem3(ed, out, cell.tl, mdp, cell.behavior_p, delta=variant.train.delta,
                             expert_policy=cell.expert)
    else:
        rep = check_theorem4(ed, out, cell.tl, mdp, cell.behavior_p, delta=variant.train.delta,
                             expert_policy=cell.expert)
    return kind, rep.slack


def evaluate(variant: Variant, cell: CellData, m: int, seed: int, mdp_id: str, profile: str,
             with_bounds: bool) -> Row:
    policy, out = train_learner(variant, cell)
    mdp = cell.mdp
    v_star = value(cell.expert, mdp)
    u_hat = u_pi = float("nan")
    if cell.tl is not None:
        p_model = occupancy(policy, cell.tl, kind="state_action").values
        u_hat = float((p_model * uncertainty_table(cell.ensemble)).sum())
        u_pi = policy_uncertainty(policy, cell.tl, mdp, cell.behavior_p)
    bound_id, slack = "", float("nan")
    if with_bounds and (cell.tl is not None or variant.learner in ("bc", "adv_il")):
        bound_id, slack = _bound(variant, cell, policy, out)
    return Row(mdp_id, variant.learner, profile, _variant_label(variant), int(m), int(seed),
               normalized_score(policy, mdp, cell.expert), v_star - value(policy, mdp),
               u_hat, u_pi, bound_id, slack)


def _variant_label(v: Variant) -> str:
    return v.name.split(":", 1)[1] if ":" in v.name else ""


@dataclass(frozen=True)
class Unit:
    cfg: SweepConfig
    src: object
    gamma: float | None
    profile: str
    seed: int
    variants: tuple
    m_values: tuple


def run_unit(unit: Unit) -> list[Row]:
    cfg = unit.cfg
    mdp_id, mdp = build_mdp(unit.src, unit.gamma)
    expert = solve_expert(mdp)
    behavior = None if unit.profile == "expert_only" else make_behavior_policy(mdp, unit.profile)
    need_model = any(v.learner in ("alg1", "alg2") for v in unit.variants)
    rows = []
    for m in unit.m_values:
        try:
            cell = prepare_cell(cfg, mdp_id, mdp, unit.profile, m, unit.seed, expert, behavior,
                                need_model)
            for v in unit.variants:
                rows.append(evaluate(v, cell, m, unit.seed, mdp_id, unit.profile, cfg.bounds))
        except (ConfigError, CellError):
            raise
        except Exception as e:
            raise CellError(f"cell mdp={mdp_id} profile={unit.profile} M={m} seed={unit.seed}: "
                            f"{type(e).__name__}: {e}") from e
    return rows


def execute(units, jobs: int = 1) -> list[Row]:
    """Run units, serially or on a process pool; output order is fixed by sorting."""
    units = list(units)
    if jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run_unit, units))
    else:
        parts = [run_unit(u) for u in units]
    return [r for part in parts for r in part]


def _variants(cfg: SweepConfig) -> tuple:
    return tuple(Variant(lr, lr, cfg.train) for lr in cfg.learners)


def _units(cfg: SweepConfig, variants, profiles=None, m_values=None, gammas=(None,)):
    profiles = cfg.behavior_profiles if profiles is None else profiles
    m_values = tuple(cfg.m_grid) if m_values is None else tuple(m_values)
    for src in cfg.mdp_source:
        for g in gammas:
            for profile in profiles:
                for seed in cfg.seeds:
                    yield Unit(cfg, src, g, profile, int(seed), tuple(variants), m_values)


def _meta(cfg: SweepConfig, study: str, **extra) -> dict:
    return {"study": study, "config": cfg.to_dict(), **extra}


# --- studies --------------------------------------------------------------------

def run_sweep(cfg: SweepConfig, jobs: int = 1) -> ResultsTable:
    """Every learner on every (mdp, profile, M, seed) cell."""
    return ResultsTable(execute(_units(cfg, _variants(cfg)), jobs), _meta(cfg, "sweep"))


def mid_m(cfg: SweepConfig) -> int:
    return sorted(cfg.m_grid)[(len(cfg.m_grid) - 1) // 2]


def starting_state_study(cfg: SweepConfig, jobs: int = 1) -> ResultsTable:
    """Algorithm 2 under each rollout start option at the mid-grid ``M``."""
    variants = tuple(Variant(f"alg2:start={o}", "alg2", cfg.train.replace(start_dist=o))
                     for o in cfg.start_options)
    rows = execute(_units(cfg, variants, m_values=(mid_m(cfg),)), jobs)
    return ResultsTable(rows, _meta(cfg, "starting_state", m=mid_m(cfg)))


def penalty_study(cfg: SweepConfig, jobs: int = 1) -> ResultsTable:
    """Algorithm 2 across ``lambda_grid``; ``U_pi`` is the quantity of interest."""
    variants = tuple(Variant(f"alg2:lambda={lam!r}", "alg2", cfg.train.replace(lambda_u=float(lam)))
                     for lam in cfg.lambda_grid)
    rows = execute(_units(cfg, variants, m_values=(mid_m(cfg),)), jobs)
    return ResultsTable(rows, _meta(cfg, "penalty", m=mid_m(cfg)))


def expert_only_study(cfg: SweepConfig, jobs: int = 1) -> ResultsTable:
    """BC and Algorithm 2 with a model fit on expert data only (expert-state
    starts), next to Algorithm 2 on each configured behavior profile."""
    m = (mid_m(cfg),)
    eo = (Variant("bc", "bc", cfg.train),
          Variant("alg2", "alg2", cfg.train.replace(start_dist="expert_states")))
    rows = execute(_units(cfg, eo, profiles=("expert_only",), m_values=m), jobs)
    others = tuple(p for p in cfg.behavior_profiles if p != "expert_only")
    if others:
        rows += execute(_units(cfg, (Variant("alg2", "alg2", cfg.train),), profiles=others,
                               m_values=m), jobs)
    return ResultsTable(rows, _meta(cfg, "expert_only", m=mid_m(cfg)))


def loglog_slope(gammas, subopts) -> tuple[float, bool]:
    """Least-squares slope of ``log(subopt)`` on ``log(1/(1-gamma))``.

    Returns ``(slope, degenerate)``; a fit is degenerate when fewer than two
    points have positive suboptimality.
    """
    x = np.log(1.0 / (1.0 - np.asarray(gammas, dtype=np.float64)))
    y = np.asarray(subopts, dtype=np.float64)
    ok = y > 1e-12
    if ok.sum() < 2:
        return float("nan"), True
    slope = np.polyfit(x[ok], np.log(y[ok]), 1)[0]
    return float(slope), bool(ok.sum() < len(y))


def horizon_scaling_study(cfg: SweepConfig, jobs: int = 1) -> tuple[ResultsTable, list[dict]]:
    """Suboptimality of each learner across ``gamma_grid`` and its log-log slope."""
    if not cfg.gamma_grid:
        raise ConfigError("horizon study needs gamma_grid")
    rows = execute(_units(cfg, _variants(cfg), gammas=tuple(cfg.gamma_grid)), jobs)
    table = ResultsTable(rows, _meta(cfg, "horizon"))
    slopes = []
    for src in cfg.mdp_source:
        name = _source_name(src)
        for profile in cfg.behavior_profiles:
            for m in cfg.m_grid:
                for lr in cfg.learners:
                    means = []
                    for g in cfg.gamma_grid:
                        mdp_id = build_mdp(src, g)[0]
                        sub = [r.suboptimality for r in table.select(mdp_id=mdp_id, learner=lr,
                                                                     profile=profile, M=int(m))]
                        means.append(float(np.mean(sub)))
                    slope, degenerate = loglog_slope(cfg.gamma_grid, means)
                    slopes.append({"mdp": name, "profile": profile, "M": int(m), "learner": lr,
                                   "gammas": list(cfg.gamma_grid), "mean_suboptimality": means,
                                   "slope": slope, "degenerate": degenerate})
    table.meta["slopes"] = slopes
    return table, slopes


# --- uncertainty trace ------------------------------------------------------------

@dataclass(frozen=True)
class TraceScaling:
    """Per-component standardization over the expert demonstrations."""
    alpha: float
    beta: float
    u_mean: float
    u_std: float
    nll_mean: float
    nll_std: float

    def to_dict(self) -> dict:
        return asdict(self)


def _nll_table(eo: ModelEnsemble) -> np.ndarray:
    return -np.log(eo.mean_model().transition)


def trace_scaling(eo: ModelEnsemble, expert_data: TransitionDataset, alpha: float = 1.0,
                  beta: float = 1.0) -> TraceScaling:
    u = uncertainty_table(eo)[expert_data.states, expert_data.actions]
    nll = _nll_table(eo)[expert_data.states, expert_data.actions, expert_data.next_states]
    sd = lambda x: float(x.std()) if x.std() > 0 else 1.0
    return TraceScaling(alpha, beta, float(u.mean()), sd(u), float(nll.mean()), sd(nll))


def trace_statistic(eo: ModelEnsemble, scaling: TraceScaling) -> np.ndarray:
    """``U~(s, a, s')``: standardized disagreement plus standardized surprise."""
    u = (uncertainty_table(eo) - scaling.u_mean) / scaling.u_std
    nll = (_nll_table(eo) - scaling.nll_mean) / scaling.nll_std
    return scaling.alpha * u[:, :, None] + scaling.beta * nll


def uncertainty_trace(policy, tl: MdpSpec, eo: ModelEnsemble, start, horizon: int,
                      scaling: TraceScaling) -> np.ndarray:
    """Expected ``U~_t`` for ``t = 0..horizon`` while ``policy`` rolls in ``tl``.

    The expectation over rollouts is computed exactly by propagating the
    state distribution through ``tl``; next states are drawn from ``tl``
    and scored by the expert-only model.
    """
    pi = policy.probs if isinstance(policy, TabularPolicy) else np.asarray(policy)
    stat = trace_statistic(eo, scaling)
    per_sa = (tl.transition * stat).sum(axis=2)
    mu = np.asarray(start, dtype=np.float64)
    out = np.empty(horizon + 1)
    for t in range(horizon + 1):
        sa = mu[:, None] * pi
        out[t] = float((sa * per_sa).sum())
        mu = np.einsum("sa,sat->t", sa, tl.transition)
    return out


TRACE_FIELDS = ("mdp_id", "policy_tag", "t", "mean", "std")


@dataclass
class TraceTable:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def final(self, mdp_id: str, tag: str) -> float:
        pts = [r for r in self.rows if r[0] == mdp_id and r[1] == tag]
        return max(pts, key=lambda r: r[2])[3]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for r in sorted(self.rows):
            w.writerow([_fmt(x) for x in r])
        return buf.getvalue()


def trace_study(cfg: SweepConfig, start_dist: str = "behavior_states", jobs: int = 1) -> TraceTable:
    """BC and Algorithm 2 traces from ``start_dist`` on each MDP, mean/std over seeds.

    The learners use the first behavior profile and the mid-grid ``M``; the
    trace model is an ensemble fit on the expert data alone.
    """
    profile = cfg.behavior_profiles[0]
    m = mid_m(cfg)
    rows, meta = [], {"study": "trace", "config": cfg.to_dict(), "start": start_dist,
                      "profile": profile, "M": m, "scaling": {}}
    for src in cfg.mdp_source:
        mdp_id, mdp = build_mdp(src)
        expert = solve_expert(mdp)
        behavior = None if profile == "expert_only" else make_behavior_policy(mdp, profile)
        traces = defaultdict(list)
        for seed in cfg.seeds:
            cell = prepare_cell(cfg, mdp_id, mdp, profile, m, seed, expert, behavior)
            eo = fit_ensemble(cell.expert_data, mdp.shape, cfg.ensemble_k, cfg.pseudocount,
                              cell_rng(cfg.root_seed, seed, mdp_id, "expert_only_model", m),
                              prior=cfg.ensemble_prior)
            scaling = trace_scaling(eo, cell.expert_data, cfg.trace_alpha, cfg.trace_beta)
            meta["scaling"][f"{mdp_id}/seed={seed}"] = scaling.to_dict()
            start = resolve_start(start_dist, mdp, cell.expert_data,
                                  cell.behavior_data or cell.expert_data)
            bc_pol, _ = train_learner(Variant("bc", "bc", cfg.train), cell)
            a2_pol, _ = train_learner(Variant("alg2", "alg2", cfg.train), cell)
            for tag, pol in (("bc", bc_pol), ("alg2", a2_pol)):
                traces[tag].append(uncertainty_trace(pol, cell.tl, eo, start, cfg.trace_horizon,
                                                     scaling))
        for tag, ts in traces.items():
            arr = np.array(ts)
            for t in range(arr.shape[1]):
                rows.append((mdp_id, tag, t, float(arr[:, t].mean()), sample_std(arr[:, t])))
    return TraceTable(rows, meta)


STUDIES = ("starting_state", "horizon", "trace", "expert_only", "penalty")
