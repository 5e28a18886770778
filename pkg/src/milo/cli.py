"""``milo`` command line: file-based workflows over the library.

Every verb reads one JSON config (``version`` field required, unknown fields
rejected) and writes its artifacts plus ``manifest.json`` into ``--out``.
Relative paths inside a config resolve against the working directory.
Exit status: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import re
import sys
import time
from collections import defaultdict
from pathlib import Path

import numpy as np

from . import bounds, experiment
from .datagen import (TransitionDataset, make_behavior_policy, sample_dataset, sample_trajectories,
                      solve_expert)
from .experiment import CellError, ResultsTable, SweepConfig, build_mdp, cell_rng
from .imitation import (ConfigError, TrainConfig, adversarial_il_true_model, algorithm1, algorithm2,
                        bc_fit, LearnerOutput, Witness)
from .mdp import MdpSpec, random_mdp
from .models import (LearnedModel, ModelEnsemble, ModelError, fit_ensemble, fit_model)

VERBS = ("gen-mdp", "gen-data", "fit-model", "train", "verify-bounds", "sweep", "study", "report")
log = logging.getLogger("milo")


class UsageError(Exception):
    """Bad config or inputs; maps to exit status 2."""


# --- config handling ---------------------------------------------------------------

def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(r'"%s"\s*:' % re.escape(key))
    for i, line in enumerate(text.splitlines(), 1):
        if pat.search(line):
            return i
    return None


def _config_error(path: Path, text: str, msg: str) -> UsageError:
    """Attach the line of the first config key named in ``msg``."""
    keys = re.findall(r'"([^"\n]+)"\s*:', text)
    for key in sorted(set(keys), key=len, reverse=True):
        if re.search(r"(?<![\w])%s(?![\w])" % re.escape(key), msg):
            line = _line_of(text, key)
            if line is not None:
                return UsageError(f"{path}:{line}: {msg}")
    return UsageError(f"{path}:1: {msg}")


def load_config(path: Path) -> tuple[dict, str]:
    try:
        text = path.read_text()
    except OSError as e:
        raise UsageError(f"{path}: cannot read config ({e.strerror})") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}:1: config must be a JSON object")
    if doc.get("version") != 1:
        raise _config_error(path, text, "version must be 1")
    return doc, text


def _take(doc: dict, allowed: dict, verb: str) -> dict:
    unknown = set(doc) - set(allowed) - {"version"}
    if unknown:
        raise ConfigError(f"unknown fields for {verb}: " + ", ".join(f'"{k}"' for k in sorted(unknown)))
    return {k: doc.get(k, v) for k, v in allowed.items()}


def _required(opts: dict, *keys):
    for k in keys:
        if opts.get(k) is None:
            raise ConfigError(f'missing required field "{k}"')


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _load_mdp(opts: dict, base: Path) -> MdpSpec:
    if opts.get("mdp_path"):
        return MdpSpec.from_json(_read(_resolve(base, opts["mdp_path"])))
    if opts.get("mdp") is None:
        raise ConfigError('one of "mdp" or "mdp_path" is required')
    return build_mdp(opts["mdp"])[1]


def _read(path: Path) -> str:
    try:
        return path.read_text()
    except OSError as e:
        raise UsageError(f"{path}: cannot read input ({e.strerror})") from None


# --- artifact writing -------------------------------------------------------------

class Collector:
    """Single writer for a command's artifacts; records checksums for the manifest."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.artifacts = {}

    def write(self, name: str, text: str):
        data = text.encode()
        (self.out_dir / name).write_bytes(data)
        self.artifacts[name] = hashlib.sha256(data).hexdigest()
        log.info("wrote %s", self.out_dir / name)

    def figure(self, path: Path):
        self.artifacts[path.name] = hashlib.sha256(path.read_bytes()).hexdigest()

    def manifest(self, verb: str, config_text: str, seed: int | None):
        """Append this command's entry to ``manifest.json`` (one entry per command run)."""
        path = self.out_dir / "manifest.json"
        doc = {"commands": []}
        if path.exists():
            try:
                doc = json.loads(path.read_text())
            except json.JSONDecodeError:
                pass
        doc.setdefault("commands", []).append({
            "verb": verb,
            "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
            "seed": seed,
            "artifacts": dict(sorted(self.artifacts.items())),
            "created_unix": time.time()})
        path.write_text(json.dumps(doc, indent=1) + "\n")


def _dumps(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# --- verbs ----------------------------------------------------------------------

def cmd_gen_mdp(doc, base, out: Collector, seed, jobs):
    opts = _take(doc, {"mdp": None}, "gen-mdp")
    _required(opts, "mdp")
    src = opts["mdp"]
    if isinstance(src, dict) and src.get("name") == "random_mdp" and seed is not None:
        src = {**src, "params": {**src.get("params", {}), "seed": seed}}
    out.write("mdp.json", build_mdp(src)[1].to_json() + "\n")


def cmd_gen_data(doc, base, out: Collector, seed, jobs):
    opts = _take(doc, {"mdp": None, "mdp_path": None, "policy": "expert", "n": None,
                       "mode": "pairs", "seed": 0}, "gen-data")
    _required(opts, "n")
    if opts["policy"] not in ("expert", "wide", "narrow"):
        raise ConfigError('policy must be "expert", "wide" or "narrow"')
    if opts["mode"] not in ("pairs", "trajectories"):
        raise ConfigError('mode must be "pairs" or "trajectories"')
    if not isinstance(opts["n"], int) or opts["n"] < 1:
        raise ConfigError("n must be a positive integer")
    mdp = _load_mdp(opts, base)
    s = opts["seed"] if seed is None else seed
    rng = np.random.default_rng(s)
    if opts["policy"] == "expert":
        pol, tag = solve_expert(mdp), "expert"
    else:
        pol, tag = make_behavior_policy(mdp, opts["policy"]), f"behavior_{opts['policy']}"
    if opts["mode"] == "trajectories":
        if opts["policy"] != "expert":
            raise ConfigError('mode "trajectories" is only available for policy "expert"')
        data = sample_trajectories(pol, mdp, opts["n"], rng, tag=tag, seed=s)
    else:
        data = sample_dataset(pol, mdp, opts["n"], rng, tag=tag, policy_id=opts["policy"], seed=s)
    out.write("dataset.jsonl", data.to_jsonl())


def cmd_fit_model(doc, base, out: Collector, seed, jobs):
    opts = _take(doc, {"mdp": None, "mdp_path": None, "dataset_path": None, "pseudocount": 0.1,
                       "ensemble_k": 0, "prior": "randomized", "seed": 0}, "fit-model")
    _required(opts, "dataset_path")
    mdp = _load_mdp(opts, base)
    data = TransitionDataset.from_jsonl(_read(_resolve(base, opts["dataset_path"])))
    model = fit_model(data, mdp.shape, opts["pseudocount"])
    out.write("model.json", json.dumps(model.to_dict(mdp)) + "\n")
    if opts["ensemble_k"]:
        rng = np.random.default_rng(opts["seed"] if seed is None else seed)
        ens = fit_ensemble(data, mdp.shape, opts["ensemble_k"], opts["pseudocount"], rng,
                           prior=opts["prior"])
        out.write("ensemble.json", json.dumps(ens.to_dict()) + "\n")


def cmd_train(doc, base, out: Collector, seed, jobs):
    opts = _take(doc, {"mdp": None, "mdp_path": None, "learner": None, "expert_data_path": None,
                       "model_path": None, "ensemble_path": None, "behavior_data_path": None,
                       "train": {}}, "train")
    _required(opts, "learner", "expert_data_path")
    cfg = TrainConfig.from_dict(opts["train"])
    if seed is not None:
        cfg = cfg.replace(seed=seed)
    mdp = _load_mdp(opts, base)
    ed = TransitionDataset.from_jsonl(_read(_resolve(base, opts["expert_data_path"])))
    learner = opts["learner"]
    if learner == "bc":
        pol = bc_fit(ed, mdp.shape)
        res = LearnerOutput(pol, Witness("state", np.zeros(mdp.n_states)), [], float("nan"), "bc")
    elif learner == "adv_il":
        res = adversarial_il_true_model(ed, mdp, cfg)
    elif learner in ("alg1", "alg2"):
        _required(opts, "model_path")
        tl = LearnedModel.from_dict(json.loads(_read(_resolve(base, opts["model_path"])))).as_mdp(mdp)
        if learner == "alg1":
            res = algorithm1(ed, tl, cfg)
        else:
            ens = None
            if opts["ensemble_path"]:
                ens = ModelEnsemble.from_dict(json.loads(_read(_resolve(base, opts["ensemble_path"]))))
            bd = None
            if opts["behavior_data_path"]:
                bd = TransitionDataset.from_jsonl(_read(_resolve(base, opts["behavior_data_path"])))
            res = algorithm2(ed, tl, ens, cfg, behavior_data=bd)
    else:
        raise ConfigError('learner must be one of "bc", "adv_il", "alg1", "alg2"')
    out.write("learner_output.json", json.dumps(res.to_dict()) + "\n")


AUDITS = ("lemma6", "lemma1", "thm2", "model", "vacuous", "offline_rl", "prop1")
DEFAULT_AUDITS = {"lemma6": 500, "lemma1": 200, "thm2": 100, "model": 50, "vacuous": 1,
                  "offline_rl": 50, "prop1": 50}


def run_audits(counts: dict, seed: int, thm2_m=(25, 100)) -> list:
    """Randomized bound audits; ``counts`` maps audit name to instance count."""
    reports = []
    for name in AUDITS:
        n = int(counts.get(name, 0))
        if n <= 0:
            continue
        rng = cell_rng(seed, 0, "audit", name)
        log.info("audit %s x%d", name, n)
        if name == "lemma6":
            reports += bounds.audit_lemma6(n, rng)
        elif name == "lemma1":
            reports += bounds.audit_lemma1(n, rng)
        elif name == "thm2":
            mdp = random_mdp(4, 2, 0.9, rng)
            for m in thm2_m:
                reports += bounds.audit_theorem2(mdp, int(m), n, rng)
        elif name == "model":
            reports += bounds.audit_model_bounds(n, rng)
        elif name == "vacuous":
            for _ in range(n):
                reports += bounds.vacuous_two_room(rng)
        elif name == "offline_rl":
            reports += bounds.audit_offline_rl(n, rng)
        elif name == "prop1":
            reports += bounds.audit_proposition1(n, rng)
    return reports


def summary_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("theorem_id", "n", "holds_rate", "median_slack", "vacuous"))
    for row in bounds.summarize(reports):
        vac = sum(r.vacuous for r in reports if r.theorem_id == row["theorem_id"])
        w.writerow((row["theorem_id"], row["n"], repr(row["holds_rate"]),
                    experiment._fmt(float(row["median_slack"])), vac))
    return buf.getvalue()


def cmd_verify_bounds(doc, base, out: Collector, seed, jobs):
    opts = _take(doc, {"audits": DEFAULT_AUDITS, "thm2_m": [25, 100], "seed": 0}, "verify-bounds")
    audits = opts["audits"]
    if not isinstance(audits, dict) or set(audits) - set(AUDITS):
        raise ConfigError(f"audits must map names from {list(AUDITS)} to counts")
    reports = run_audits(audits, opts["seed"] if seed is None else seed, tuple(opts["thm2_m"]))
    out.write("bound_reports.json", bounds.reports_to_json(reports) + "\n")
    out.write("bounds_summary.csv", summary_csv(reports))


def _sweep_cfg(doc: dict, seed) -> SweepConfig:
    cfg = SweepConfig.from_dict(doc)
    return cfg if seed is None else cfg.replace(root_seed=seed)


def _write_table(out: Collector, table: ResultsTable):
    out.write("results.csv", table.to_csv())
    out.write("aggregates.json", table.aggregates_json())


def cmd_sweep(doc, base, out: Collector, seed, jobs):
    _write_table(out, experiment.run_sweep(_sweep_cfg(doc, seed), jobs))


def cmd_study(doc, base, out: Collector, seed, jobs):
    doc = dict(doc)
    study = doc.pop("study", None)
    if study not in experiment.STUDIES:
        raise ConfigError(f'"study" must be one of {list(experiment.STUDIES)}')
    cfg = _sweep_cfg(doc, seed)
    if study == "starting_state":
        _write_table(out, experiment.starting_state_study(cfg, jobs))
    elif study == "penalty":
        _write_table(out, experiment.penalty_study(cfg, jobs))
    elif study == "expert_only":
        _write_table(out, experiment.expert_only_study(cfg, jobs))
    elif study == "horizon":
        table, slopes = experiment.horizon_scaling_study(cfg, jobs)
        _write_table(out, table)
        out.write("slopes.json", _dumps(slopes))
    else:
        tt = experiment.trace_study(cfg, jobs=jobs)
        out.write("trace.csv", tt.to_csv())
        out.write("trace_meta.json", _dumps(tt.meta))


def report_tables(table: ResultsTable) -> tuple[str, str]:
    """Markdown (learners as columns, ``M`` as rows) and CSV of mean/std per cell."""
    aggs = table.aggregates()
    if not aggs:
        raise UsageError("results.csv has no rows")
    sections = defaultdict(dict)
    for a in aggs:
        col = a["learner"] + (f" ({a['variant']})" if a["variant"] else "")
        sections[(a["mdp_id"], a["profile"])][(a["M"], col)] = a
    md = ["# Results", ""]
    for (mdp_id, profile) in sorted(sections):
        cells = sections[(mdp_id, profile)]
        cols = sorted({c for _, c in cells})
        ms = sorted({m for m, _ in cells})
        md += [f"## {mdp_id} / {profile}", "", "| M | " + " | ".join(cols) + " |",
               "|---" * (len(cols) + 1) + "|"]
        for m in ms:
            vals = []
            for c in cols:
                a = cells.get((m, c))
                vals.append("" if a is None else f"{a['mean']:.3f} ± {a['std']:.3f} (n={a['n']})")
            md.append(f"| {m} | " + " | ".join(vals) + " |")
        md.append("")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("mdp_id", "profile", "learner", "variant", "M", "n", "mean", "std"))
    for a in aggs:
        w.writerow((a["mdp_id"], a["profile"], a["learner"], a["variant"], a["M"], a["n"],
                    repr(a["mean"]), repr(a["std"])))
    return "\n".join(md), buf.getvalue()


def _trace_rows(path: Path) -> list[tuple]:
    return [(r["mdp_id"], r["policy_tag"], int(r["t"]), float(r["mean"]), float(r["std"]))
            for r in csv.DictReader(io.StringIO(_read(path)))]


def trace_report(rows: list[tuple]) -> str:
    md = ["# Uncertainty trace", "", "| mdp | policy | t=0 | final t | final mean ± std |",
          "|---|---|---|---|---|"]
    series = defaultdict(list)
    for r in rows:
        series[(r[0], r[1])].append(r)
    for key in sorted(series):
        pts = sorted(series[key], key=lambda r: r[2])
        md.append(f"| {key[0]} | {key[1]} | {pts[0][3]:.3f} | {pts[-1][2]} | "
                  f"{pts[-1][3]:.3f} ± {pts[-1][4]:.3f} |")
    return "\n".join(md) + "\n"


def cmd_report(doc, base, out: Collector, seed, jobs):
    opts = _take(doc, {"results_dir": None, "figures": True}, "report")
    src = _resolve(base, opts["results_dir"]) if opts["results_dir"] else out.out_dir
    results, trace = src / "results.csv", src / "trace.csv"
    if not results.exists() and not trace.exists():
        raise UsageError(f"{results}: results.csv not found")
    figures = []
    if opts["figures"]:
        from . import plotting
    if results.exists():
        try:
            table = ResultsTable.from_csv(_read(results))
        except ValueError as e:
            raise UsageError(f"{results}: {e}") from None
        md, agg = report_tables(table)
        out.write("report.md", md + "\n")
        out.write("report.csv", agg)
        if opts["figures"]:
            figures += plotting.plot_scores(table.aggregates(), out.out_dir)
    if trace.exists():
        rows = _trace_rows(trace)
        if not rows:
            raise UsageError(f"{trace}: trace.csv has no rows")
        out.write("trace_report.md", trace_report(rows))
        if opts["figures"]:
            figures += plotting.plot_traces(rows, out.out_dir)
    for p in figures:
        out.figure(p)


COMMANDS = {"gen-mdp": cmd_gen_mdp, "gen-data": cmd_gen_data, "fit-model": cmd_fit_model,
            "train": cmd_train, "verify-bounds": cmd_verify_bounds, "sweep": cmd_sweep,
            "study": cmd_study, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="milo", description="Tabular model-based offline imitation testbed.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--config", type=Path, help="JSON config (optional for report)")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="override the config's root seed")
    p.add_argument("--jobs", type=int, default=1, help="maximum parallel workers")
    return p


def _setup_logging():
    level = os.environ.get("MILO_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    if args.config is None and args.verb != "report":
        print(f"error: {args.verb} requires --config", file=sys.stderr)
        return 2
    text = ""
    try:
        if args.config is not None:
            doc, text = load_config(args.config)
        else:
            doc = {"version": 1}
        base = Path.cwd()
        out = Collector(args.out)
        try:
            COMMANDS[args.verb](doc, base, out, args.seed, args.jobs)
        except ConfigError as e:
            raise _config_error(args.config or Path("<no config>"), text, str(e)) from None
        out.manifest(args.verb, text, args.seed)
    except UsageError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (CellError, ModelError, ValueError, RuntimeError) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
