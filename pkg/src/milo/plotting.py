"""Small PNG summaries written by ``milo report``.  The CSV files stay the
source of truth; figures are a convenience and are not byte-reproducible."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _label(row: dict) -> str:
    lab = row["learner"]
    if row.get("variant"):
        lab += f" ({row['variant']})"
    if row.get("profile"):
        lab += f" [{row['profile']}]"
    return lab


def plot_scores(aggregates: list[dict], out_dir: Path) -> list[Path]:
    """One figure per MDP: mean score (+/- std) against ``M`` for every series."""
    by_mdp = defaultdict(lambda: defaultdict(list))
    for a in aggregates:
        by_mdp[a["mdp_id"]][_label(a)].append((a["M"], a["mean"], a["std"]))
    paths = []
    for mdp_id in sorted(by_mdp):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for label in sorted(by_mdp[mdp_id]):
            pts = sorted(by_mdp[mdp_id][label])
            ms = [p[0] for p in pts]
            if len(ms) == 1:
                ax.errorbar([label], [pts[0][1]], yerr=[pts[0][2]], fmt="o", capsize=3)
            else:
                ax.errorbar(ms, [p[1] for p in pts], yerr=[p[2] for p in pts], marker="o",
                            capsize=3, label=label)
        if any(len(v) > 1 for v in by_mdp[mdp_id].values()):
            ax.set_xlabel("M")
            ax.legend(fontsize=7)
        else:
            ax.tick_params(axis="x", labelrotation=30, labelsize=7)
        ax.set_ylabel("normalized score")
        ax.set_title(mdp_id, fontsize=9)
        fig.tight_layout()
        path = out_dir / f"scores_{_safe(mdp_id)}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths


def plot_traces(rows: list[tuple], out_dir: Path) -> list[Path]:
    """One figure per MDP: mean trace with a +/- std band per policy tag."""
    by_mdp = defaultdict(lambda: defaultdict(list))
    for mdp_id, tag, t, mean, std in rows:
        by_mdp[mdp_id][tag].append((t, mean, std))
    paths = []
    for mdp_id in sorted(by_mdp):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for tag in sorted(by_mdp[mdp_id]):
            pts = sorted(by_mdp[mdp_id][tag])
            t = [p[0] for p in pts]
            m = [p[1] for p in pts]
            s = [p[2] for p in pts]
            ax.plot(t, m, label=tag)
            ax.fill_between(t, [a - b for a, b in zip(m, s)], [a + b for a, b in zip(m, s)], alpha=0.2)
        ax.set_xlabel("t")
        ax.set_ylabel("standardized uncertainty")
        ax.set_title(mdp_id, fontsize=9)
        ax.legend(fontsize=7)
        fig.tight_layout()
        path = out_dir / f"trace_{_safe(mdp_id)}.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        paths.append(path)
    return paths


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)
