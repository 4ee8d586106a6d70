"""Cross-run comparison of final metrics."""

from __future__ import annotations

import csv
import json
from pathlib import Path

__all__ = ["load_run_summary", "cmd_compare"]


def load_run_summary(run_dir) -> dict:
    run_dir = Path(run_dir)
    with open(run_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    with open(run_dir / "metrics.csv") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{run_dir} has no completed evaluation rows")
    final = {k: float(v) for k, v in rows[-1].items()}
    cfg = manifest["config"]
    return {
        "name": run_dir.name,
        "mode": cfg["env"]["mode"],
        "agent": cfg["agent"],
        "n_devices": cfg["env"]["n_devices"],
        "rounds": cfg["env"]["rounds"],
        "final": final,
    }


def _exchange_cell(summary) -> str:
    # full-model mode re-ships everything each round; the exchange counter is
    # not a meaningful metric there
    if summary["mode"] == "fedft":
        return "n/a"
    return f"{summary['final']['exchanges']:.4g}"


def cmd_compare(run_dirs, out_path=None) -> dict:
    """Emit per-run final metrics and pairwise ratios/deltas. Refuses runs
    with mismatched population size or episode length."""
    summaries = [load_run_summary(d) for d in run_dirs]
    base = summaries[0]
    for s in summaries[1:]:
        if s["n_devices"] != base["n_devices"] or s["rounds"] != base["rounds"]:
            raise ValueError(
                f"runs are not comparable: {s['name']} has "
                f"N={s['n_devices']}, T={s['rounds']} but {base['name']} has "
                f"N={base['n_devices']}, T={base['rounds']}")

    lines = []
    header = (f"{'run':24} {'mode':8} {'agent':7} {'reward':>10} "
              f"{'delay(s)':>10} {'log_delay':>10} {'perplexity':>10} "
              f"{'exch/10rd':>10}")
    lines.append(header)
    for s in summaries:
        f = s["final"]
        lines.append(
            f"{s['name'][:24]:24} {s['mode']:8} {s['agent']:7} "
            f"{f['eval_reward']:>10.2f} {f['mean_delay']:>10.4f} "
            f"{f['log_delay']:>10.3f} {f['perplexity']:>10.3f} "
            f"{_exchange_cell(s):>10}")

    pairs = []
    for i, a in enumerate(summaries):
        for b in summaries[i:]:
            fa, fb = a["final"], b["final"]
            delay_ratio = (fa["mean_delay"] / fb["mean_delay"]
                           if fb["mean_delay"] > 0 else float("inf"))
            pairs.append({
                "run_a": a["name"],
                "run_b": b["name"],
                "delay_ratio": delay_ratio,
                "exchanges_a": _exchange_cell(a),
                "exchanges_b": _exchange_cell(b),
                "perplexity_delta": fa["perplexity"] - fb["perplexity"],
                "reward_delta": fa["eval_reward"] - fb["eval_reward"],
            })
    lines.append("")
    lines.append(f"{'pair':40} {'delay_ratio':>12} {'d_perplexity':>13} "
                 f"{'d_reward':>10}")
    for p in pairs:
        lines.append(
            f"{p['run_a'][:19]:19} / {p['run_b'][:18]:18} "
            f"{p['delay_ratio']:>12.4f} {p['perplexity_delta']:>13.4f} "
            f"{p['reward_delta']:>10.2f}")
    text = "\n".join(lines)

    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(pairs[0].keys()))
            writer.writeheader()
            for p in pairs:
                writer.writerow(p)
    return {"summaries": summaries, "pairs": pairs, "text": text}
