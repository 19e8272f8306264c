"""Turn a metrics file into accuracy/OOD/compactness tables and static plots."""

from __future__ import annotations

import csv
import io
from collections import OrderedDict
from pathlib import Path

import numpy as np

from dfa.harness import metrics

NO_DATA = "_no data_"


def _model_key(rec) -> str:
    return rec.fields.get("model", rec.fields.get("model_hash", rec.config_hash))


def robustness_rows(records) -> list[dict]:
    """One row per model: clean, per-attack accuracies, mean and population std over attacks."""
    models: "OrderedDict[str, dict]" = OrderedDict()
    for rec in records:
        if rec.kind != "attack":
            continue
        row = models.setdefault(_model_key(rec), {"clean": None, "attacks": OrderedDict()})
        name = rec.fields["attack"]
        if name == "clean":
            row["clean"] = rec.fields["accuracy"]
        else:
            row["attacks"][name] = rec.fields["accuracy"]
    out = []
    for model, row in models.items():
        values = np.array(list(row["attacks"].values()), dtype=np.float64)
        out.append({"model": model, "clean": row["clean"], "attacks": row["attacks"],
                    "mean": float(values.mean()) if len(values) else None,
                    "std": float(values.std()) if len(values) else None})
    return out


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.2f}"


def robustness_markdown(rows) -> str:
    if not rows:
        return f"# Robust accuracy (%)\n\n{NO_DATA}\n"
    columns = list(OrderedDict.fromkeys(name for r in rows for name in r["attacks"]))
    lines = ["# Robust accuracy (%)", "",
             "| Model | Clean | " + " | ".join(columns) + " | Mean ± S.d. |",
             "|---" * (len(columns) + 3) + "|"]
    for r in rows:
        cells = [_fmt(r["attacks"].get(c)) for c in columns]
        ms = "-" if r["mean"] is None else f"{r['mean']:.2f} ± {r['std']:.2f}"
        lines.append(f"| {r['model']} | {_fmt(r['clean'])} | " + " | ".join(cells) + f" | {ms} |")
    return "\n".join(lines) + "\n"


def robustness_csv(rows) -> str:
    columns = list(OrderedDict.fromkeys(name for r in rows for name in r["attacks"]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "clean", *columns, "mean", "std"])
    for r in rows:
        w.writerow([r["model"], r["clean"], *[r["attacks"].get(c) for c in columns],
                    r["mean"], r["std"]])
    return buf.getvalue()


def ood_markdown(records) -> str:
    rows = [r for r in records if r.kind == "ood"]
    if not rows:
        return f"# OOD detection\n\n{NO_DATA}\n"
    lines = ["# OOD detection", "", "| Model | ID | OOD | Best F1 | Threshold |",
             "|---|---|---|---|---|"]
    for r in rows:
        f = r.fields
        lines.append(f"| {_model_key(r)} | {f.get('id_data', '-')} | {f.get('ood_data', '-')} | "
                     f"{f['best_f1']:.4f} | {f['best_threshold']:.4f} |")
    return "\n".join(lines) + "\n"


def compactness_rows(records) -> list[tuple[str, list[float], float, float | None]]:
    out = []
    for r in records:
        if r.kind != "analysis" or "std_total" not in r.fields:
            continue
        per = [r.fields[k] for k in sorted((k for k in r.fields if k.startswith("std_class_")
                                            and k != "std_class_mean"),
                                           key=lambda k: int(k.rsplit("_", 1)[1]))]
        out.append((_model_key(r), per, r.fields["std_total"], r.fields.get("residual_mean")))
    return out


def compactness_markdown(rows) -> str:
    if not rows:
        return f"# Embedding compactness\n\n{NO_DATA}\n"
    n = max(len(p) for _, p, _, _ in rows)
    lines = ["# Embedding compactness (std)", "",
             "| Model | " + " | ".join(f"class {k}" for k in range(n))
             + " | Total | Mixing residual |", "|---" * (n + 3) + "|"]
    for model, per, total, resid in rows:
        lines.append(f"| {model} | " + " | ".join(f"{v:.4f}" for v in per)
                     + f" | {total:.4f} | {'-' if resid is None else f'{resid:.4f}'} |")
    return "\n".join(lines) + "\n"


def plot_compactness(rows, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n = max(len(p) for _, p, _, _ in rows)
    labels = [str(k) for k in range(n)] + ["Total"]
    width = 0.8 / len(rows)
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for i, (model, per, total, _) in enumerate(rows):
        xs = np.arange(n + 1) + i * width
        ax.bar(xs, list(per) + [total], width, label=model)
    ax.set_xticks(np.arange(n + 1) + width * (len(rows) - 1) / 2, labels)
    ax.set_ylabel("std of embeddings")
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_score_histogram(scores, is_id, threshold, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 3))
    bins = np.linspace(0, np.pi / 2, 40)
    ax.hist(scores[is_id], bins=bins, alpha=0.6, label="ID")
    ax.hist(scores[~is_id], bins=bins, alpha=0.6, label="OOD")
    if np.isfinite(threshold):
        ax.axvline(threshold, color="k", ls="--", lw=1)
    ax.set_xlabel("min angle to class direction (rad)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def write_report(metrics_path, out_dir, plot: bool = True) -> list[Path]:
    records = metrics.read(metrics_path) if Path(metrics_path).exists() else []
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = robustness_rows(records)
    comp = compactness_rows(records)
    files = {
        "robustness.md": robustness_markdown(rows),
        "robustness.csv": robustness_csv(rows),
        "ood.md": ood_markdown(records),
        "compactness.md": compactness_markdown(comp),
    }
    written = []
    for name, text in files.items():
        (out / name).write_text(text)
        written.append(out / name)
    if plot and comp:
        plot_compactness(comp, out / "compactness.png")
        written.append(out / "compactness.png")
    return written
