"""Figures written next to the delimited (TSV) outputs of the CLI."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from captionforge.metrics.report import METRIC_KEYS, MetricReport  # noqa: E402

# fixed metadata keeps reruns byte-identical
_PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def write_curve_tsv(path, rows, header=("phase", "epoch", "value", "lr")) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(header) + "\n")
        for row in rows:
            f.write("\t".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def plot_curve(values, path, ylabel: str, title: str = "", first_epoch: int = 1):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    epochs = list(range(first_epoch, first_epoch + len(values)))
    ax.plot(epochs, values, marker="o", color="tab:blue", lw=1.5)
    ax.set_xlabel("epoch")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    _save(fig, path)


def write_report_tsv(path, report: MetricReport) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("id\t" + "\t".join(METRIC_KEYS) + "\n")
        for key in sorted(report.per_sentence):
            row = report.per_sentence[key]
            f.write(key + "\t" + "\t".join(repr(row[k]) for k in METRIC_KEYS) + "\n")
        f.write("__corpus__\t" + "\t".join(repr(report.corpus[k]) for k in METRIC_KEYS) + "\n")


def plot_report(report: MetricReport, path):
    """Corpus scores as bars, plus the per-sentence CIDEr distribution."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.4))
    names = [k for k in METRIC_KEYS if k != "CIDEr"]
    ax1.bar(names, [report.corpus[k] for k in names], color="tab:gray")
    ax1.set_ylim(0, 1)
    ax1.set_title(f"corpus scores (CIDEr = {report.corpus['CIDEr']:.3f})")
    ax1.tick_params(axis="x", rotation=45)
    ciders = [row["CIDEr"] for row in report.per_sentence.values()]
    ax2.hist(ciders, bins=20, range=(0, 10), color="tab:blue")
    ax2.set_xlabel("per-sentence CIDEr")
    ax2.set_ylabel("count")
    _save(fig, path)
