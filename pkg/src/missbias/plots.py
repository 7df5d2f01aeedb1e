"""Optional SVG renders of the exported traces, densities and model mass.

Presentation only: every figure is drawn from data already written as CSV.
SVG metadata and element ids are pinned so reruns give identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_SVG_META = {"Date": None, "Creator": None}


def _save(fig, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "missbias", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def trace_figure(chains, name: str, path) -> None:
    fig, ax = plt.subplots(figsize=(7, 2.5))
    for c in chains:
        ax.plot(c.iteration, c.values(name), lw=0.3, label=f"chain {c.chain_id}")
    ax.set_xlabel("iteration")
    ax.set_ylabel(name)
    ax.legend(fontsize=6, loc="upper right")
    fig.tight_layout()
    _save(fig, Path(path))


def density_figure(x, dens, name: str, path) -> None:
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.plot(x, dens, lw=1.2)
    ax.set_xlim(x[0], x[-1])
    ax.set_ylim(0, 1.05 * max(dens))
    ax.set_xlabel(name)
    ax.set_ylabel("density")
    fig.tight_layout()
    _save(fig, Path(path))


def model_mass_figure(labels, freqs, path) -> None:
    fig, ax = plt.subplots(figsize=(4, 3))
    ax.bar(range(len(labels)), freqs)
    ax.set_xticks(range(len(labels)), labels, fontsize=7)
    ax.set_ylim(0, 1)
    ax.set_ylabel("posterior frequency")
    fig.tight_layout()
    _save(fig, Path(path))


def render_all(out_dir, chains, densities: dict, summary) -> None:
    out = Path(out_dir)
    for name in ("beta1", "beta2", "sigma2"):
        trace_figure(chains, name, out / f"trace_{name}.svg")
    for name, (x, d) in densities.items():
        density_figure(x, d, name, out / f"density_{name}.svg")
    model_mass_figure(summary.model_labels, summary.model_frequencies, out / "model_mass.svg")
