"""Render the standard figure families from ma-mimo CSV outputs.

Input is the sweep CSV (header ``scenario,scheme,sweep_var,sweep_value,
sum_rate,stderr,closed_form,iters,wall_ms,rate_user_*``) or, for the
convergence family, the trace CSV (``scenario,scheme,iter,sweep,antenna,
surrogate,objective``).  Output is a PNG at fixed DPI with a fixed style
per scheme, so re-rendering the same inputs is byte-stable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

DPI = 150

FAMILIES = ("convergence", "vs_power", "vs_kappa", "vs_region", "vs_users")

# columns each family actually reads
REQUIRED_COLUMNS = {
    "convergence": ("scheme", "iter", "surrogate", "objective"),
    "vs_power": ("scheme", "sweep_value", "sum_rate"),
    "vs_kappa": ("scheme", "sweep_value", "sum_rate"),
    "vs_region": ("scheme", "sweep_value", "sum_rate"),
    "vs_users": ("scheme", "sweep_value", "sum_rate"),
}

X_LABELS = {
    "convergence": "per-antenna update",
    "vs_power": "transmit power budget (W)",
    "vs_kappa": "Rician factor",
    "vs_region": "region size factor",
    "vs_users": "number of users",
}

# fixed scheme -> (color, marker, linestyle); stable across runs
DEFAULT_STYLES = {
    "ma_zf": ("#c1272d", "o", "-"),
    "ma_mrt": ("#0000a7", "s", "-"),
    "fpa_zf": ("#008176", "^", "--"),
    "fpa_mrt": ("#eecc16", "v", "--"),
    "fpa_zf_wf": ("#b3b3b3", "d", "-."),
    "fpa_wmmse": ("#5e3c99", "*", ":"),
}
FALLBACK_STYLE = ("#404040", "x", "-")


class SchemaError(ValueError):
    """Input CSV does not carry the columns a figure family needs."""


@dataclass
class PlotSpec:
    csv_paths: list[str]
    family: str
    out_path: str
    style_map: dict[str, tuple[str, str, str]] = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise SchemaError(
                f"unknown figure family {self.family!r}; expected one of {FAMILIES}"
            )


def read_rows(path: str) -> tuple[list[str], list[dict[str, str]]]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, no header row")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return list(reader.fieldnames), rows


def _check_columns(path: str, fields: list[str], family: str) -> None:
    missing = [c for c in REQUIRED_COLUMNS[family] if c not in fields]
    if missing:
        raise SchemaError(
            f"{path}: missing columns for family {family!r}: {', '.join(missing)}"
        )


def _style_for(spec: PlotSpec, scheme: str) -> tuple[str, str, str]:
    if scheme in spec.style_map:
        return spec.style_map[scheme]
    return DEFAULT_STYLES.get(scheme, FALLBACK_STYLE)


def _schemes_in(rows: list[dict[str, str]]) -> list[str]:
    seen: list[str] = []
    for row in rows:
        if row["scheme"] not in seen:
            seen.append(row["scheme"])
    return seen


def _render_convergence(spec: PlotSpec, ax) -> None:
    for path in spec.csv_paths:
        fields, rows = read_rows(path)
        _check_columns(path, fields, "convergence")
        for scheme in _schemes_in(rows):
            sub = [r for r in rows if r["scheme"] == scheme]
            its = [int(r["iter"]) for r in sub]
            obj = [float(r["objective"]) for r in sub]
            sur = [float(r["surrogate"]) for r in sub]
            color, marker, _ = _style_for(spec, scheme)
            ax.plot(its, obj, color=color, linestyle="-", label=f"{scheme} objective")
            ax.plot(
                its,
                sur,
                color=color,
                linestyle=":",
                alpha=0.7,
                label=f"{scheme} surrogate",
            )
            ax.annotate(
                f"{len(its)} updates",
                xy=(its[-1], obj[-1]),
                xytext=(-6, -12),
                textcoords="offset points",
                ha="right",
                fontsize=8,
                color=color,
            )
    ax.set_ylabel("ergodic sum rate objective (bits/s/Hz)")


def _render_sweep(spec: PlotSpec, ax) -> None:
    for path in spec.csv_paths:
        fields, rows = read_rows(path)
        _check_columns(path, fields, spec.family)
        has_stderr = "stderr" in fields
        has_closed = "closed_form" in fields
        for scheme in _schemes_in(rows):
            sub = sorted(
                (r for r in rows if r["scheme"] == scheme),
                key=lambda r: float(r["sweep_value"] or "nan"),
            )
            x = [float(r["sweep_value"]) for r in sub]
            y = [float(r["sum_rate"]) for r in sub]
            color, marker, linestyle = _style_for(spec, scheme)
            if has_stderr and any(r["stderr"] for r in sub):
                err = [3.0 * float(r["stderr"] or 0.0) for r in sub]
                ax.errorbar(
                    x,
                    y,
                    yerr=err,
                    color=color,
                    marker=marker,
                    linestyle=linestyle,
                    capsize=2,
                    label=scheme,
                )
            else:
                ax.plot(x, y, color=color, marker=marker, linestyle=linestyle, label=scheme)
            if has_closed and any(r["closed_form"] for r in sub):
                xc = [float(r["sweep_value"]) for r in sub if r["closed_form"]]
                yc = [float(r["closed_form"]) for r in sub if r["closed_form"]]
                ax.plot(
                    xc,
                    yc,
                    color=color,
                    linestyle=":",
                    alpha=0.7,
                    label=f"{scheme} closed form",
                )
    ax.set_ylabel("ergodic sum rate (bits/s/Hz)")


def render(spec: PlotSpec) -> str:
    """Render one figure family to PNG; returns the output path."""
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    try:
        if spec.family == "convergence":
            _render_convergence(spec, ax)
        else:
            _render_sweep(spec, ax)
        ax.set_xlabel(X_LABELS[spec.family])
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        fig.savefig(
            spec.out_path, dpi=DPI, metadata={"Software": "ma-figures"}
        )
    finally:
        plt.close(fig)
    return spec.out_path
