#!/usr/bin/env python3
"""Render the lab's CSV/JSON outputs into figures.

Standalone by design: this tool reads only the documented CSV/JSON
contract and never imports the simulation package, so the simulation
suite runs without it and vice versa.

    plot.py --kind convergence --csv converge.csv --report report.json --out fig.png
    plot.py --kind energy      --csv energy_series.csv --out energy.png
    plot.py --kind moments     --csv bound_check.csv   --out moments.png

The convergence slope annotation is recomputed here from the CSV with
the same mean-centered least-squares formula the harness uses and is
required to match report.json to 1e-9; a mismatch means the CSV and the
report are a stale pairing and the tool exits nonzero.

Exit codes: 0 success, 1 cross-check failure, 2 bad usage/schema.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

SCHEMAS = {
    "convergence": ["eps", "err_u_mean", "err_u_se", "err_delta_mean", "err_delta_se"],
    "energy": ["t", "energy", "residual"],
    "moments": ["eps", "t", "lhs_mean", "lhs_se", "bound", "verdict"],
}


class SchemaError(Exception):
    pass


def read_table(path: str, kind: str) -> list[dict]:
    expected = SCHEMAS[kind]
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    if header is None:
        raise SchemaError(f"{path} is empty (expected columns {expected})")
    if header != expected:
        missing = [c for c in expected if c not in header]
        extra = [c for c in header if c not in expected]
        raise SchemaError(
            f"{path} column mismatch: missing {missing}, unexpected {extra}"
        )
    if not rows:
        raise SchemaError(f"{path} has a header but no data rows")
    return rows


def fit_loglog(xs: list[float], ys: list[float]) -> tuple[float, float]:
    """Mean-centered least squares in natural logs; matches the harness."""
    lx = [math.log(x) for x in xs]
    ly = [math.log(y) for y in ys]
    mx = sum(lx) / len(lx)
    my = sum(ly) / len(ly)
    sxx = sum((a - mx) ** 2 for a in lx)
    sxy = sum((a - mx) * (b - my) for a, b in zip(lx, ly))
    slope = sxy / sxx
    return slope, my - slope * mx


def render_convergence(csv_path: str, report_path: str | None, out_path: str) -> None:
    rows = read_table(csv_path, "convergence")
    eps = [float(r["eps"]) for r in rows]
    err_u = [float(r["err_u_mean"]) for r in rows]
    err_d = [float(r["err_delta_mean"]) for r in rows]
    se_u = [float(r["err_u_se"]) for r in rows]
    if len(rows) < 2:
        raise SchemaError("convergence plot needs at least two ladder points")
    slope, intercept = fit_loglog(eps, err_u)

    alpha = None
    if report_path is not None:
        with open(report_path, encoding="utf-8") as fh:
            report = json.load(fh)
        ref = report.get("slope")
        if ref is None:
            raise SchemaError("report.json carries no fitted slope")
        if abs(ref - slope) > 1e-9:
            raise ValueError(
                f"slope recomputed from CSV ({slope:.12f}) does not match "
                f"report.json ({ref:.12f}); stale CSV/report pairing?"
            )
        alpha = report.get("alpha")

    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    ax.errorbar(eps, err_u, yerr=[3 * s for s in se_u], fmt="o", color="k",
                label="interior discrepancy", capsize=3)
    ax.loglog(eps, err_d, "s", mfc="none", color="tab:gray",
              label="boundary discrepancy")
    fit_line = [math.exp(intercept + slope * math.log(e)) for e in eps]
    ax.loglog(eps, fit_line, "k--", label=f"fit: slope {slope:.3f}")

    anchor = err_u[0]
    guides = [(1.0, "tab:blue")]
    if alpha is not None and alpha < 1.0:
        guides.append((alpha, "tab:red"))
    for p, color in guides:
        guide = [anchor * (e / eps[0]) ** p for e in eps]
        ax.loglog(eps, guide, ":", color=color, label=f"reference slope {p:g}")

    ax.set_xlabel("eps")
    ax.set_ylabel("space-time discrepancy")
    ax.set_title("Convergence to the limit system")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_energy(csv_path: str, out_path: str) -> None:
    rows = read_table(csv_path, "energy")
    t = [float(r["t"]) for r in rows]
    energy = [float(r["energy"]) for r in rows]
    resid = [float(r["residual"]) for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 5.5), sharex=True)
    ax1.plot(t, energy, "k-")
    ax1.set_ylabel("pseudo energy")
    ax1.grid(alpha=0.3)
    ax2.plot(t, resid, "-", color="tab:red")
    ax2.axhline(0.0, color="k", lw=0.8)
    ax2.set_xlabel("t")
    ax2.set_ylabel("balance residual")
    ax2.grid(alpha=0.3)
    fig.suptitle("Energy ledger")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_moments(csv_path: str, out_path: str) -> None:
    rows = read_table(csv_path, "moments")
    by_eps: dict[float, list[dict]] = {}
    for r in rows:
        by_eps.setdefault(float(r["eps"]), []).append(r)
    fig, ax = plt.subplots(figsize=(6.0, 4.5))
    colors = plt.cm.viridis([i / max(1, len(by_eps) - 1) for i in range(len(by_eps))])
    for color, (eps, recs) in zip(colors, sorted(by_eps.items(), reverse=True)):
        t = [float(r["t"]) for r in recs]
        lhs = [float(r["lhs_mean"]) for r in recs]
        bound = [float(r["bound"]) for r in recs]
        ax.plot(t, lhs, "o-", ms=3, color=color, label=f"moments, eps={eps:g}")
        ax.plot(t, bound, "--", color=color, alpha=0.7)
    ax.set_xlabel("t")
    ax.set_ylabel("E||v||^2 + E||theta||^2   (dashed: envelope)")
    ax.set_title("Velocity-pair moment envelope")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--kind", required=True,
                        choices=("convergence", "energy", "moments"))
    parser.add_argument("--csv", required=True)
    parser.add_argument("--report", default=None,
                        help="report.json for the convergence slope cross-check")
    parser.add_argument("--out", required=True)
    try:
        args = parser.parse_args(argv)
    except SystemExit:
        return 2

    try:
        if args.kind == "convergence":
            render_convergence(args.csv, args.report, args.out)
        elif args.kind == "energy":
            render_energy(args.csv, args.out)
        else:
            render_moments(args.csv, args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
