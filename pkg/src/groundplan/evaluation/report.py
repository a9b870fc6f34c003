"""Summary tables and per-task rows for finished runs."""
from __future__ import annotations

import csv
import io
from collections.abc import Sequence

from groundplan.evaluation.harness import RunRecord

COLUMNS = ("Method", "Executability", "LCS", "Avg. Length", "Grounded Success")


def summary_rows(records: Sequence[RunRecord]) -> list[list[str]]:
    rows = []
    for r in records:
        gs = f"{100 * r.grounded_success:.2f}%" + (" (proxy)" if r.uses_proxy_labels else "")
        rows.append([
            r.label or r.fingerprint,
            f"{100 * r.executability:.2f}%",
            f"{100 * r.lcs:.2f}%",
            f"{r.mean_length:.2f}",
            gs,
        ])
    return rows


def format_table(records: Sequence[RunRecord]) -> str:
    rows = [list(COLUMNS)] + summary_rows(records)
    widths = [max(len(row[i]) for row in rows) for i in range(len(COLUMNS))]
    lines = []
    for n, row in enumerate(rows):
        cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:], widths[1:])]
        lines.append("  ".join(cells))
        if n == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def task_rows_tsv(records: Sequence[RunRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, delimiter="\t", lineterminator="\n")
    writer.writerow(["run", "task", "executability", "lcs", "length", "termination", "error"])
    for r in records:
        for row in r.rows:
            writer.writerow([
                r.label or r.fingerprint, row.task, f"{row.executability:.4f}",
                f"{row.lcs:.4f}", row.length, row.termination_reason, row.error or "",
            ])
    return out.getvalue()
