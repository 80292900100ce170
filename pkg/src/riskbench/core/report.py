from __future__ import annotations

import csv
import io

from riskbench.core.models import RecordStats, SpeedupRow, SpeedupTable, Strategy

CSV_COLUMNS = ["n_cpus", "strategy", "time_s", "ratio"]

NORMALIZATION_NOTE = (
    "Ratios are T_base * (n_base - 1) / ((n - 1) * T), normalized by worker count "
    "(number of CPUs minus the master). Dividing by the CPU count n instead gives smaller "
    "ratios; the published cluster tables divide by n - 1 and this report does the same."
)


def _ordered(tables: list[SpeedupTable]) -> list[SpeedupTable]:
    order = list(Strategy)
    return sorted(tables, key=lambda table: order.index(table.strategy))


def render_csv(tables: list[SpeedupTable]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for table in _ordered(tables):
        for row in table.rows:
            writer.writerow([row.n_cpus, table.strategy.value, repr(row.time), repr(row.ratio)])
    return buffer.getvalue()


def parse_csv(text: str) -> dict[Strategy, list[SpeedupRow]]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != CSV_COLUMNS:
        raise ValueError(f"Unexpected CSV header {reader.fieldnames}.")
    parsed: dict[Strategy, list[SpeedupRow]] = {}
    for record in reader:
        parsed.setdefault(Strategy(record["strategy"]), []).append(
            SpeedupRow(n_cpus=int(record["n_cpus"]), time=float(record["time_s"]), ratio=float(record["ratio"]))
        )
    return parsed


def _cell(value: float | None, digits: int) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def render_markdown(tables: list[SpeedupTable], stats: list[RecordStats] | None = None) -> str:
    tables = _ordered(tables)
    lines = ["# Speedup report", ""]
    if tables:
        header = ["number of CPUs"]
        for table in tables:
            header += [f"{table.strategy.label} time (s)", f"{table.strategy.label} ratio"]
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "---|" * len(header))
        lookup = {(table.strategy, row.n_cpus): row for table in tables for row in table.rows}
        counts = sorted({row.n_cpus for table in tables for row in table.rows})
        for n_cpus in counts:
            cells = [str(n_cpus)]
            for table in tables:
                row = lookup.get((table.strategy, n_cpus))
                cells += [_cell(row.time if row else None, 4), _cell(row.ratio if row else None, 6)]
            lines.append("| " + " | ".join(cells) + " |")
    else:
        lines.append("No successful runs.")

    if stats:
        lines += ["", "## Runs", ""]
        lines.append("| strategy | number of CPUs | runs | failed | min (s) | mean (s) | max (s) |")
        lines.append("|---|---|---|---|---|---|---|")
        for item in stats:
            lines.append(
                f"| {item.strategy.label} | {item.n_cpus} | {item.runs} | {item.failed} | "
                f"{_cell(item.min_time, 4)} | {_cell(item.mean_time, 4)} | {_cell(item.max_time, 4)} |"
            )

    lines += ["", f"_{NORMALIZATION_NOTE}_", ""]
    return "\n".join(lines)
