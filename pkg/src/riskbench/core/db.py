from __future__ import annotations

import sqlite3
from pathlib import Path

from riskbench.core.models import BenchRecord, Strategy
from riskbench.core.utils import safe_uuid, utc_now_iso


SCHEMA_VERSION = 2


class BenchDatabase:
    """Ledger of benchmark runs, one row per dispatch run."""

    def __init__(self, db_path: Path) -> None:
        db_path.parent.mkdir(parents=True, exist_ok=True)
        self.db_path = db_path
        self.conn = sqlite3.connect(db_path, timeout=60)
        self.conn.row_factory = sqlite3.Row
        self.conn.execute("PRAGMA journal_mode = WAL")
        self.conn.execute("PRAGMA synchronous = NORMAL")
        self.conn.execute("PRAGMA busy_timeout = 60000")
        self._migrate()

    def close(self) -> None:
        self.conn.close()

    def _migrate(self) -> None:
        cur = self.conn.execute("PRAGMA user_version")
        version = cur.fetchone()[0]
        if version < 1:
            self.conn.executescript(
                """
                CREATE TABLE IF NOT EXISTS bench_runs (
                    id TEXT PRIMARY KEY,
                    sweep_id TEXT NOT NULL,
                    strategy TEXT NOT NULL,
                    n_cpus INTEGER NOT NULL,
                    job_count INTEGER NOT NULL,
                    job_set_digest TEXT NOT NULL,
                    repeat_index INTEGER NOT NULL DEFAULT 0,
                    status TEXT NOT NULL DEFAULT 'running',
                    wall_time REAL,
                    error_message TEXT,
                    started_at TEXT NOT NULL,
                    finished_at TEXT
                );

                CREATE INDEX IF NOT EXISTS idx_bench_runs_sweep
                    ON bench_runs(sweep_id, strategy, n_cpus);
                """
            )

        if version < 2:
            cur = self.conn.execute("PRAGMA table_info(bench_runs)")
            existing = {row["name"] for row in cur.fetchall()}
            if "cache_state" not in existing:
                self.conn.execute("ALTER TABLE bench_runs ADD COLUMN cache_state TEXT NOT NULL DEFAULT 'n/a'")

        if version < SCHEMA_VERSION:
            self.conn.execute(f"PRAGMA user_version = {SCHEMA_VERSION}")
            self.conn.commit()

    def start_run(
        self,
        sweep_id: str,
        strategy: Strategy,
        n_cpus: int,
        job_count: int,
        job_set_digest: str,
        *,
        repeat_index: int = 0,
        cache_state: str = "n/a",
        run_id: str | None = None,
    ) -> str:
        run_id = run_id or safe_uuid()
        self.conn.execute(
            """
            INSERT INTO bench_runs (
                id, sweep_id, strategy, n_cpus, job_count, job_set_digest, repeat_index,
                status, cache_state, started_at
            )
            VALUES (?, ?, ?, ?, ?, ?, ?, 'running', ?, ?)
            """,
            (run_id, sweep_id, strategy.value, n_cpus, job_count, job_set_digest, repeat_index, cache_state, utc_now_iso()),
        )
        self.conn.commit()
        return run_id

    def finish_run(
        self,
        run_id: str,
        status: str,
        wall_time: float | None = None,
        error_message: str | None = None,
    ) -> None:
        self.conn.execute(
            "UPDATE bench_runs SET status = ?, wall_time = ?, error_message = ?, finished_at = ? WHERE id = ?",
            (status, wall_time, error_message, utc_now_iso(), run_id),
        )
        self.conn.commit()

    def get_run(self, run_id: str) -> dict | None:
        cur = self.conn.execute("SELECT * FROM bench_runs WHERE id = ?", (run_id,))
        row = cur.fetchone()
        return dict(row) if row else None

    def latest_sweep_id(self) -> str | None:
        cur = self.conn.execute("SELECT sweep_id FROM bench_runs ORDER BY started_at DESC, rowid DESC LIMIT 1")
        row = cur.fetchone()
        return row["sweep_id"] if row else None

    def list_records(self, sweep_id: str | None = None) -> list[BenchRecord]:
        """Finished runs as records; runs still marked running are skipped."""
        query = "SELECT * FROM bench_runs WHERE status != 'running'"
        params: tuple = ()
        if sweep_id:
            query += " AND sweep_id = ?"
            params = (sweep_id,)
        cur = self.conn.execute(query + " ORDER BY rowid", params)
        return [
            BenchRecord(
                n_cpus=row["n_cpus"],
                strategy=Strategy(row["strategy"]),
                wall_time=row["wall_time"] or 0.0,
                job_count=row["job_count"],
                run_id=row["id"],
                repeat=row["repeat_index"],
                cache_state=row["cache_state"],
                status=row["status"],
                job_set_digest=row["job_set_digest"],
                error_message=row["error_message"],
            )
            for row in cur.fetchall()
        ]
