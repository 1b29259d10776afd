"""
History Manager - SQLite log of simulation runs
"""

import datetime
import json
import logging
import sqlite3
from contextlib import closing, contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

DEFAULT_DIR = ".flapwing"
DEFAULT_DB = "run_history.db"

_SUMMARY_COLUMNS = ("id, scenario_name, scenario_path, scenario_sha256, run_date, duration, dt, "
                    "rows, transitions, status, notes")


class HistoryManager:
    """Manages simulation run history using an SQLite database"""

    def __init__(self, db_path: str = None):
        """
        Initialize the history manager

        Args:
            db_path: Path to the SQLite database file. If None, uses ~/.flapwing/run_history.db
        """
        if db_path is None:
            run_dir = Path.home() / DEFAULT_DIR
            run_dir.mkdir(exist_ok=True)
            db_path = run_dir / DEFAULT_DB

        self.db_path = str(db_path)
        self.logger = logging.getLogger(__name__)
        self._init_database()

    @contextmanager
    def _connect(self) -> Iterator[sqlite3.Connection]:
        """Connection that commits on success, rolls back on error and is always closed."""
        with closing(sqlite3.connect(self.db_path)) as conn:
            conn.row_factory = sqlite3.Row
            with conn:
                yield conn

    def _init_database(self):
        try:
            with self._connect() as conn:
                cursor = conn.cursor()
                cursor.execute("""
                    CREATE TABLE IF NOT EXISTS runs (
                        id INTEGER PRIMARY KEY AUTOINCREMENT,
                        scenario_name TEXT NOT NULL,
                        scenario_path TEXT,
                        scenario_sha256 TEXT NOT NULL,
                        run_date TIMESTAMP NOT NULL,
                        duration REAL NOT NULL,
                        dt REAL NOT NULL,
                        rows INTEGER NOT NULL,
                        transitions INTEGER NOT NULL,
                        status TEXT NOT NULL,
                        summary TEXT NOT NULL,
                        output_path TEXT,
                        notes TEXT
                    )
                """)
                cursor.execute("CREATE INDEX IF NOT EXISTS idx_run_date ON runs(run_date DESC)")
                cursor.execute("CREATE INDEX IF NOT EXISTS idx_scenario_sha ON runs(scenario_sha256)")
            self.logger.info(f"Database initialized at {self.db_path}")
        except sqlite3.Error as e:
            self.logger.error(f"Failed to initialize database: {e}")
            raise

    def save_run(
        self,
        scenario_name: str,
        scenario_sha256: str,
        duration: float,
        dt: float,
        rows: int,
        transitions: int,
        status: str,
        summary: Dict[str, Any],
        scenario_path: str = None,
        output_path: str = None,
        notes: str = None
    ) -> int:
        """
        Save one finished run

        Args:
            scenario_name: Name of the scenario that was simulated
            scenario_sha256: Digest of the canonical scenario
            duration: Simulated time (s)
            dt: Integration step (s)
            rows: Number of recorded rows
            transitions: Number of flight-mode transitions
            status: 'ok' or 'aborted'
            summary: JSON-serializable run summary
            scenario_path: Optional scenario file path
            output_path: Optional path of the written time series
            notes: Optional notes

        Returns:
            The ID of the saved run
        """
        try:
            with self._connect() as conn:
                cursor = conn.cursor()
                cursor.execute("""
                    INSERT INTO runs (
                        scenario_name, scenario_path, scenario_sha256, run_date, duration, dt,
                        rows, transitions, status, summary, output_path, notes
                    ) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)
                """, (
                    scenario_name, scenario_path, scenario_sha256, datetime.datetime.now().isoformat(),
                    float(duration), float(dt), int(rows), int(transitions), status,
                    json.dumps(summary, default=str), output_path, notes
                ))
                run_id = cursor.lastrowid
            self.logger.info(f"Saved run #{run_id}: {scenario_name} ({status})")
            return run_id
        except sqlite3.Error as e:
            self.logger.error(f"Failed to save run: {e}")
            raise

    def get_recent_runs(self, limit: int = 50, scenario_sha256: str = None) -> List[Dict[str, Any]]:
        """Most recent runs first, without the stored summaries."""
        try:
            with self._connect() as conn:
                cursor = conn.cursor()
                if scenario_sha256:
                    cursor.execute(f"""
                        SELECT {_SUMMARY_COLUMNS} FROM runs
                        WHERE scenario_sha256 = ?
                        ORDER BY run_date DESC, id DESC LIMIT ?
                    """, (scenario_sha256, limit))
                else:
                    cursor.execute(f"""
                        SELECT {_SUMMARY_COLUMNS} FROM runs
                        ORDER BY run_date DESC, id DESC LIMIT ?
                    """, (limit,))
                return [dict(row) for row in cursor.fetchall()]
        except sqlite3.Error as e:
            self.logger.error(f"Failed to get recent runs: {e}")
            return []

    def load_run(self, run_id: int) -> Optional[Dict[str, Any]]:
        try:
            with self._connect() as conn:
                cursor = conn.cursor()
                cursor.execute("SELECT * FROM runs WHERE id = ?", (run_id,))
                row = cursor.fetchone()
            if not row:
                return None
            run = dict(row)
            run["summary"] = json.loads(run["summary"])
            return run
        except sqlite3.Error as e:
            self.logger.error(f"Failed to load run {run_id}: {e}")
            return None

    def delete_run(self, run_id: int) -> bool:
        try:
            with self._connect() as conn:
                cursor = conn.cursor()
                cursor.execute("DELETE FROM runs WHERE id = ?", (run_id,))
                deleted = cursor.rowcount > 0
            if deleted:
                self.logger.info(f"Deleted run #{run_id}")
            return deleted
        except sqlite3.Error as e:
            self.logger.error(f"Failed to delete run {run_id}: {e}")
            return False

    def clear_history(self, before_date: str = None) -> int:
        """
        Clear run history

        Args:
            before_date: Optional ISO date string. If provided, only deletes runs before this date

        Returns:
            Number of runs deleted
        """
        try:
            with self._connect() as conn:
                cursor = conn.cursor()
                if before_date:
                    cursor.execute("DELETE FROM runs WHERE run_date < ?", (before_date,))
                else:
                    cursor.execute("DELETE FROM runs")
                deleted = cursor.rowcount
            self.logger.info(f"Cleared {deleted} runs from history")
            return deleted
        except sqlite3.Error as e:
            self.logger.error(f"Failed to clear history: {e}")
            return 0

    def get_statistics(self) -> Dict[str, Any]:
        try:
            with self._connect() as conn:
                cursor = conn.cursor()
                cursor.execute("SELECT COUNT(*) FROM runs")
                total_runs = cursor.fetchone()[0]
                cursor.execute("SELECT status, COUNT(*) FROM runs GROUP BY status")
                by_status = {row[0]: row[1] for row in cursor.fetchall()}
                cursor.execute("SELECT SUM(duration) FROM runs")
                simulated = cursor.fetchone()[0] or 0.0
                cursor.execute("SELECT MIN(run_date), MAX(run_date) FROM runs")
                first_run, last_run = cursor.fetchone()
            return {
                'total_runs': total_runs,
                'runs_by_status': by_status,
                'simulated_seconds': simulated,
                'first_run': first_run,
                'last_run': last_run
            }
        except sqlite3.Error as e:
            self.logger.error(f"Failed to get statistics: {e}")
            return {}

    def search_runs(self, query: str) -> List[Dict[str, Any]]:
        """Runs whose scenario name or path contains ``query``."""
        try:
            with self._connect() as conn:
                cursor = conn.cursor()
                cursor.execute(f"""
                    SELECT {_SUMMARY_COLUMNS} FROM runs
                    WHERE scenario_name LIKE ? OR scenario_path LIKE ?
                    ORDER BY run_date DESC, id DESC LIMIT 50
                """, (f"%{query}%", f"%{query}%"))
                return [dict(row) for row in cursor.fetchall()]
        except sqlite3.Error as e:
            self.logger.error(f"Failed to search runs: {e}")
            return []
