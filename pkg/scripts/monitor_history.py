#!/usr/bin/env python3
"""
Monitor the run history database
"""

import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from core.history_manager import HistoryManager


def monitor_history(db_path: str = None):
    hm = HistoryManager(db_path)

    print("Monitoring run history database...")
    print(f"Database: {hm.db_path}")
    print("=" * 70)

    last_count = 0
    try:
        while True:
            stats = hm.get_statistics()
            current_count = stats.get('total_runs', 0)

            if current_count != last_count:
                print(f"\n[{time.strftime('%H:%M:%S')}] Database updated!")
                print(f"Total runs: {current_count} ({stats.get('simulated_seconds', 0):.1f} s simulated)")

                print("\nRecent runs:")
                for run in hm.get_recent_runs(limit=3):
                    print(f"  #{run['id']}: {run['scenario_name']} | {run['status']} | "
                          f"{run['transitions']} transitions | {run['rows']} rows")
                print("-" * 70)
                last_count = current_count

            time.sleep(2)
    except KeyboardInterrupt:
        print("\n\nMonitoring stopped.")


if __name__ == "__main__":
    monitor_history(sys.argv[1] if len(sys.argv) > 1 else None)
