import logging
import queue
import threading
import time
import uuid
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from core.errors import FlapwingError

logger = logging.getLogger(__name__)


class TaskStatus(Enum):
    PENDING = "pending"
    RUNNING = "running"
    COMPLETED = "completed"
    CANCELLED = "cancelled"
    ERROR = "error"


FINISHED = (TaskStatus.COMPLETED, TaskStatus.CANCELLED, TaskStatus.ERROR)


class TaskCancelled(FlapwingError):
    pass


@dataclass
class SimulationTask:
    id: str
    name: str
    target: str  # scenario file path
    status: TaskStatus
    progress: float  # 0.0 to 1.0
    rows_written: int
    total_rows: int
    results: Dict[str, Any]
    error_message: Optional[str]
    start_time: Optional[float]
    end_time: Optional[float]
    thread: Optional[threading.Thread]
    cancel_flag: threading.Event

    def __init__(self, target: str, name: Optional[str] = None):
        self.id = str(uuid.uuid4())[:8]
        self.target = target
        self.name = name or f"Run {Path(target).stem}"
        self.status = TaskStatus.PENDING
        self.progress = 0.0
        self.rows_written = 0
        self.total_rows = 0
        self.results = {}
        self.error_message = None
        self.start_time = None
        self.end_time = None
        self.thread = None
        self.cancel_flag = threading.Event()

    def get_elapsed_time(self) -> float:
        if not self.start_time:
            return 0.0
        end = self.end_time or time.time()
        return end - self.start_time

    def get_summary(self) -> Dict[str, Any]:
        return {
            'id': self.id,
            'name': self.name,
            'target': self.target,
            'status': self.status.value,
            'progress': self.progress,
            'rows_written': self.rows_written,
            'total_rows': self.total_rows,
            'elapsed_time': self.get_elapsed_time(),
            'transitions': len(self.results.get('transitions', [])),
            'error': self.error_message
        }


class ProgressWriter:
    """
    Row writer that forwards to an optional inner writer, reports progress
    on the task and stops the run once the task is cancelled.
    """

    def __init__(self, manager: "TaskManager", task: SimulationTask, inner=None):
        self.manager = manager
        self.task = task
        self.inner = inner

    def write_header(self, columns):
        if self.inner is not None:
            self.inner.write_header(columns)

    def write_row(self, row):
        if self.task.cancel_flag.is_set():
            raise TaskCancelled(f"task {self.task.id} cancelled")
        if self.inner is not None:
            self.inner.write_row(row)
        self.manager.update_task_progress(self.task.id, self.task.rows_written + 1, self.task.total_rows)

    def write_error(self, error):
        if self.inner is not None:
            self.inner.write_error(error)


class TaskManager:
    def __init__(self, max_concurrent: int = 3):
        self.max_concurrent = max_concurrent
        self.tasks: Dict[str, SimulationTask] = {}
        self.task_queue: queue.Queue = queue.Queue()
        self.lock = threading.Lock()
        self._running = True
        self._worker_thread = None

    def start(self):
        if not self._worker_thread or not self._worker_thread.is_alive():
            self._running = True
            self._worker_thread = threading.Thread(target=self._worker_loop, daemon=True)
            self._worker_thread.start()

    def stop(self):
        self._running = False
        if self._worker_thread:
            self._worker_thread.join(timeout=5)

    def create_task(self, target: str, name: Optional[str] = None,
                    run_callback: Optional[Callable[[SimulationTask], Any]] = None) -> str:
        task = SimulationTask(target, name)
        with self.lock:
            self.tasks[task.id] = task
        self.task_queue.put((task.id, run_callback))
        return task.id

    def cancel_task(self, task_id: str) -> bool:
        with self.lock:
            task = self.tasks.get(task_id)
            if task:
                task.cancel_flag.set()
                if task.status == TaskStatus.PENDING:
                    task.status = TaskStatus.CANCELLED
                return True
        return False

    def get_task(self, task_id: str) -> Optional[SimulationTask]:
        with self.lock:
            return self.tasks.get(task_id)

    def get_all_tasks(self) -> List[SimulationTask]:
        with self.lock:
            return list(self.tasks.values())

    def get_running_count(self) -> int:
        with self.lock:
            return sum(1 for t in self.tasks.values() if t.status == TaskStatus.RUNNING)

    def remove_task(self, task_id: str) -> bool:
        with self.lock:
            task = self.tasks.get(task_id)
            if task and task.status in FINISHED:
                del self.tasks[task_id]
                return True
        return False

    def wait_all(self, timeout: Optional[float] = None, poll: float = 0.05) -> bool:
        """Block until every task has finished. Returns False on timeout."""
        deadline = None if timeout is None else time.time() + timeout
        while True:
            with self.lock:
                done = all(t.status in FINISHED for t in self.tasks.values())
            if done:
                return True
            if deadline is not None and time.time() > deadline:
                return False
            time.sleep(poll)

    def _worker_loop(self):
        while self._running:
            try:
                if self.get_running_count() >= self.max_concurrent:
                    time.sleep(0.05)
                    continue

                try:
                    task_id, callback = self.task_queue.get(timeout=0.2)
                except queue.Empty:
                    continue

                with self.lock:
                    task = self.tasks.get(task_id)
                    if not task or task.status != TaskStatus.PENDING:
                        continue
                    task.status = TaskStatus.RUNNING
                    task.start_time = time.time()

                thread = threading.Thread(target=self._run_task, args=(task_id, callback), daemon=True)
                task.thread = thread
                thread.start()

            except Exception as e:
                logger.error(f"Worker loop error: {e}")
                time.sleep(0.5)

    def _run_task(self, task_id: str, callback: Optional[Callable]):
        task = self.get_task(task_id)
        if not task:
            return

        try:
            if callback:
                callback(task)
            with self.lock:
                if task.status == TaskStatus.RUNNING:
                    task.status = TaskStatus.COMPLETED
                    task.end_time = time.time()

        except TaskCancelled:
            with self.lock:
                task.status = TaskStatus.CANCELLED
                task.end_time = time.time()
            logger.info(f"Task {task.id} cancelled")

        except Exception as e:
            with self.lock:
                task.status = TaskStatus.ERROR
                task.error_message = str(e)
                task.end_time = time.time()
            logger.error(f"Task {task.id} ({task.name}) failed: {e}")

    def update_task_progress(self, task_id: str, rows_written: int, total_rows: int,
                             results: Optional[Dict] = None):
        with self.lock:
            task = self.tasks.get(task_id)
            if task:
                task.rows_written = rows_written
                task.total_rows = total_rows
                task.progress = min(1.0, rows_written / total_rows) if total_rows > 0 else 0.0
                if results:
                    task.results = results


def simulation_callback(manager: TaskManager, out_dir: Optional[Path] = None) -> Callable[[SimulationTask], Any]:
    """
    Callback that parses ``task.target``, runs it and stores the flight
    summary on the task. With ``out_dir`` each run also writes
    ``<scenario name>.csv`` there.
    """
    from core.analysis import summarize_flight
    from core.exporter import Exporter
    from core.scenario import parse_scenario

    def run(task: SimulationTask):
        scenario = parse_scenario(task.target)
        simulation = scenario.build_simulation()
        config = simulation.config
        task.total_rows = config.steps // config.record_stride + 1
        handle, inner = None, None
        if out_dir is not None:
            handle, inner = Exporter().open_series(Path(out_dir) / f"{scenario.name}.csv", scenario, config.dt)
        try:
            result = simulation.run(ProgressWriter(manager, task, inner))
        finally:
            if handle is not None:
                handle.close()
        summary = summarize_flight(result)
        manager.update_task_progress(task.id, len(result.rows), task.total_rows, {
            'scenario_sha256': scenario.digest(),
            'rows': len(result.rows),
            'transitions': result.transitions,
            'final_mode': summary.final_mode,
            'peak_sync_error': summary.peak_sync_error,
            'aborted': summary.aborted,
        })

    return run


def run_batch(paths: Sequence[str], max_concurrent: int = 2, out_dir: Optional[Path] = None,
              timeout: Optional[float] = None) -> List[SimulationTask]:
    """Run independent scenarios concurrently and return their finished tasks."""
    manager = TaskManager(max_concurrent=max_concurrent)
    callback = simulation_callback(manager, out_dir)
    ids = [manager.create_task(str(p), run_callback=callback) for p in paths]
    manager.start()
    try:
        manager.wait_all(timeout)
    finally:
        manager.stop()
    return [manager.get_task(i) for i in ids]
