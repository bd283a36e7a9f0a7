"""Queue-backed logging with one log file per run.

Every thermomem logger hands its records to a QueueHandler; a single
background listener writes them to the console and to
``<log_dir>/run_<run_id>.log``. Console verbosity follows
THERMOMEM_LOG_LEVEL, run files always receive DEBUG. The runner calls
finish_run_log() when a run ends, which drains the queue and closes that
run's file.
"""

import logging
import sys
from logging.handlers import QueueHandler, QueueListener
from pathlib import Path
from queue import Queue

from thermomem.core.config import get_log_dir, get_log_level
from thermomem.core.context import get_run_id

LOG_DIR = get_log_dir()
NO_RUN = "no-run-id"


class RunIDFilter(logging.Filter):
    """Stamps record.run_id from the active run_scope()."""

    def filter(self, record):
        record.run_id = get_run_id() or NO_RUN
        return True


class RunLogHandler(logging.Handler):
    """Writes each record to the file of its run; records outside a run are skipped."""

    def __init__(self, log_dir: Path):
        super().__init__()
        self.log_dir = log_dir
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self._files: dict[str, logging.FileHandler] = {}

    def path_for(self, run_id: str) -> Path:
        return self.log_dir / f"run_{run_id}.log"

    def open_runs(self) -> list[str]:
        return list(self._files)

    def emit(self, record):
        run_id = getattr(record, "run_id", NO_RUN)
        if run_id == NO_RUN:
            return
        if run_id not in self._files:
            fh = logging.FileHandler(self.path_for(run_id), mode="a")
            fh.setFormatter(self.formatter)
            self._files[run_id] = fh
        self._files[run_id].emit(record)

    def close_run(self, run_id: str) -> None:
        fh = self._files.pop(run_id, None)
        if fh is not None:
            fh.close()

    def flush(self):
        for fh in self._files.values():
            fh.flush()

    def close(self):
        for run_id in list(self._files):
            self.close_run(run_id)
        super().close()


def _console_handler() -> logging.Handler:
    handler = logging.StreamHandler(sys.stdout)
    handler.setLevel(get_log_level())
    handler.setFormatter(logging.Formatter(
        "[%(asctime)s] [%(run_id)s] %(name)s %(levelname)s: %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    ))
    return handler


def _run_file_handler() -> RunLogHandler:
    handler = RunLogHandler(LOG_DIR)
    handler.setLevel(logging.DEBUG)
    handler.setFormatter(logging.Formatter(
        "[%(asctime)s] %(name)s %(levelname)s %(funcName)s:%(lineno)d - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    ))
    return handler


_log_queue: Queue = Queue(-1)
run_files = _run_file_handler()
_listener = QueueListener(_log_queue, _console_handler(), run_files, respect_handler_level=True)
_listener.start()


def flush_logs() -> None:
    """Block until every record queued so far has reached its handlers."""
    _listener.stop()
    for handler in _listener.handlers:
        handler.flush()
    _listener.start()


def run_log_path(run_id: str) -> Path:
    return run_files.path_for(run_id)


def finish_run_log(run_id: str) -> Path:
    """Drain pending records of the run, close its file and return the file path."""
    flush_logs()
    run_files.close_run(run_id)
    return run_files.path_for(run_id)


def get_logger(name: str) -> logging.Logger:
    """Logger feeding the shared queue; idempotent per name."""
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)
    if not logger.handlers:
        logger.addFilter(RunIDFilter())
        logger.addHandler(QueueHandler(_log_queue))
        logger.propagate = False
    return logger


numerics_logger = get_logger("thermomem.numerics")
solver_logger = get_logger("thermomem.solvers")
cli_logger = get_logger("thermomem.cli")
verify_logger = get_logger("thermomem.verify")
