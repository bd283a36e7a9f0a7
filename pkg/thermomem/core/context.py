"""Run-id context for log tracing.

Each runner invocation:
1. Generates a unique UUID
2. Stores it in a context variable (visible to all code of the run)
3. Enables per-run log files (logs/run_{uuid}.log)
4. Echoes it in report.json
"""

import uuid
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Iterator

# Context variable holding the active run id
run_id_ctx_var: ContextVar[str | None] = ContextVar("run_id", default=None)


def get_run_id() -> str | None:
    """Get the current run id from the context variable.

    Returns:
        Run UUID string, or None outside a run
    """
    return run_id_ctx_var.get()


@contextmanager
def run_scope(run_id: str | None = None) -> Iterator[str]:
    """Bind a run id for the duration of the block.

    Args:
        run_id: Explicit id to use; a fresh UUID4 when omitted

    Yields:
        The bound run id
    """
    rid = run_id or str(uuid.uuid4())
    token = run_id_ctx_var.set(rid)
    try:
        yield rid
    finally:
        run_id_ctx_var.reset(token)
