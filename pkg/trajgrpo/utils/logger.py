"""Run-id aware logging. Reports go to stdout, so every handler writes to stderr or a file."""

import logging
import json
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional
from contextvars import ContextVar

# per-context so nested RunContext blocks restore cleanly
run_id_var: ContextVar[Optional[str]] = ContextVar("run_id", default=None)


class StructuredFormatter(logging.Formatter):
    """One JSON object per record."""

    def format(self, record: logging.LogRecord) -> str:
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }

        run_id = run_id_var.get()
        if run_id:
            log_data["run_id"] = run_id

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        if hasattr(record, "extra_data"):
            log_data.update(record.extra_data)

        # errors carry their origin
        if record.levelno >= logging.ERROR:
            log_data["file"] = f"{record.filename}:{record.lineno}"
            log_data["function"] = record.funcName

        return json.dumps(log_data, default=str)


class RunIDFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = run_id_var.get() or "no-run-id"
        return True


def setup_logging(log_level: str = "INFO", json_format: bool = False, log_file: Optional[str] = None):
    """Route all logging to stderr (plus log_file when given); stdout carries the reports."""
    level = getattr(logging, log_level.upper(), logging.INFO)

    # emoji in messages
    try:
        if hasattr(sys.stderr, "reconfigure"):
            sys.stderr.reconfigure(encoding="utf-8", errors="replace")
    except Exception:
        pass

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    root_logger.handlers.clear()

    if json_format:
        formatter = StructuredFormatter()
    else:
        formatter = logging.Formatter(
            "%(asctime)s - %(name)s - %(levelname)s - [%(run_id)s] - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    console_handler.addFilter(RunIDFilter())
    root_logger.addHandler(console_handler)

    if log_file:
        try:
            log_path = Path(log_file)
            log_path.parent.mkdir(parents=True, exist_ok=True)

            file_handler = logging.FileHandler(str(log_path), mode="a", encoding="utf-8")
            file_handler.setFormatter(formatter)
            file_handler.addFilter(RunIDFilter())
            root_logger.addHandler(file_handler)
            logging.info(f"Logging to file: {log_path}")
        except (PermissionError, OSError) as e:
            logging.warning(f"Cannot write to log file {log_file}: {e}. Using console only.")

    logging.debug(f"Logging configured: level={log_level}, json={json_format}")


def make_run_id(command: str, seed: Optional[int] = None) -> str:
    """Deterministic run id, so two identical invocations log under the same id."""
    return f"{command}-seed{seed}" if seed is not None else command


def set_run_id(run_id: str) -> str:
    run_id_var.set(run_id)
    return run_id


def get_run_id() -> Optional[str]:
    return run_id_var.get()


def clear_run_id():
    run_id_var.set(None)


def log_with_extra(logger: logging.Logger, level: int, message: str, **extra):
    """extra lands as top-level keys in the JSON output."""
    logger.log(level, message, extra={"extra_data": extra})


class RunContext:
    """Scopes the run id to a block, restoring the outer one on exit."""

    def __init__(self, run_id: str):
        self.run_id = run_id
        self.previous_id = None

    def __enter__(self):
        self.previous_id = get_run_id()
        set_run_id(self.run_id)
        return self.run_id

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self.previous_id:
            set_run_id(self.previous_id)
        else:
            clear_run_id()
