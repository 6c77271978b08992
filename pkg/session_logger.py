"""
Structured run log for prochern.

Each run gets one JSONL file with one event per line: the session start,
every evaluated query and check, errors, and the session end. Console
summaries go to stderr so reports on stdout stay clean.
"""

import json
import sys
import threading
import time
import uuid
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, TextIO


class LogLevel(str, Enum):
    """Log severity levels."""
    DEBUG = "debug"
    INFO = "info"
    WARNING = "warning"
    ERROR = "error"


@dataclass
class LogEntry:
    """Base structure for all log entries."""
    session_id: str
    timestamp: float  # Unix timestamp with milliseconds
    event_type: str
    level: LogLevel
    data: Dict[str, Any]

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for JSON serialization."""
        return {
            "session_id": self.session_id,
            "timestamp": self.timestamp,
            "timestamp_iso": datetime.fromtimestamp(self.timestamp).isoformat(),
            "event_type": self.event_type,
            "level": self.level.value,
            "data": self.data,
        }


class SessionLogger:
    """
    Synchronous structured logger for one prochern run.

    Usage:
        logger = SessionLogger.create(logs_dir="./logs", session_metadata={"document": path})
        set_global_logger(logger)
        log_query(name, value, duration_ms)
        logger.close()

    Checks may run on a thread pool, so writes are serialized with a lock.
    """

    def __init__(
        self,
        session_id: str,
        jsonl_file_path: Optional[Path],
        session_metadata: Dict[str, Any],
        console_output: bool = False,
        console: TextIO = sys.stderr,
    ):
        self.session_id = session_id
        self.jsonl_file_path = jsonl_file_path
        self.session_metadata = session_metadata
        self.console_output = console_output
        self.console = console
        self._jsonl_file: Optional[TextIO] = None
        self._lock = threading.Lock()
        self.session_start_time = time.time()
        self.events: List[Dict[str, Any]] = []

    @classmethod
    def create(
        cls,
        logs_dir: Optional[str] = None,
        session_metadata: Optional[Dict[str, Any]] = None,
        console_output: bool = False,
    ) -> "SessionLogger":
        """
        Create a logger and log the session start.

        Args:
            logs_dir: Directory for the JSONL file; None keeps events in memory only
            session_metadata: Document path, seed and settings of the run
            console_output: Whether to print console summaries to stderr

        Raises:
            RuntimeError: If the logs directory or file cannot be created
        """
        timestamp = int(time.time())
        suffix = str(uuid.uuid4())[:8]
        session_id = f"session_{timestamp}_{suffix}"

        path: Optional[Path] = None
        if logs_dir:
            logs_path = Path(logs_dir)
            try:
                logs_path.mkdir(parents=True, exist_ok=True)
            except OSError as e:
                raise RuntimeError(f"Failed to create logs directory at '{logs_path}': {e}")
            path = logs_path / f"{session_id}.jsonl"

        logger = cls(session_id, path, session_metadata or {}, console_output)
        if path is not None:
            try:
                logger._jsonl_file = open(path, "a", buffering=1)
            except OSError as e:
                raise RuntimeError(f"Failed to open JSONL log file at '{path}': {e}")
        logger.log("session_start", LogLevel.INFO, {"session_id": session_id, **logger.session_metadata})
        return logger

    def log(self, event_type: str, level: LogLevel, data: Dict[str, Any]) -> None:
        entry = LogEntry(self.session_id, time.time(), event_type, level, data)
        entry_dict = entry.to_dict()
        with self._lock:
            self.events.append(entry_dict)
            if self._jsonl_file:
                try:
                    self._jsonl_file.write(json.dumps(entry_dict, default=str) + "\n")
                    self._jsonl_file.flush()
                except OSError as e:
                    print(f"[session_logger] ERROR writing to JSONL: {e}", file=self.console)
            if self.console_output:
                self._print_console_summary(entry)

    def _print_console_summary(self, entry: LogEntry) -> None:
        timestamp = datetime.fromtimestamp(entry.timestamp).strftime("%H:%M:%S.%f")[:-3]
        data = entry.data
        if entry.event_type == "session_start":
            line = f"SESSION START {data.get('document', '')} seed={data.get('seed')}"
        elif entry.event_type == "query":
            line = f"QUERY {data['name']} = {data['value']} ({data.get('duration_ms', 0):.0f}ms)"
        elif entry.event_type == "check":
            mark = "✓" if data["status"] != "fail" else "✗"
            line = f"CHECK {data['name']} {mark} {data['status']} ({data.get('duration_ms', 0):.0f}ms)"
            if data.get("witness"):
                line += f" witness: {data['witness']}"
        elif entry.event_type == "error":
            line = f"ERROR [{data.get('stage', '?')}] {data.get('message', '')}"
        elif entry.event_type == "session_end":
            line = f"SESSION END {data.get('queries', 0)} queries, {data.get('checks', 0)} checks"
        else:
            line = entry.event_type.upper()
        print(f"[{timestamp}] {line}", file=self.console)

    def close(self, summary: Optional[Dict[str, Any]] = None) -> None:
        self.log("session_end", LogLevel.INFO, {
            "duration_seconds": time.time() - self.session_start_time,
            "total_events": len(self.events),
            "event_counts": self.count_event_types(),
            **(summary or {}),
        })
        with self._lock:
            if self._jsonl_file:
                try:
                    self._jsonl_file.close()
                except OSError as e:
                    print(f"[session_logger] ERROR closing JSONL file: {e}", file=self.console)
                self._jsonl_file = None

    def count_event_types(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for event in self.events:
            counts[event["event_type"]] = counts.get(event["event_type"], 0) + 1
        return counts


# Global logger for cross-module access
_global_logger: Optional[SessionLogger] = None


def set_global_logger(logger: Optional[SessionLogger]) -> None:
    global _global_logger
    _global_logger = logger


def log_event(event_type: str, level: LogLevel, data: Dict[str, Any]) -> None:
    """Log through the global logger; a no-op when none is installed."""
    if _global_logger:
        _global_logger.log(event_type, level, data)


def log_query(name: str, value: str, duration_ms: float) -> None:
    log_event("query", LogLevel.INFO, {"name": name, "value": value, "duration_ms": duration_ms})


def log_check(name: str, status: str, witness: Optional[str], duration_ms: float) -> None:
    level = LogLevel.INFO if status != "fail" else LogLevel.WARNING
    log_event("check", level, {"name": name, "status": status, "witness": witness, "duration_ms": duration_ms})


def log_error(stage: str, message: str, location: Optional[str] = None) -> None:
    log_event("error", LogLevel.ERROR, {"stage": stage, "message": message, "location": location})
