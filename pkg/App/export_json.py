import json
import math
import os
from dataclasses import asdict, is_dataclass
from datetime import datetime

import numpy as np
from dateutil import parser as dtparser, tz

from errors import OutputError

MANIFEST_NAME = "run.json"


def utc_now():
    return datetime.now(tz=tz.UTC)


def _plain(value):
    """JSON-safe copy: numpy scalars and arrays to Python, callables to their names, NaN to None."""
    if is_dataclass(value) and not isinstance(value, type):
        return _plain(asdict(value))
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return _plain(value.item())
    if isinstance(value, complex):
        return {"re": _plain(value.real), "im": _plain(value.imag)}
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if callable(value):
        return getattr(value, "__name__", repr(value))
    return value


class RunManifest:
    """Collects what a CLI run did and writes it as run.json next to its outputs."""

    def __init__(self, command, parameters, started=None):
        self.command = command
        self.parameters = dict(parameters)
        self.started = started or utc_now()
        self.finished = None
        self.summary = {}
        self.outputs = []
        self.status = "running"

    def add_output(self, path):
        self.outputs.append(os.path.basename(path))

    def finish(self, summary=None, status="ok"):
        self.finished = utc_now()
        self.summary.update(summary or {})
        self.status = status

    @property
    def elapsed(self):
        end = self.finished or utc_now()
        return (end - self.started).total_seconds()

    def to_dict(self):
        return {
            "command": self.command,
            "status": self.status,
            "parameters": _plain(self.parameters),
            "started": self.started.isoformat(),
            "finished": self.finished.isoformat() if self.finished else None,
            "elapsed_seconds": self.elapsed,
            "summary": _plain(self.summary),
            "outputs": self.outputs,
        }

    def write(self, folder):
        path = os.path.join(folder, MANIFEST_NAME)
        try:
            os.makedirs(folder, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
        except OSError as e:
            raise OutputError(path, e) from e
        return path


def load_manifest(path):
    """Read a run.json back; timestamps come back as aware datetimes."""
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    for key in ("started", "finished"):
        if data.get(key):
            data[key] = dtparser.isoparse(data[key])
    return data
