"""
Run reports.

One JSON document per CLI run. Keys are sorted and the only field that
changes between identical runs is `generated`.
"""

import datetime
import json
import logging
import os
from typing import Any, Dict, Optional

import numpy as np

from battbee.utils import file_digest


def _plain(value: Any) -> Any:
    """numpy scalars and arrays to JSON-native values"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


class RunReport:
    """Summary of one workflow run.

    Parameters
    ----------
    command : str
        CLI subcommand
    config : dict
        echo of the configuration actually used
    """

    def __init__(self, command: str, config: Optional[Dict[str, Any]] = None):
        self.command = command
        self.config = _plain(config or {})
        self.inputs: Dict[str, str] = {}
        self.results: Dict[str, Any] = {}
        self.generated: Optional[str] = None

    def add_input(self, label: str, path: str) -> None:
        self.inputs[label] = file_digest(path)

    def add_result(self, key: str, value: Any) -> None:
        self.results[key] = _plain(value)

    def update(self, values: Dict[str, Any]) -> None:
        for key, value in values.items():
            self.add_result(key, value)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "inputs": {k: {"sha256": v} for k, v in self.inputs.items()},
            "results": self.results,
            "generated": self.generated,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def write(self, path: str) -> None:
        self.generated = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as f:
            f.write(self.to_json())
        logging.info("run report written to %s", path)


def report_path(out: str) -> str:
    """report file next to a main output: out.csv -> out.report.json"""
    root, _ = os.path.splitext(out)
    return root + ".report.json"
