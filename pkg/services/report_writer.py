from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence
import csv
import json
import logging

import numpy as np
from pydantic import BaseModel

from config import ExperimentConfig, config_hash
from pharmonic import __version__
from pharmonic.fields import DiscreteMap, save_field
from pharmonic.schemas import RunEnvelope

logger = logging.getLogger(__name__)


class ReportWriter:
    """Writes CSV tables, JSON reports and field files stamped with the config hash and tool version"""

    def __init__(self, config: ExperimentConfig, output_dir: Optional[str] = None):
        self.config = config
        self.config_hash = config_hash(config)
        self.output_dir = Path(output_dir or config.output_dir)
        self.written: List[Path] = []

    def _path(self, name: str) -> Path:
        # absolute names are kept, relative ones land in the output directory
        path = self.output_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def envelope(self, command: str, payload: Any) -> RunEnvelope:
        if isinstance(payload, BaseModel):
            payload = payload.model_dump(mode="json", by_alias=True)
        return RunEnvelope(
            tool_version=__version__,
            config_hash=self.config_hash,
            command=command,
            generated_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            payload=_plain(payload) if isinstance(payload, dict) else {"result": _plain(payload)},
        )

    def write_json(self, name: str, command: str, payload: Any) -> Path:
        path = self._path(name)
        body = self.envelope(command, payload).model_dump(mode="json")
        path.write_text(json.dumps(body, sort_keys=True, indent=2, default=float) + "\n")
        return self._record(path)

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        path = self._path(name)
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash={self.config_hash} tool_version={__version__}\n")
            writer = csv.writer(fh)
            writer.writerow(list(header))
            for row in rows:
                writer.writerow([_cell(v) for v in row])
        return self._record(path)

    def write_field(self, fmap: DiscreteMap, name: str) -> Path:
        meta: Dict[str, str] = {"config_hash": self.config_hash, "tool_version": __version__}
        path = save_field(fmap, self._path(name), meta=meta)
        return self._record(path)

    def _record(self, path: Path) -> Path:
        self.written.append(path)
        logger.info(f"Wrote {path}")
        return path


def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(float(value))
    return value


def _plain(value: Any) -> Any:
    """numpy scalars and arrays to JSON-ready Python values"""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json", by_alias=True)
    return value
