"""File-backed model registry with atomic publication.

One JSON document per model plus an index file; writers stage to a temp
file and rename into place, so concurrent readers never observe a partially
written model.
"""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from .errors import NotFoundError


class Registry:
    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _model_path(self, model_id: str) -> Path:
        if not model_id or "/" in model_id or model_id.startswith("."):
            raise NotFoundError(f"invalid model id {model_id!r}")
        return self.root / f"{model_id}.json"

    @property
    def _index_path(self) -> Path:
        return self.root / "index.json"

    def _write_atomic(self, path: Path, payload: str):
        tmp = path.with_suffix(".tmp")
        tmp.write_text(payload, encoding="utf-8")
        os.replace(tmp, path)

    def put(self, entry: dict) -> str:
        model_id = entry["model_id"]
        payload = json.dumps(entry, sort_keys=True, indent=1)
        with self._lock:
            self._write_atomic(self._model_path(model_id), payload)
            index = self._read_index()
            index[model_id] = {
                "model_id": model_id,
                "peer_group": entry.get("peer_group", ""),
                "kind": entry.get("kind", ""),
                "target": entry.get("target", ""),
            }
            self._write_atomic(self._index_path,
                               json.dumps(index, sort_keys=True, indent=1))
        return model_id

    def _read_index(self) -> dict:
        if not self._index_path.exists():
            return {}
        return json.loads(self._index_path.read_text(encoding="utf-8"))

    def get(self, model_id: str) -> dict:
        path = self._model_path(model_id)
        if not path.exists():
            raise NotFoundError(f"no model {model_id!r} in registry", model_id=model_id)
        return json.loads(path.read_text(encoding="utf-8"))

    def list(self) -> list[dict]:
        index = self._read_index()
        return [index[k] for k in sorted(index)]


def load_entry_file(path: str | os.PathLike) -> dict:
    p = Path(path)
    if not p.exists():
        raise NotFoundError(f"model file {p} does not exist")
    return json.loads(p.read_text(encoding="utf-8"))
