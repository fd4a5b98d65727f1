"""
Local result storage
Category folders under one storage root plus a metadata.json index of every
artifact written (path, size, sha256, optional metadata).
"""

import csv
import hashlib
import io
import json
import logging
import os
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

logger = logging.getLogger(__name__)


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


class LocalStorage:
    def __init__(self, storage_path: Optional[str] = None):
        """
        Args:
            storage_path: storage root; defaults to $RIE_OUTPUT_DIR or ./output
        """
        self.storage_path = Path(storage_path or os.environ.get("RIE_OUTPUT_DIR", "./output"))
        # สร้างโฟลเดอร์ storage
        self.storage_path.mkdir(parents=True, exist_ok=True)
        self.metadata_file = self.storage_path / "metadata.json"
        # โหลด metadata เดิม (ถ้ามี)
        self.metadata = self._load_metadata()

    def _load_metadata(self) -> Dict:
        if self.metadata_file.exists():
            try:
                with open(self.metadata_file, "r", encoding="utf-8") as f:
                    return json.load(f)
            except (OSError, json.JSONDecodeError):
                logger.warning("⚠️ metadata.json unreadable, starting a fresh index")
                return {}
        return {}

    def _save_metadata(self):
        with open(self.metadata_file, "w", encoding="utf-8") as f:
            json.dump(self.metadata, f, indent=2, ensure_ascii=False, sort_keys=True)
            f.write("\n")

    def path_for(self, category: str, name: str) -> str:
        """Destination for a file written by an external writer, then passed to index_file."""
        dest = self.storage_path / category / name
        dest.parent.mkdir(parents=True, exist_ok=True)
        return str(dest)

    def index_file(self, category: str, name: str, meta: Optional[Dict] = None) -> str:
        dest = self.storage_path / category / name
        if not dest.is_file():
            raise FileNotFoundError(f"❌ Cannot index missing file: {dest}")
        return self._index(category, name, dest.read_bytes(), meta)

    def _store(self, category: str, name: str, data: bytes, meta: Optional[Dict]) -> str:
        with open(self.path_for(category, name), "wb") as f:
            f.write(data)
        return self._index(category, name, data, meta)

    def _index(self, category: str, name: str, data: bytes, meta: Optional[Dict]) -> str:
        # บันทึก metadata (ไม่เก็บ timestamp)
        rel_path = f"{category}/{name}"
        dest = self.storage_path / category / name
        self.metadata[rel_path] = {
            "category": category,
            "name": name,
            "size": len(data),
            "sha256": hashlib.sha256(data).hexdigest(),
            "meta": meta or {},
        }
        self._save_metadata()
        logger.info("📄 Wrote %s (%d bytes)", dest, len(data))
        return str(dest)

    def write_csv(self, category: str, name: str, header: Sequence[str],
                  rows: Iterable[Sequence], meta: Optional[Dict] = None) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])
        return self._store(category, name, buffer.getvalue().encode("utf-8"), meta)

    def write_json(self, category: str, name: str, payload: Dict,
                   meta: Optional[Dict] = None) -> str:
        text = json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n"
        return self._store(category, name, text.encode("utf-8"), meta)

    def write_text(self, category: str, name: str, text: str, meta: Optional[Dict] = None) -> str:
        return self._store(category, name, text.encode("utf-8"), meta)

    def get_file_info(self, rel_path: str) -> Optional[Dict]:
        # โหลด metadata ใหม่ก่อนเสมอ
        self.metadata = self._load_metadata()
        return self.metadata.get(rel_path)

    def get_file_path(self, rel_path: str) -> Optional[str]:
        if rel_path in self.metadata:
            return str(self.storage_path / rel_path)
        return None

    def list_files(self, prefix: str = "") -> List[Dict]:
        # โหลด metadata ใหม่ก่อนเสมอ
        self.metadata = self._load_metadata()
        return [
            {"path": rel_path, **info}
            for rel_path, info in sorted(self.metadata.items())
            if rel_path.startswith(prefix)
        ]
