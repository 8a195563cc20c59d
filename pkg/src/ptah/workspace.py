"""On-disk workspace holding every intermediate artifact of a run.

Layout (fixed names; other files may appear alongside them):

    query.json
    stage.json
    plan/plan.json  plan/trajectory.json  plan/ledger.json  plan/verdicts/NN.json
    research/<section_id>/package.json | trajectory.json | ledger.json
    research/<section_id>/pages/<sha>.json  research/<section_id>/verdicts/NN.json
    vwm/index.json  vwm/images/<sha256>.<ext>  vwm/assets_meta.json
    report/raw_report.json  report/refined_report.json  report/report.html
    report/viewport.png  report/assets/  report/tts/
    eval/icq.json  eval/mpq.json  eval/fact.json  eval/summary.json
    logs/*.jsonl

All JSON goes through the canonical serializer; writes are atomic
(tmp file + rename). One process owns a workspace at a time via a
lockfile; within the process a single lock guards the shared stores
(assets, logs) while each section task writes only its own directory.
"""

from __future__ import annotations

import io
import json
import os
import threading
from pathlib import Path
from typing import Optional

from .clock import SystemClock
from .errors import IntegrityError, StageRegressionError, WorkspaceError
from .models import Query, canonical_json_bytes
from .urls import canonical_url

# Ordered stage ladder. The coarse lifecycle chain
# plan -> research -> writing -> refined -> evaluated is embedded in it;
# the intermediate entries are the six refinement steps' completion markers.
STAGES = [
    "created",
    "plan",
    "research",
    "writing",
    "section_refined",
    "image_refined",
    "overall_refined",
    "html_generated",
    "html_refined",
    "refined",
    "evaluated",
]

SUBDIRS = ["plan", "plan/verdicts", "plan/pages", "research", "vwm", "vwm/images",
           "report", "report/tts", "report/assets", "eval", "logs"]

_IMAGE_EXTS = {"png": "png", "jpeg": "jpeg", "jpg": "jpeg", "gif": "gif", "webp": "webp"}


def sniff_image_format(data: bytes) -> Optional[str]:
    """Detect raster format from magic bytes; 'svg' for vector markup; None otherwise."""
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return "png"
    if data[:3] == b"\xff\xd8\xff":
        return "jpeg"
    if data[:6] in (b"GIF87a", b"GIF89a"):
        return "gif"
    if data[:4] == b"RIFF" and data[8:12] == b"WEBP":
        return "webp"
    head = data[:512].lstrip()
    if head.startswith(b"<svg") or (head.startswith(b"<?xml") and b"<svg" in data[:2048]):
        return "svg"
    return None


def atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def write_json(path: Path, value) -> None:
    atomic_write(path, canonical_json_bytes(value))


def read_json(path: Path):
    with io.open(path, "r", encoding="utf-8") as f:
        return json.load(f)


class AssetStore:
    """Content-addressed image store under vwm/images.

    File name is the SHA-256 of the file bytes plus a sniffed extension,
    so integrity is checkable by rehashing and duplicates collapse to one
    file. Metadata (provenance, source URL, edit lineage) lives in
    vwm/assets_meta.json keyed by hash.
    """

    def __init__(self, root: Path, lock: threading.Lock):
        self.images_dir = root / "vwm" / "images"
        self.meta_path = root / "vwm" / "assets_meta.json"
        self._lock = lock

    def store(self, data: bytes, meta: Optional[dict] = None) -> str:
        import hashlib

        fmt = sniff_image_format(data)
        ext = _IMAGE_EXTS.get(fmt or "", "bin")
        sha = hashlib.sha256(data).hexdigest()
        with self._lock:
            path = self.images_dir / f"{sha}.{ext}"
            if not path.exists():
                atomic_write(path, data)
            if meta is not None:
                all_meta = read_json(self.meta_path) if self.meta_path.exists() else {}
                if sha not in all_meta:
                    all_meta[sha] = meta
                write_json(self.meta_path, all_meta)
        return sha

    def has_asset(self, asset_id: str) -> bool:
        return self.find(asset_id) is not None

    def find(self, asset_id: str) -> Optional[Path]:
        for p in self.images_dir.glob(asset_id + ".*"):
            if p.suffix != ".tmp":
                return p
        return None

    def read(self, asset_id: str) -> bytes:
        path = self.find(asset_id)
        if path is None:
            raise IntegrityError(f"asset {asset_id} not in store")
        return path.read_bytes()

    def meta(self, asset_id: str) -> dict:
        if not self.meta_path.exists():
            return {}
        return read_json(self.meta_path).get(asset_id, {})

    def lineage(self, asset_id: str) -> list:
        """Walk edit parents from newest to the original asset."""
        chain = []
        seen = set()
        current = asset_id
        while current and current not in seen:
            seen.add(current)
            m = self.meta(current)
            parent = m.get("parent")
            if parent is None:
                break
            chain.append({"asset_id": current, "parent": parent,
                          "instruction": m.get("instruction", "")})
            current = parent
        return chain

    def all_ids(self) -> list:
        return sorted(p.stem for p in self.images_dir.glob("*.*") if p.suffix != ".tmp")


class Ledger:
    """Append-only visited-URL ledger for one scope (plan or a section)."""

    def __init__(self, path: Path, lock: threading.Lock):
        self.path = path
        self._lock = lock

    def add(self, url: str) -> None:
        canon = canonical_url(url)
        with self._lock:
            urls = self._read()
            if canon not in urls:
                urls.append(canon)
                write_json(self.path, urls)

    def _read(self) -> list:
        if self.path.exists():
            return read_json(self.path)
        return []

    def urls(self) -> list:
        return self._read()

    def contains(self, url: str) -> bool:
        try:
            return canonical_url(url) in set(self._read())
        except ValueError:
            return False


class PageStore:
    """Fetched pages for one scope, keyed by canonical-URL hash."""

    def __init__(self, directory: Path, lock: threading.Lock):
        self.directory = directory
        self._lock = lock

    @staticmethod
    def _key(url: str) -> str:
        import hashlib

        return hashlib.sha256(canonical_url(url).encode("utf-8")).hexdigest()[:24]

    def put(self, url: str, page_dict: dict) -> None:
        with self._lock:
            self.directory.mkdir(parents=True, exist_ok=True)
            write_json(self.directory / f"{self._key(url)}.json", page_dict)

    def get(self, url: str) -> Optional[dict]:
        path = self.directory / f"{self._key(url)}.json"
        if path.exists():
            return read_json(path)
        return None

    def all_pages(self) -> list:
        if not self.directory.exists():
            return []
        return [read_json(p) for p in sorted(self.directory.glob("*.json"))]


class Workspace:
    """Handle over one query's artifact tree."""

    def __init__(self, root: Path, clock=None):
        self.root = Path(root)
        self.clock = clock or SystemClock()
        self._lock = threading.Lock()
        self.assets = AssetStore(self.root, self._lock)

    # -- lifecycle ----------------------------------------------------------

    @classmethod
    def init(cls, query: Query, root, resume: bool = False, clock=None) -> "Workspace":
        root = Path(root)
        marker = root / "stage.json"
        if root.exists() and any(root.iterdir()):
            if not resume:
                raise WorkspaceError(
                    f"workspace {root} is not empty; pass resume to continue it"
                )
            if not marker.exists():
                raise WorkspaceError(f"{root} is not a ptah workspace (no stage.json)")
            ws = cls(root, clock=clock)
            existing = Query.from_dict(read_json(root / "query.json"))
            if existing.id != query.id or existing.text != query.text:
                raise WorkspaceError("workspace belongs to a different query")
            return ws
        ws = cls(root, clock=clock)
        for sub in SUBDIRS:
            (root / sub).mkdir(parents=True, exist_ok=True)
        write_json(root / "query.json", query.to_dict())
        write_json(marker, {"stage": "created"})
        return ws

    @classmethod
    def open(cls, root, clock=None) -> "Workspace":
        root = Path(root)
        if not (root / "stage.json").exists():
            raise WorkspaceError(f"{root} is not a ptah workspace (no stage.json)")
        return cls(root, clock=clock)

    def query(self) -> Query:
        return Query.from_dict(read_json(self.root / "query.json"))

    # -- stage marker ---------------------------------------------------------

    @property
    def stage(self) -> str:
        return read_json(self.root / "stage.json")["stage"]

    def stage_index(self) -> int:
        return STAGES.index(self.stage)

    def advance_stage(self, new_stage: str) -> None:
        if new_stage not in STAGES:
            raise WorkspaceError(f"unknown stage {new_stage!r}")
        current = self.stage
        if STAGES.index(new_stage) < STAGES.index(current):
            raise StageRegressionError(f"cannot regress stage {current} -> {new_stage}")
        write_json(self.root / "stage.json", {"stage": new_stage})

    def stage_at_least(self, stage: str) -> bool:
        return self.stage_index() >= STAGES.index(stage)

    # -- locking --------------------------------------------------------------

    def acquire_lock(self) -> None:
        lock_path = self.root / ".lock"
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise WorkspaceError(f"workspace {self.root} is locked by another run")
        with os.fdopen(fd, "w") as f:
            f.write(str(os.getpid()))

    def release_lock(self) -> None:
        lock_path = self.root / ".lock"
        if lock_path.exists():
            lock_path.unlink()

    # -- scoped stores ----------------------------------------------------------

    def section_dir(self, section_id: str) -> Path:
        d = self.root / "research" / section_id
        d.mkdir(parents=True, exist_ok=True)
        return d

    def ledger(self, scope: str) -> Ledger:
        """scope is 'plan' or a section id."""
        if scope == "plan":
            return Ledger(self.root / "plan" / "ledger.json", self._lock)
        return Ledger(self.section_dir(scope) / "ledger.json", self._lock)

    def pages(self, scope: str) -> PageStore:
        if scope == "plan":
            return PageStore(self.root / "plan" / "pages", self._lock)
        return PageStore(self.section_dir(scope) / "pages", self._lock)

    def union_ledger_urls(self) -> set:
        urls = set(self.ledger("plan").urls())
        research = self.root / "research"
        if research.exists():
            for sub in sorted(research.iterdir()):
                if (sub / "ledger.json").exists():
                    urls.update(read_json(sub / "ledger.json"))
        return urls

    # -- verdicts ---------------------------------------------------------------

    def _verdict_dir(self, scope: str) -> Path:
        if scope == "plan":
            d = self.root / "plan" / "verdicts"
        else:
            d = self.section_dir(scope) / "verdicts"
        d.mkdir(parents=True, exist_ok=True)
        return d

    def write_verdict(self, scope: str, verdict_dict: dict) -> Path:
        d = self._verdict_dir(scope)
        with self._lock:
            existing = sorted(d.glob("[0-9][0-9].json"))
            n = len(existing) + 1
            path = d / f"{n:02d}.json"
            write_json(path, verdict_dict)
        return path

    def verdicts(self, scope: str) -> list:
        d = self._verdict_dir(scope)
        return [read_json(p) for p in sorted(d.glob("[0-9][0-9].json"))]

    # -- logs -------------------------------------------------------------------

    def append_log(self, name: str, record: dict) -> None:
        path = self.root / "logs" / f"{name}.jsonl"
        line = json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n"
        with self._lock:
            with io.open(path, "a", encoding="utf-8") as f:
                f.write(line)
                f.flush()

    def read_log(self, name: str) -> list:
        path = self.root / "logs" / f"{name}.jsonl"
        if not path.exists():
            return []
        records = []
        with io.open(path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
        return records

    # -- convenience -------------------------------------------------------------

    def write_artifact(self, relpath: str, value) -> Path:
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        write_json(path, value)
        return path

    def read_artifact(self, relpath: str):
        return read_json(self.root / relpath)

    def has_artifact(self, relpath: str) -> bool:
        return (self.root / relpath).exists()
