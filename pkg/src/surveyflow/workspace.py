"""Temporary workspace lifecycle for the segmentation pipeline.

Stages hand intermediate PNGs and metadata to each other through a temp
directory tree; the manifest (relative path + checksum per file) is refreshed
at each stage boundary and persisted alongside the data so independent task
bodies share one view. The workspace disappears on run success and is
retained, with its path recorded on the run, when the run fails.
"""

from __future__ import annotations

import json
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .utils import sha256_file

STAGE_NAMES = ("downscaled", "masks_raw", "masks_full", "masks_binary")
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class ManifestEntry:
    path: str  # relative to the workspace root
    sha256: str


@dataclass
class Workspace:
    run_id: str
    root: Path
    stage_dirs: dict[str, Path]
    manifest: list[ManifestEntry] = field(default_factory=list)

    def stage(self, name: str) -> Path:
        return self.stage_dirs[name]

    def refresh_manifest(self) -> list[ManifestEntry]:
        """Rescan every stage directory; call at each stage boundary."""
        entries: list[ManifestEntry] = []
        for stage_dir in self.stage_dirs.values():
            for path in sorted(stage_dir.rglob("*")):
                if path.is_file():
                    entries.append(
                        ManifestEntry(path=str(path.relative_to(self.root)), sha256=sha256_file(path))
                    )
        self.manifest = entries
        (self.root / MANIFEST_NAME).write_text(
            json.dumps([{"path": e.path, "sha256": e.sha256} for e in entries], indent=0),
            encoding="utf-8",
        )
        return entries


@dataclass(frozen=True)
class CleanupReport:
    removed: bool
    retained_path: str | None
    note: str


def workspace_create(run_id: str, base_dir: str | Path | None = None) -> Workspace:
    root = Path(tempfile.mkdtemp(prefix=f"surveyflow-{run_id}-", dir=base_dir))
    stage_dirs = {}
    for name in STAGE_NAMES:
        stage_dir = root / name
        stage_dir.mkdir()
        stage_dirs[name] = stage_dir
    ws = Workspace(run_id=run_id, root=root, stage_dirs=stage_dirs)
    ws.refresh_manifest()
    return ws


def workspace_open(root: str | Path, run_id: str) -> Workspace:
    """Attach to an existing workspace (downstream tasks in other contexts)."""
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"workspace root {root} does not exist")
    ws = Workspace(
        run_id=run_id,
        root=root,
        stage_dirs={name: root / name for name in STAGE_NAMES},
    )
    manifest_path = root / MANIFEST_NAME
    if manifest_path.exists():
        entries = json.loads(manifest_path.read_text(encoding="utf-8"))
        ws.manifest = [ManifestEntry(path=e["path"], sha256=e["sha256"]) for e in entries]
    return ws


def workspace_cleanup(ws: Workspace, *, run_succeeded: bool) -> CleanupReport:
    """Remove the workspace after a successful run; retain it for debugging otherwise.

    Idempotent: cleaning an already-removed workspace is a no-op report.
    IO failures are reported, never raised — cleanup must not change run state.
    """
    if not ws.root.exists():
        return CleanupReport(removed=False, retained_path=None, note="already removed")
    if not run_succeeded:
        return CleanupReport(
            removed=False,
            retained_path=str(ws.root),
            note="run failed; workspace retained for debugging",
        )
    try:
        shutil.rmtree(ws.root)
    except OSError as exc:
        return CleanupReport(removed=False, retained_path=str(ws.root), note=f"cleanup failed: {exc}")
    return CleanupReport(removed=True, retained_path=None, note="workspace removed")
