"""Append-only, content-addressed model registry and the dependency resolver.

On-disk layout::

    <root>/index.json
    <root>/store/<id>/<MAJOR.MINOR.PATCH>/manifest.lcam.json
    <root>/advisories/<advisory_id>.json

A registry constructed with ``root=None`` keeps everything in memory, which
is what the randomized resolver tests use.
"""

from __future__ import annotations

import contextlib
import os
import re
from collections import deque
from dataclasses import dataclass
from pathlib import Path

from .canonical import canonical_bytes, digest, now_iso, read_json, sha256_hex, write_canonical
from .errors import (
    DanglingSupersede,
    DuplicateAdvisoryId,
    DuplicateVersion,
    NotFound,
    RegistryLocked,
    Unsatisfiable,
)
from .manifest import ModelManifest, parse_manifest
from .versions import Version, VersionReq

SEVERITIES = ("Info", "Warning", "Invalidated")
_ADVISORY_ID = re.compile(r"^LCA-\d{4}-\d{4,}$")


@dataclass
class IndexEntry:
    version: Version
    hash: str
    yanked: bool = False
    published_at: str = ""

    def to_json(self):
        return {"version": str(self.version), "hash": self.hash, "yanked": self.yanked, "published_at": self.published_at}


@dataclass(frozen=True)
class Advisory:
    advisory_id: str
    model_id: str
    affected: VersionReq
    severity: str
    reason: str
    published_at: str = ""
    superseded_by: str | None = None

    def __post_init__(self):
        if not _ADVISORY_ID.match(self.advisory_id):
            raise ValueError(f"advisory id {self.advisory_id!r} must look like LCA-YYYY-NNNN")
        if self.severity not in SEVERITIES:
            raise ValueError(f"severity must be one of {SEVERITIES}")
        if self.severity == "Invalidated" and not self.reason.strip():
            raise ValueError("an Invalidated advisory needs a reason")

    @property
    def rank(self) -> int:
        return SEVERITIES.index(self.severity)

    def matches(self, model_id: str, version) -> bool:
        v = Version.parse(version) if isinstance(version, str) else version
        return model_id == self.model_id and self.affected.matches(v)

    def to_json(self):
        return {
            "advisory_id": self.advisory_id,
            "model_id": self.model_id,
            "affected": str(self.affected),
            "severity": self.severity,
            "reason": self.reason,
            "published_at": self.published_at,
            "superseded_by": self.superseded_by,
        }

    @classmethod
    def from_json(cls, doc) -> Advisory:
        return cls(
            advisory_id=doc["advisory_id"],
            model_id=doc["model_id"],
            affected=VersionReq.parse(doc["affected"]),
            severity=doc["severity"],
            reason=doc.get("reason", ""),
            published_at=doc.get("published_at", ""),
            superseded_by=doc.get("superseded_by"),
        )


@dataclass
class Lockfile:
    root_id: str
    root_version: str
    pins: list  # [(model_id, version, hash)] sorted by model_id
    ruleset: tuple | None = None
    created_at: str = ""
    registry_snapshot_hash: str = ""

    def pin_map(self) -> dict:
        return {mid: (ver, h) for mid, ver, h in self.pins}

    def to_json(self):
        return {
            "root": {"id": self.root_id, "version": self.root_version},
            "pins": [{"id": m, "version": v, "hash": h} for m, v, h in self.pins],
            "ruleset": None if self.ruleset is None else {"id": self.ruleset[0], "version": self.ruleset[1]},
            "created_at": self.created_at,
            "registry_snapshot_hash": self.registry_snapshot_hash,
        }

    @classmethod
    def from_json(cls, doc) -> Lockfile:
        rs = doc.get("ruleset")
        return cls(
            doc["root"]["id"],
            doc["root"]["version"],
            [(p["id"], p["version"], p["hash"]) for p in doc["pins"]],
            None if rs is None else (rs["id"], rs["version"]),
            doc.get("created_at", ""),
            doc.get("registry_snapshot_hash", ""),
        )

    def canonical(self) -> bytes:
        return canonical_bytes(self.to_json())

    @property
    def hash(self) -> str:
        return sha256_hex(self.canonical())

    def save(self, path):
        write_canonical(path, self.to_json())

    @classmethod
    def load(cls, path) -> Lockfile:
        return cls.from_json(read_json(path))


class Registry:
    def __init__(self, root=None):
        self.root = Path(root) if root is not None else None
        self._index = {}
        self._manifests = {}
        self._advisories = {}
        self._cache = {}
        if self.root is not None:
            if not (self.root / "index.json").exists():
                raise NotFound(f"no registry at {self.root} (run init first)")
            self._load_index()

    # ------------------------------------------------------------ lifecycle
    @classmethod
    def init(cls, root) -> Registry:
        root = Path(root)
        (root / "store").mkdir(parents=True, exist_ok=True)
        (root / "advisories").mkdir(parents=True, exist_ok=True)
        if not (root / "index.json").exists():
            write_canonical(root / "index.json", {"models": {}})
        return cls(root)

    @classmethod
    def memory(cls) -> Registry:
        return cls(None)

    def _load_index(self):
        doc = read_json(self.root / "index.json")
        self._index = {
            mid: [IndexEntry(Version.parse(e["version"]), e["hash"], e["yanked"], e["published_at"]) for e in entries]
            for mid, entries in doc["models"].items()
        }
        self._advisories = {}
        adir = self.root / "advisories"
        if adir.is_dir():
            for p in sorted(adir.glob("*.json")):
                a = Advisory.from_json(read_json(p))
                self._advisories[a.advisory_id] = a

    def _save_index(self):
        if self.root is not None:
            write_canonical(self.root / "index.json", self._index_doc())

    def _index_doc(self):
        return {
            "models": {
                mid: [e.to_json() for e in sorted(entries, key=lambda e: e.version)]
                for mid, entries in sorted(self._index.items())
            }
        }

    @contextlib.contextmanager
    def _writer(self):
        if self.root is None:
            yield
            return
        marker = self.root / ".writer.lock"
        try:
            fd = os.open(marker, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RegistryLocked(f"another writer holds {marker}") from None
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            self._load_index()
            yield
        finally:
            marker.unlink(missing_ok=True)

    def snapshot_hash(self) -> str:
        return digest({"index": self._index_doc(), "advisories": [a.to_json() for a in self.advisories()]})

    # --------------------------------------------------------------- models
    def _entry(self, mid, version):
        v = Version.parse(version) if isinstance(version, str) else version
        for e in self._index.get(mid, []):
            if e.version == v:
                return e
        raise NotFound(f"{mid}@{v} is not in the registry")

    def _manifest_path(self, mid, version):
        return self.root / "store" / mid / str(version) / "manifest.lcam.json"

    def publish(self, m: ModelManifest) -> str:
        h = m.hash
        with self._writer():
            try:
                existing = self._entry(m.id, m.version)
            except NotFound:
                existing = None
            if existing is not None:
                if existing.hash != h:
                    raise DuplicateVersion(
                        f"{m.id}@{m.version} already published with hash {existing.hash[:12]}; versions are immutable"
                    )
                return h
            if self.root is not None:
                path = self._manifest_path(m.id, m.version)
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_bytes(m.canonical())
            else:
                self._manifests[(m.id, str(m.version))] = m.canonical()
            self._index.setdefault(m.id, []).append(IndexEntry(m.version, h, False, now_iso()))
            self._save_index()
        return h

    def manifest_bytes(self, mid, version) -> bytes:
        self._entry(mid, version)
        if self.root is None:
            return self._manifests[(mid, str(version))]
        return self._manifest_path(mid, version).read_bytes()

    def get(self, mid, version) -> ModelManifest:
        """Return the stored manifest (yanked versions included)."""
        key = (mid, str(version))
        data = self.manifest_bytes(mid, version)
        cached = self._cache.get(key)
        if cached is not None and cached[0] == data:
            return cached[1]
        m = parse_manifest(data)
        self._cache[key] = (data, m)
        return m

    def entry(self, mid, version) -> IndexEntry:
        return self._entry(mid, version)

    def list_versions(self, mid) -> list:
        if mid not in self._index:
            raise NotFound(f"unknown model {mid!r}")
        return sorted(self._index[mid], key=lambda e: e.version)

    def model_ids(self) -> list:
        return sorted(self._index)

    def yank(self, mid, version, advisory: Advisory | None = None):
        with self._writer():
            e = self._entry(mid, version)
            if not e.yanked:
                e.yanked = True
                self._save_index()
        if advisory is not None:
            self.publish_advisory(advisory)

    # ----------------------------------------------------------- advisories
    def publish_advisory(self, a: Advisory):
        with self._writer():
            if a.model_id not in self._index:
                raise NotFound(f"advisory targets unknown model {a.model_id!r}")
            if a.advisory_id in self._advisories:
                raise DuplicateAdvisoryId(a.advisory_id)
            if a.superseded_by is not None and a.superseded_by not in self._advisories:
                raise DanglingSupersede(f"{a.advisory_id} is superseded by unknown {a.superseded_by}")
            if not a.published_at:
                a = Advisory(**{**a.__dict__, "published_at": now_iso()})
            self._advisories[a.advisory_id] = a
            if self.root is not None:
                write_canonical(self.root / "advisories" / f"{a.advisory_id}.json", a.to_json())

    def advisories(self) -> list:
        return [self._advisories[k] for k in sorted(self._advisories)]

    def advisory(self, advisory_id) -> Advisory:
        try:
            return self._advisories[advisory_id]
        except KeyError:
            raise NotFound(advisory_id) from None

    def latest_timestamp(self) -> str:
        stamps = [e.published_at for es in self._index.values() for e in es]
        stamps += [a.published_at for a in self._advisories.values()]
        return max(stamps, default="")


# ------------------------------------------------------------------ resolver


def _requirement_ok(e: IndexEntry, reqs, allow_yanked: bool) -> bool:
    if not all(r.matches(e.version) for r, _ in reqs):
        return False
    if e.yanked:
        return allow_yanked and any(r.kind == "exact" for r, _ in reqs)
    return True


def resolve(root_id: str, req: VersionReq, registry: Registry, *, allow_yanked=False, ruleset=None) -> Lockfile:
    """Pin the highest non-yanked version of every model reachable from ``root_id``.

    Requirements from every pinned model are collected and intersected; the
    loop repeats until the pin set stops changing. There is no backtracking:
    an empty intersection is reported as :class:`Unsatisfiable` together with
    the chain of models that imposed each requirement.
    """
    if isinstance(req, str):
        req = VersionReq.parse(req)
    registry.list_versions(root_id)
    pins: dict = {}
    limit = 4 * (len(registry.model_ids()) + 2)
    for _ in range(limit):
        reqs = {root_id: [(req, ("<root>",))]}
        trail = {root_id: ()}
        queue = deque([root_id])
        while queue:
            mid = queue.popleft()
            if mid not in pins:
                continue
            path = trail[mid] + (f"{mid}@{pins[mid]}",)
            for d in registry.get(mid, pins[mid]).dependencies:
                reqs.setdefault(d.model_id, []).append((d.version_req, path))
                if d.model_id not in trail:
                    trail[d.model_id] = path
                    queue.append(d.model_id)
        new = {}
        for mid in sorted(reqs):
            try:
                entries = registry.list_versions(mid)
            except NotFound:
                chain = [" -> ".join(path) + f" requires {mid} {r}" for r, path in reqs[mid]]
                raise NotFound(f"{mid} is required but not in the registry: " + "; ".join(chain)) from None
            ok = [e for e in entries if _requirement_ok(e, reqs[mid], allow_yanked)]
            if not ok:
                chain = [" -> ".join(path) + f" requires {mid} {r}" for r, path in reqs[mid]]
                raise Unsatisfiable(f"no version of {mid} satisfies all requirements", chain)
            new[mid] = max(ok, key=lambda e: e.version).version
        if new == pins:
            break
        pins = new
    else:
        raise Unsatisfiable(f"resolution of {root_id} did not converge", [])

    pin_list = [(mid, str(v), registry.entry(mid, v).hash) for mid, v in sorted(pins.items(), key=lambda kv: kv[0].encode())]
    created = now_iso() if "SOURCE_DATE_EPOCH" in os.environ else registry.latest_timestamp()
    return Lockfile(
        root_id,
        str(pins[root_id]),
        pin_list,
        ruleset,
        created,
        registry.snapshot_hash(),
    )


def collect_requirements(lock: Lockfile, registry: Registry, root_req: VersionReq) -> dict:
    """All requirements imposed by the pinned closure, keyed by model id."""
    reqs = {lock.root_id: [root_req]}
    for mid, ver, _ in lock.pins:
        for d in registry.get(mid, ver).dependencies:
            reqs.setdefault(d.model_id, []).append(d.version_req)
    return reqs
