#!/usr/bin/env python3
"""
RUN AUDIT & DATA LINEAGE
Every stage tracked, every file hashed, every run reproducible from its manifest.
"""

import hashlib
import json
import os
import platform
import sys
from datetime import datetime
from importlib import metadata

from pphi_config import config_hash


def log(msg):
    """Tagged progress line on stderr."""
    print(msg, file=sys.stderr, flush=True)


TRACKED_PACKAGES = ('numpy', 'scipy', 'pandas', 'matplotlib', 'POT')


def package_versions():
    versions = {'python': platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


class RunAudit:
    """
    Filesystem audit trail for one run directory.

    Tracks:
    - Every stage started, finished or skipped (audit_log.jsonl)
    - Every file written or read, with its SHA-256 (lineage.jsonl)
    - The manifest: config, config hash, seed and package versions
    - Completed stages with the config hash they were computed under
    """

    def __init__(self, out_dir):
        self.out_dir = out_dir
        os.makedirs(out_dir, exist_ok=True)
        self.audit_path = os.path.join(out_dir, 'audit_log.jsonl')
        self.lineage_path = os.path.join(out_dir, 'lineage.jsonl')
        self.stages_path = os.path.join(out_dir, 'stages.json')
        self.manifest_path = os.path.join(out_dir, 'manifest.json')

    def _append(self, path, record):
        with open(path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(record, sort_keys=True, default=str) + '\n')

    def log_event(self, event_type, **kwargs):
        """
        Log an event of the run

        Args:
            event_type: RUN_START, STAGE_DONE, STAGE_SKIPPED, CHECK, RUN_FAILED, ...
            **kwargs: details; 'success' and 'error_message' are lifted to top level
        """
        success = kwargs.pop('success', True)
        error_message = kwargs.pop('error_message', None)
        record = {
            'timestamp': datetime.now().isoformat(),
            'event_type': event_type,
            'success': bool(success),
            'error_message': error_message,
            'metadata': kwargs or None,
        }
        self._append(self.audit_path, record)
        status = "✅" if success else "❌"
        log(f"[AUDIT] {status} {event_type}" + (f": {error_message}" if error_message else ""))

    def record_data_lineage(self, data_type, path, **kwargs):
        """Record where a file came from: its hash, size and the stage that produced it."""
        if not os.path.exists(path):
            log(f"[LINEAGE] ⚠️  {path} does not exist, nothing recorded")
            return None
        stat = os.stat(path)
        record = {
            'timestamp': datetime.now().isoformat(),
            'data_type': data_type,
            'path': os.path.relpath(path, self.out_dir),
            'sha256': file_sha256(path),
            'size_bytes': stat.st_size,
            'modified': datetime.fromtimestamp(stat.st_mtime).isoformat(),
            'metadata': kwargs or None,
        }
        self._append(self.lineage_path, record)
        log(f"[LINEAGE] {data_type}: {record['path']} ({record['sha256'][:12]})")
        return record

    def write_manifest(self, run_config, command):
        """Everything needed to redo the run bit-for-bit."""
        config = run_config.to_dict()
        manifest = {
            'command': command,
            'config': config,
            'config_hash': run_config.hash(),
            'seed': run_config.seed,
            'versions': package_versions(),
            'platform': platform.platform(),
            'created': datetime.now().isoformat(),
        }
        with open(self.manifest_path, 'w', encoding='utf-8') as f:
            json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        log(f"[AUDIT] Manifest written: {self.manifest_path}")
        return manifest

    # Stage bookkeeping for resumable pipelines

    def _load_stages(self):
        if not os.path.exists(self.stages_path):
            return {}
        with open(self.stages_path, 'r', encoding='utf-8') as f:
            return json.load(f)

    def stage_complete(self, name, stage_hash, outputs):
        """Mark a stage done; outputs are paths relative to the run directory."""
        stages = self._load_stages()
        stages[name] = {
            'config_hash': stage_hash,
            'outputs': {p: file_sha256(os.path.join(self.out_dir, p)) for p in outputs},
            'completed': datetime.now().isoformat(),
        }
        with open(self.stages_path, 'w', encoding='utf-8') as f:
            json.dump(stages, f, indent=2, sort_keys=True)
        self.log_event('STAGE_DONE', stage=name, outputs=list(outputs))

    def is_stage_complete(self, name, stage_hash):
        """True when the stage ran under the same hash and its outputs are unchanged on disk."""
        record = self._load_stages().get(name)
        if record is None or record.get('config_hash') != stage_hash:
            return False
        for rel_path, digest in record.get('outputs', {}).items():
            path = os.path.join(self.out_dir, rel_path)
            if not os.path.exists(path) or file_sha256(path) != digest:
                return False
        return True


def stage_hash(*parts):
    return config_hash(list(parts))
