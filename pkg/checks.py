#!/usr/bin/env python3
"""
CHECK SUITE
Numerical checks of an experiment run - ERROR fails the run, WARNING and INFO are reported
"""

import math
from typing import Any, Dict


SEVERITIES = ('ERROR', 'WARNING', 'INFO')

_BUCKETS = {
    'ERROR': ('errors', 'error_count'),
    'WARNING': ('warnings', 'warning_count'),
    'INFO': ('info', 'info_count'),
}


class CheckSuite:
    """
    Collects the outcome of every check in a run.

    results is shaped like
        {
            'valid': True/False,
            'error_count': int, 'warning_count': int, 'info_count': int,
            'errors': [...], 'warnings': [...], 'info': [...],
            'passed': [...],
            'summary': {...}
        }
    and `valid` turns False on the first failed ERROR-severity check.
    """

    def __init__(self, name, audit=None):
        self.name = name
        self.audit = audit
        self.results = {
            'valid': True,
            'error_count': 0,
            'warning_count': 0,
            'info_count': 0,
            'errors': [],
            'warnings': [],
            'info': [],
            'passed': [],
            'summary': {},
        }

    def check(self, name, passed, message, actual=None, expected=None, severity='ERROR'):
        """Record one check; returns passed so callers can branch on it."""
        if severity not in SEVERITIES:
            raise ValueError(f"Unknown severity {severity!r}")
        record = {
            'check': name,
            'severity': severity,
            'message': message,
            'actual_value': _plain(actual),
            'expected_value': _plain(expected),
        }
        if passed:
            self.results['passed'].append(record)
        else:
            key, counter = _BUCKETS[severity]
            self.results[key].append(record)
            self.results[counter] += 1
            if severity == 'ERROR':
                self.results['valid'] = False
        status = "✅" if passed else {"ERROR": "❌", "WARNING": "⚠️ ", "INFO": "ℹ️ "}[severity]
        print(f"[CHECKS] {status} {name}: {message}")
        if self.audit is not None:
            self.audit.log_event('CHECK', success=bool(passed) or severity != 'ERROR',
                                 error_message=None if passed else message,
                                 check=name, severity=severity,
                                 actual=_plain(actual), expected=_plain(expected))
        return bool(passed)

    def check_max(self, name, actual, limit, label=None, severity='ERROR'):
        """actual <= limit (NaN fails)."""
        label = label or name
        passed = actual is not None and not _is_nan(actual) and actual <= limit
        return self.check(name, passed, f"{label} = {_fmt(actual)} (limit {_fmt(limit)})",
                          actual, f"<= {limit}", severity)

    def check_min(self, name, actual, limit, label=None, severity='ERROR'):
        label = label or name
        passed = actual is not None and not _is_nan(actual) and actual >= limit
        return self.check(name, passed, f"{label} = {_fmt(actual)} (minimum {_fmt(limit)})",
                          actual, f">= {limit}", severity)

    def check_range(self, name, actual, lo, hi, label=None, severity='ERROR'):
        label = label or name
        passed = actual is not None and not _is_nan(actual) and lo <= actual <= hi
        return self.check(name, passed, f"{label} = {_fmt(actual)} (range [{_fmt(lo)}, {_fmt(hi)}])",
                          actual, f"[{lo}, {hi}]", severity)

    def info(self, name, message, actual=None):
        """Recorded value, no pass/fail meaning."""
        self.results['info'].append({'check': name, 'severity': 'INFO', 'message': message,
                                     'actual_value': _plain(actual), 'expected_value': None})
        self.results['info_count'] += 1
        print(f"[CHECKS] ℹ️  {name}: {message}")

    def summarize(self, **summary) -> Dict[str, Any]:
        """Print the banner summary and return the results dict."""
        self.results['summary'].update({k: _plain(v) for k, v in summary.items()})
        results = self.results
        print("\n" + "=" * 80)
        print(f"CHECK RESULTS - {self.name}")
        print("=" * 80)
        print(f"Passed:   {len(results['passed'])}")
        print(f"Errors:   {results['error_count']}")
        print(f"Warnings: {results['warning_count']}")
        print(f"Info:     {results['info_count']}")
        if results['error_count'] > 0:
            print("\n❌ CHECKS FAILED")
            for err in results['errors'][:10]:
                print(f"  - {err['check']}: {err['message']}")
            if len(results['errors']) > 10:
                print(f"  ... and {len(results['errors']) - 10} more failures")
        else:
            print("\n✅ ALL CHECKS PASSED")
        if results['warning_count'] > 0:
            print(f"\n⚠️  {results['warning_count']} warnings")
        print("=" * 80 + "\n")
        return results


def _is_nan(value):
    return isinstance(value, float) and math.isnan(value)


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _plain(value):
    """JSON-friendly copy of numpy scalars and arrays."""
    if value is None or isinstance(value, (bool, int, float, str)):
        return value
    if hasattr(value, 'tolist'):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return str(value)
