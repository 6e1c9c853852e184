"""Coherence report: prequential additivity and order coherence checks."""
from __future__ import annotations

from pathlib import Path

from ..coherence import run_suite
from .config import CoherenceSettings, as_dict
from .io import write_json


def run_coherence(s: CoherenceSettings, out) -> dict:
    """Write ``coherence_report.json``; the report's ``passed`` flag drives the exit code."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_suite(n_models=s.n_models, seed=s.seed, eta=s.eta, delta=s.delta, gamma=s.gamma,
                       tol=s.tolerance, witness_tol=s.witness_tolerance,
                       inject_mismatch=s.inject_mismatch)
    report["settings"] = as_dict(s)
    write_json(out / "coherence_report.json", report)
    return report
