"""
Handles the output/display logic for the experiment harness.
Writes CSV/JSON artifacts and prints the console summaries.
"""

import hashlib
import json
from pathlib import Path

import numpy as np
import pandas as pd


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, complex | np.complexfloating):
        return {"re": float(value.real), "im": float(value.imag)}
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value


def canonical_json(data) -> str:
    return json.dumps(_jsonable(data), sort_keys=True, indent=2)


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def write_frame(frame: pd.DataFrame, out_dir: Path, name: str) -> Path:
    """CSV with full float precision so reruns compare byte for byte."""
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.csv"
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


def write_json(data, out_dir: Path, name: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{name}.json"
    path.write_text(canonical_json(data) + "\n")
    return path


def print_run_header(command: str, params) -> None:
    print("\n" + "=" * 40)
    print(f"   RUN: {command}")
    print("=" * 40)
    print(
        f"ω = {params.omega:.4g} | α = {params.alpha:.4g} | β = {params.beta:.4g} | "
        f"ε = {params.epsilon:.3g}"
    )
    print("-" * 40)


def print_summary(summary: dict) -> None:
    for key, value in summary.items():
        if isinstance(value, float):
            print(f"{key.upper():<22} {value:.6g}")
        else:
            print(f"{key.upper():<22} {value}")


def print_oracle_report(results: list) -> None:
    """One line per oracle, then the verdict."""
    if not results:
        return
    print("-" * 40)
    for r in results:
        mark = "✅" if r.passed else "❌"
        print(f"{mark} {r.name:<34} {r.value:.3e} (tol {r.tolerance:.1e})")
    failed = sum(not r.passed for r in results)
    print("-" * 40)
    if failed:
        print(f"⛔ {failed} of {len(results)} oracle checks FAILED")
    else:
        print(f"🎉 All {len(results)} oracle checks passed")


def print_artifacts(paths: list) -> None:
    print("-" * 40)
    for path in paths:
        print(f"📄 {path}")
    print("=" * 40)
