"""Run the whole pipeline on a bundled fixture with the offline mock provider.

Run with ``python3 demos/end_to_end.py [mini-cart|book-search]``. Artifacts go
to a temporary directory; the script prints the abstraction markup, the
generated test scripts and the coverage against the fixture's feature list.
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

import visca
from visca.pipeline import PipelineConfig, run_pipeline
from visca.testgen import GroundTruth, coverage_report

FIXTURES = Path(visca.__file__).parent / "fixtures"


def main(name: str = "mini-cart") -> None:
    bundle = FIXTURES / name
    with tempfile.TemporaryDirectory() as tmp:
        result = run_pipeline(bundle, PipelineConfig(), tmp)
        print(result.artifacts["abstraction.jsx"].read_text())
        suite = json.loads(result.artifacts["suite.json"].read_text())

    names = {f["feature_id"]: f["name"] for f in suite["features"]}
    for script in suite["scripts"]:
        print(f"{script['script_id']} {names[script['feature_id']]}")
        for step in script["steps"]:
            value = f" {step['value']!r}" if step.get("value") else ""
            print(f"    {step['kind']:<14} {step['target']}{value}")

    truth = GroundTruth.load(bundle / "features.yaml")
    rep = coverage_report(list(names.values()), truth)
    print(f"\ncoverage: {rep.correct}/{rep.total} inferred features correct, {rep.covered}/{rep.truth_total} true features covered")
    print(f"model calls: {result.manifest['provider']['provider_calls']}")


if __name__ == "__main__":
    main(*sys.argv[1:])
