from __future__ import annotations

import json
from fractions import Fraction

import numpy as np

from cubecurrents.errors import AxiomViolation, CertificateError, GalleryOverflowError
from cubecurrents.report import CheckResult, Report, jsonable


def test_jsonable_converts_rationals_and_numpy():
    out = jsonable({"a": Fraction(3, 4), 1: (np.float64(0.5), [Fraction(2)])})
    assert out == {"a": "3/4", "1": [0.5, ["2/1"]]}
    json.dumps(out)


def test_report_collects_results():
    r = Report()
    r.add(CheckResult("x", True))
    r.extend([CheckResult("y", False, locator={"cell": 3}), CheckResult("x", True)])
    assert not r.passed
    assert r.first_failure().name == "y"
    assert len(r["x"]) == 2
    d = r.to_dict()
    assert d["passed"] is False and d["checks"][1]["locator"] == {"cell": 3}
    assert "locator" not in d["checks"][0]


def test_empty_report_passes():
    assert Report().passed and Report().first_failure() is None


def test_error_types():
    err = AxiomViolation("IGall", {"level": 1}, "fiber split")
    assert err.axiom == "IGall" and err.locator == {"level": 1}
    assert isinstance(GalleryOverflowError("x"), OverflowError)
    assert CertificateError("bad", {"NSep": False}).certificate == {"NSep": False}
