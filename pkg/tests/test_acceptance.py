"""Every acceptance criterion at its stated tolerance, one summary line each."""

import pytest

from dualiscope.acceptance import CRITERIA

ORDER = {key: i for i, key in enumerate(CRITERIA)}


def _summary(key, title, reports):
    ok = all(r.verdict for r in reports)
    worst = min(float(r.worst_margin) for r in reports)
    cases = sum(r.cases for r in reports)
    line = f"criterion {key} ({title}): {'PASS' if ok else 'FAIL'} worst_margin={worst:.3g} cases={cases}"
    extra = [
        f"    {'ok  ' if r.verdict else 'FAIL'} {r.name}: worst_margin={float(r.worst_margin):.3g} "
        f"tol={r.tolerance:.1g} cases={r.cases}"
        for r in reports
    ]
    for r in reports:
        dev = r.details.get("max_deviation_from_interpolation_by_m")
        if dev:
            extra.append("    profile deviation from linear interpolation by m: "
                         + ", ".join(f"m={m}: {v:.4g}" for m, v in dev.items()))
    return ok, "\n".join([line] + extra)


@pytest.mark.parametrize("key", list(CRITERIA))
def test_criterion(key, acceptance_log):
    title, fn, _kind = CRITERIA[key]
    reports = fn()
    assert reports, "criterion produced no checks"
    ok, text = _summary(key, title, reports)
    print(text)
    acceptance_log.append((ORDER[key], text))
    failing = [r.name for r in reports if not r.verdict]
    assert ok, f"failing checks: {failing}"
