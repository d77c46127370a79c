"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

RESULTS = []


def record(number: int, ok: bool, detail: str) -> bool:
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append((number, line))
    print(line)
    return ok
