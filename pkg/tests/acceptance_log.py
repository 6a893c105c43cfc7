"""Collects one status line per acceptance criterion for the terminal summary."""
LINES = {}


def report(number, ok, detail):
    line = f"CRITERION {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES[str(number)] = line
    print(line, flush=True)
    return ok
