"""Collects acceptance-criterion outcomes for the end-of-run summary."""

lines: list[str] = []


def report(name, passed, detail=""):
    line = f"{name}: {'PASS' if passed else 'FAIL'} {detail}"
    lines.append(line)
    print(line)
    assert passed, f"{name}: {detail}"
