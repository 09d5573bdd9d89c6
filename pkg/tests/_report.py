"""One line per acceptance criterion, printed at the end of the session."""
LINES = {}


def record(number: int, title: str, passed: bool, detail: str) -> bool:
    LINES[number] = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    print(LINES[number])
    return passed
