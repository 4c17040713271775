"""Rewrite tests/fixtures/golden_forward.json from the extended-precision reference.

Only needed if parameter initialisation or the fixture's tiny configs change.
"""

import json
import sys
from pathlib import Path

TESTS = Path(__file__).resolve().parents[1] / "tests"


def main():
    sys.path.insert(0, str(TESTS))
    import reference

    out = TESTS / "fixtures" / "golden_forward.json"
    out.write_text(json.dumps(reference.build_golden(), indent=1))
    print("wrote", out)


if __name__ == "__main__":
    main()
