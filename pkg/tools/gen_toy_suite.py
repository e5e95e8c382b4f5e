"""Regenerate the bundled demo suite under src/vignattack/assets/toy.

Run from the repository root after changing anything in vignattack.toydata:

    python3 tools/gen_toy_suite.py
"""

import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from vignattack.toydata import write_toy_suite


def main() -> int:
    target = pathlib.Path(__file__).resolve().parents[1] / "src" / "vignattack" / "assets" / "toy"
    for stale in sorted(target.glob("*")) if target.exists() else []:
        stale.unlink()
    suite = write_toy_suite(target, seed=0)
    accuracy = suite.clean_accuracy()
    print(f"wrote {suite.labels.shape[0]} images to {target}")
    print(f"clean accuracy of packaged classifier: {accuracy:.3f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
