"""Regenerate the shipped dipole designs and their hypothesis reports.

    python3 demos/make_golden.py [k ...]
"""
import json
import sys
import time

from quadobs.mu_design import GOLDEN, golden_document, golden_path, solve_golden

for k in [int(a) for a in sys.argv[1:]] or sorted(GOLDEN):
    t0 = time.perf_counter()
    res = solve_golden(k)
    path = golden_path(k)
    path.write_text(json.dumps(golden_document(res), indent=2) + "\n")
    print(f"k={k}: {res.iterations} iterations, tops {res.tops}, "
          f"{time.perf_counter() - t0:.1f} s -> {path}")
