"""The arccos(p/q)/sqrt(q^2 - p^2) boundary agrees with the correct one only at the Hopf point.

Runs the discrepancy report over a family that actually loses stability
and prints the rows with the largest gaps.
"""
import csv
import io

from cml_stability.cli import cmd_legacy_diff
from cml_stability.model import Parameters

params = Parameters(1.77, 3.0, 0.05, 0.2, 1.0)
buf = io.StringIO()
cmd_legacy_diff(params, 0.1, 2.9, 15, out=buf)
lines = buf.getvalue().splitlines()
rows = list(csv.DictReader(line for line in lines if not line.startswith("#")))
for row in rows:
    gap = float(row["rel_gap"]) if row["rel_gap"] else float("nan")
    print(f"r={float(row['r']):.6f}  correct={row['correct'][:10]:>10}  legacy={row['legacy'][:10]:>10}  "
          f"gap={gap:.2e}  {row['verdict']}")
print("\n".join(line for line in lines if line.startswith("#")))
