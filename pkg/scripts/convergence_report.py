"""Run the convergence suite and write a CSV report.

    python scripts/convergence_report.py [filter] --out runs/convergence.csv
"""

import argparse
from pathlib import Path

from voxelpde.verification import report_csv, run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("filter", nargs="?", default=None)
    ap.add_argument("--out", type=Path, default=Path("runs/convergence.csv"))
    args = ap.parse_args()

    def show(res):
        flag = "ok  " if res.passed else "FAIL"
        print(f"{flag} {res.case.name:<36} {res.case.axis:<8} order {res.order:6.3f} (nominal {res.case.nominal})")

    results = run_suite(args.filter, progress=show)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    report_csv(results, args.out)
    print(f"{sum(r.passed for r in results)}/{len(results)} within tolerance, report in {args.out}")


if __name__ == "__main__":
    main()
