"""False-positive rates on within-specs batches, with the 3-sigma binomial band.

    python3 scripts/run_fpr.py
    python3 scripts/run_fpr.py --config scripts/configs/chi2_labels.yaml
"""

import math

from _common import parser, run


def main():
    args = parser(__doc__.splitlines()[0], "fpr.yaml").parse_args()
    _, report = run(args)
    print(f"{'test':<14}{'alpha':>8}{'m':>6}{'fpr':>9}{'band':>18}  ok")
    for r in report.rows:
        half = 3 * math.sqrt(r.alpha * (1 - r.alpha) / r.trials)
        lo, hi = r.alpha - half, r.alpha + half
        ok = "yes" if lo <= r.rate <= hi else "NO"
        print(f"{r.test:<14}{r.alpha:>8g}{r.m:>6}{r.rate:>9.4f}   [{max(lo, 0):.4f}, {hi:.4f}]  {ok}")


if __name__ == "__main__":
    main()
