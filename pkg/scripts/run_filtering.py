"""Out-of-specs fraction in the w-subset chosen from flagged batches, per method.

    python3 scripts/run_filtering.py
    python3 scripts/run_filtering.py --trials 200
"""

from ksconf.harness import FILTER_METHODS

from _common import parser, run


def main():
    args = parser(__doc__.splitlines()[0], "filtering.yaml").parse_args()
    _, report = run(args)
    rhos = sorted({r.rho for r in report.rows})
    keys = sorted({(r.m, r.alpha) for r in report.rows})
    for m, alpha in keys:
        print(f"\nm={m} alpha={alpha:g}  (diagonal = rho)")
        print(f"{'method':<20}" + "".join(f"{'rho=' + format(x, 'g'):>16}" for x in rhos))
        for method in FILTER_METHODS:
            rows = [report.rate(method, alpha, m, x) for x in rhos]
            print(f"{method:<20}" + "".join(f"{r.rate:>9.3f}±{r.stderr:.3f}" for r in rows))
        print(f"{'flagged batches':<20}" + "".join(f"{r.trials:>16}" for r in
                                                  (report.rate('random', alpha, m, x) for x in rhos)))


if __name__ == "__main__":
    main()
