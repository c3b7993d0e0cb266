"""Detection rate as a function of the out-of-specs mixture proportion.

    python3 scripts/run_tpr.py
    python3 scripts/run_tpr.py --config scripts/configs/tpr_confident.yaml
"""

from _common import parser, run


def main():
    args = parser(__doc__.splitlines()[0], "tpr.yaml").parse_args()
    cfg, report = run(args)
    rhos = sorted({r.rho for r in report.rows})
    keys = sorted({(r.m, r.alpha) for r in report.rows})
    for m, alpha in keys:
        print(f"\nm={m} alpha={alpha:g}")
        print(f"{'test':<14}" + "".join(f"{'rho=' + format(x, 'g'):>10}" for x in rhos))
        for t in cfg.get("tests", ["ksconf"]):
            cells = [report.rate(t, alpha, m, x).rate for x in rhos]
            print(f"{t:<14}" + "".join(f"{c:>10.3f}" for c in cells))


if __name__ == "__main__":
    main()
