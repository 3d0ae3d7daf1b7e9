"""Rebuild macro-avg rows from per-type F1 values.

Each argument is a comma-separated list of per-type F1 scores (percent):

    python3 scripts/macro_table.py 96.2,92.0,97.1,95.7 75.9,97.2
"""

import argparse

from contract_tagger.metrics import macro_average, round_score


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("rows", nargs="+")
    args = ap.parse_args()
    for row in args.rows:
        values = [float(v) for v in row.split(",")]
        mean = macro_average(values)
        print(f"{row:<28} mean {mean:.4f} -> {round_score(mean):.1f}")


if __name__ == "__main__":
    main()
