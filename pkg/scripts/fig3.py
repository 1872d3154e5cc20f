"""Budget sweep: minimum growth-rate designs at multiples of the optimal extinction cost.

Usage: python3 scripts/fig3.py [OUT_DIR]
"""

import sys
from pathlib import Path

from bilayer_epi.pipelines import Figure3Config, run_figure3


def main(out_dir="results"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = run_figure3(Figure3Config())
    (out / "fig3.csv").write_text(res.csv)
    (out / "fig3.svg").write_text(res.svg)
    print(res.csv, end="")


if __name__ == "__main__":
    main(*sys.argv[1:])
