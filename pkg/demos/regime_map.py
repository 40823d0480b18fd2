"""Map the voice regimes over the pressure x tension plane as ASCII art.

Legend: . silent, o periodic, 8 period-doubled, # aperiodic/unstable.

    python3 demos/regime_map.py [n_pressures n_tensions]
"""
import sys

import numpy as np

from warble import default_config, stability_scan

GLYPH = {"silent": ".", "periodic": "o", "period-doubled": "8",
         "aperiodic": "#"}


def main():
    np_, nt = (int(sys.argv[1]), int(sys.argv[2])) if len(sys.argv) > 2 \
        else (9, 13)
    pressures = np.linspace(0.0, 700.0, np_)
    tensions = np.linspace(0.4, 2.2, nt)
    print(f"scanning {np_} x {nt} cells ...")
    labels, flags = stability_scan(default_config().syrinx,
                                   pressures, tensions, seconds=0.8,
                                   discard=0.4)

    rows = []
    i = 0
    for p in pressures:
        row = ""
        for _t in tensions:
            row += GLYPH[labels[i]]
            i += 1
        rows.append((p, row))
    # high pressure on top reads like a phase diagram
    print()
    print("  p[Pa]  tension " +
          f"{tensions[0]:.1f} {'-' * (nt - 8)} {tensions[-1]:.1f}")
    for p, row in reversed(rows):
        print(f"  {p:5.0f}  {row}")
    print()
    n_unstable = sum(flags)
    print(f"{n_unstable} unstable cell(s)" if n_unstable
          else "no unstable cells in this range")


if __name__ == "__main__":
    main()
