"""Write the AER Affairs data to CSV for the optional external-data check.

Needs the ``rdatasets`` package, which is not a dependency of plrsmn::

    pip install rdatasets
    python scripts/export_affairs.py affairs.csv
    PLRSMN_AFFAIRS_CSV=affairs.csv pytest tests/test_acceptance.py -k affairs
"""

import argparse

import rdatasets


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out", help="destination CSV")
    args = ap.parse_args()
    df = rdatasets.data("AER", "Affairs")
    df.drop(columns=["rownames"], errors="ignore").to_csv(args.out, index=False)
    print(f"wrote {len(df)} rows to {args.out}")


if __name__ == "__main__":
    main()
