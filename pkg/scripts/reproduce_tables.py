"""Regenerate every published table and write one CSV per table.

Usage: python3 scripts/reproduce_tables.py [OUTDIR]
"""

import sys
from pathlib import Path

from parascope.report import csv_table
from parascope.reproduce import TABLE_IDS, reproduce


def main(argv):
    out = Path(argv[0] if argv else "tables")
    out.mkdir(parents=True, exist_ok=True)
    all_ok = True
    for table_id in TABLE_IDS:
        table = reproduce(table_id)
        (out / f"{table_id}.csv").write_text(csv_table(table.records()))
        status = "ok" if table.ok else f"{len(table.failures())} cell(s) out of tolerance"
        print(f"{table_id:9s} {status}")
        all_ok &= table.ok
    return 0 if all_ok else 2


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
