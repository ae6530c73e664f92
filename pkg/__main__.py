"""Forecast explainability toolkit. Run with `python . <command>`, see `python . --help`.
"""

import sys

from cli import main

if __name__ == "__main__":
    sys.exit(main())
