# main.py
# Local convenience entry point: `python main.py verify --level quick`.
# Same as `python cli.py ...`.

import sys

from cli import main

if __name__ == "__main__":
    sys.exit(main())
