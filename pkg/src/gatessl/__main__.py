#!/usr/bin/env python3
"""
gatessl CLI entry point.
Allows running with `python -m gatessl`
"""

import sys
from .cli.main import main

if __name__ == "__main__":
    sys.exit(main())
