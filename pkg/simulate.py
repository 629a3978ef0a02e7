#!/usr/bin/env python
"""Command-line utility for the sub-array energy-efficiency simulations."""
import sys

from subarray_ee.cli import main

if __name__ == "__main__":
    sys.exit(main())
