#!/usr/bin/env python3
"""
Main entry point for ctfair.
"""

import sys

from ctfair.cli.cli import main

if __name__ == "__main__":
    sys.exit(main())
