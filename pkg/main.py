"""
Collective QSV - Main Module

This module contains the entry point for the toolkit.
"""

import sys

from src.cli_runner import main

if __name__ == "__main__":
    sys.exit(main())
