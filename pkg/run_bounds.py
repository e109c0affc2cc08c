#!/usr/bin/env python
"""
Primary entry point to run eh-bounds from a checkout.
Usage: uv run run_bounds.py <command> [--config run.json] [--set key=value] [options]

Runs the same typer application as the installed ``eh-bounds`` script,
without needing the -m module flag.
"""

from eh_bounds.__main__ import app

if __name__ == "__main__":
    app()
