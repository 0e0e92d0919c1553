# main.py
import sys

from cli.app import run_cli

if __name__ == "__main__":
    sys.exit(run_cli())
