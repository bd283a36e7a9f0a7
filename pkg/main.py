"""Root-level entry point.

Allows running with: python main.py --config run.json
Instead of: python -m thermomem --config run.json
"""
import sys

from thermomem.cli.runner import main

if __name__ == "__main__":
    sys.exit(main())
