"""Main entry point for the application."""
import sys

import config  # noqa: F401  (initializes logging)
from cli import main

if __name__ == "__main__":
    sys.exit(main())
