"""Allow `python -m choquard` as an alias for the `chq` entry point."""

import sys

from .cli import main

sys.exit(main())
