# dgrmsc.py
import sys

from mvsc.cli import main

if __name__ == "__main__":
    sys.exit(main())
