import sys

from .cli_reports import run

if __name__ == '__main__':
    sys.exit(run())
