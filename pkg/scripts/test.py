#!/usr/bin/env python

import subprocess
import sys


def main():
    """Run the ctfair test suite with rich output formatting.

    Extra command-line arguments are passed through to pytest.
    """
    cmd = ["pytest", "--rich", *sys.argv[1:]]

    try:
        result = subprocess.run(cmd, check=True)
        sys.exit(result.returncode)
    except subprocess.CalledProcessError as e:
        sys.exit(e.returncode)


if __name__ == "__main__":
    main()
