"""Entry point for python -m kbnav."""

import kbnav.cli

if __name__ == "__main__":
    kbnav.cli.main()
