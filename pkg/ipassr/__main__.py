"""Run the command line tool with `python -m ipassr`."""

from .cli import main

raise SystemExit(main())
