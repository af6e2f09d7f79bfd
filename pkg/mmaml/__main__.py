from .app import main

# This file is used to make the package executable with `python -m mmaml`

if __name__ == "__main__":
    raise SystemExit(main())
