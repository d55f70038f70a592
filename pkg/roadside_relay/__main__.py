"""Entry point for running roadside relay as a module."""

from .cli import main

if __name__ == "__main__":
    main()
