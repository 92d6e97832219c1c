"""Command-line entry point: ``finmlm <subcommand>``."""
