"""Command-line interface for the heston-degen solver and verifiers."""
