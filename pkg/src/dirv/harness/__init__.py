"""Synthetic benchmark, file formats, configuration and command line."""
