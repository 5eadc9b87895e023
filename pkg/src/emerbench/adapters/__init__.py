"""Bundled adapter executables for the external-model protocol."""
