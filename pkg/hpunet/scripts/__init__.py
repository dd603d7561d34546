"""Secondary console entry points."""
